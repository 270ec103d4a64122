#pragma once

#include <boost/rational.hpp>

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fids/geometry.hpp"
#include "fids/labeling.hpp"

namespace fids {

using Rational = boost::rational<std::int64_t>;

enum class Boundary { Dirichlet, Neumann };
std::string to_string(Boundary b);
Boundary boundary_from_string(const std::string& s);

struct VertexMeasure {
    std::vector<Rational> weights; // per lattice vertex
    Rational total_mass;
    Eigen::VectorXd as_double() const;
};

VertexMeasure build_measure(const LatticeGraph& lattice);

// Generator of the walk that jumps to a uniformly chosen neighbour at rate
// c = (k-1)*r_0 (gasket: 4). Neumann folds the walk on K^<M+1> back through
// pi_M; Dirichlet drops the outer corners V_M^<M> (killing). The stored
// matrix is the pre-renormalization generator; multiply by `renorm` =
// tau^{n-M} for level-M time units.
struct DiscreteLaplacian {
    Boundary boundary = Boundary::Neumann;
    int M = 0, n = 0;
    std::vector<int> vertices;  // lattice vertex of each row
    Eigen::MatrixXd generator;  // G, rows sum to 0 (Neumann) or <= 0 (Dirichlet)
    Eigen::MatrixXd jump;       // jump chain P (substochastic for Dirichlet)
    Eigen::VectorXd weights;    // measure of each row's vertex
    double rate = 0;            // c
    double renorm = 1;          // tau^{n-M}
    std::string spec_hash;
    double total_mass = 0;      // N^M
};

DiscreteLaplacian build_laplacian(const LatticeGraph& lattice, const VertexMeasure& measure,
                                  Boundary boundary, const FoldingMap* fold = nullptr);

void set_dense_cap(int dim);
int dense_cap();

struct SpectrumBundle {
    Boundary boundary = Boundary::Neumann;
    int M = 0, n = 0;
    std::string spec_hash;
    std::vector<int> vertices;
    Eigen::VectorXd combinatorial; // eigenvalues of -G
    Eigen::VectorXd mu;            // renormalized eigenvalues renorm * combinatorial
    Eigen::MatrixXd psi;           // columns orthonormal in the weighted inner product
    Eigen::VectorXd weights;
    double renorm = 1;
    double total_mass = 0;
    double max_residual = 0;

    int size() const { return static_cast<int>(mu.size()); }
    // orthonormal eigenvectors in the symmetric coordinates W^{1/2} psi
    Eigen::MatrixXd symmetric_vectors() const;
};

SpectrumBundle eigendecompose(const DiscreteLaplacian& L, bool vectors = true);

// convenience: lattice (M, n) of the spec, measure, operator, spectrum
SpectrumBundle spectrum_of(std::shared_ptr<const FractalSpec> spec, int M, int n, Boundary b,
                           bool vectors = true);

// Continuum renormalization of a pre-renormalization eigenvalue through the
// registered decimation map R: lim_m tau^m R_-^m(x), with R_- the branch
// through 0. Returns nullopt when no map is registered or x is off the branch.
std::optional<double> continuum_limit(const FractalSpec& spec, double x);
double decimation_map(const FractalSpec& spec, double x);

struct ScalingReport {
    int M1 = 0, M2 = 0, n1 = 0, n2 = 0, K = 0;
    double walk_dim = 0;             // log tau / log L
    double raw_deviation = 0;        // linear tau-rescaling of discrete eigenvalues
    double renormalized_deviation = 0;  // continuum-renormalized eigenvalues
    bool renormalized_available = false;
    std::vector<double> raw_lhs, raw_rhs, ren_lhs, ren_rhs;
};

// Compares eigenvalue k of (M1, n) with (M2, n + M2 - M1) after scaling the
// latter by tau^{M2-M1}, over the lowest K Neumann eigenvalues.
ScalingReport eigenvalue_scaling_check(std::shared_ptr<const FractalSpec> spec, int n, int M1,
                                       int M2, int K = 10);

// On-disk cache keyed by (spec hash, M, n, boundary), in $FRACTAL_IDS_CACHE
// when set. Stores eigenvalues only unless vectors are requested.
std::optional<std::string> cache_dir();
SpectrumBundle cached_spectrum(std::shared_ptr<const FractalSpec> spec, int M, int n, Boundary b,
                               bool vectors, bool* hit = nullptr);

} // namespace fids
