#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fids/geometry.hpp"
#include "fids/labeling.hpp"

namespace fids {

// Level of the smallest complex holding both vertices of g (may be negative
// below the 0-cells). containment_level clamps at 0, i.e. f(x,v).
int common_level(const LatticeGraph& g, int x, int v);
int containment_level(const LatticeGraph& g, int x, int v);

// true when x is a vertex of some 0-cell
bool in_V0(const FractalSpec& s, const VertexId& x);

// W(x,v) as a function of f = f(x,v)
struct SingleSiteProfile {
    enum class Kind { Hierarchical, Gasket4Pow, FiniteRange, User };
    Kind kind = Kind::Gasket4Pow;
    double c = 2;                  // hierarchical decay N^{-c f}
    std::vector<double> table;     // value per f (hierarchical override, finite range, user)
    bool zero_at_vertices = false; // W(x, .) = 0 for x in V_0
    int M0 = -1;                   // finite range
    double tail_decay = 0;         // user: W <= tail_decay^f beyond the table
    std::optional<double> A0;      // (W5) claim
    std::optional<int> m1;

    static SingleSiteProfile hierarchical(double c, bool zero_at_vertices);
    static SingleSiteProfile gasket_4pow();
    static SingleSiteProfile finite_range(int M0, std::vector<double> table);

    double value(int f, bool x_in_V0, int N) const;
    // b with W <= b^f for all f (0 for finite range)
    double decay(int N) const;
    bool finite() const { return kind == Kind::FiniteRange; }
    std::string name() const;
    nlohmann::json to_json() const;
    static SingleSiteProfile from_json(const nlohmann::json& j);
    void validate(int N) const;
};

double eval_profile(const SingleSiteProfile& W, const LatticeGraph& g, int x, int v);

struct DisorderLaw {
    enum class Kind { Bernoulli, Uniform, Exponential, User };
    Kind kind = Kind::Bernoulli;
    double p0 = 0.5, a = 1;  // bernoulli: P(0) = p0, else a
    double b = 1;            // uniform(0, b)
    double rate = 1;         // exponential
    std::vector<std::pair<double, double>> cdf_table; // user: (x, F(x)), F nondecreasing, ends at 1

    static DisorderLaw bernoulli(double p0, double a);
    static DisorderLaw uniform(double b);
    static DisorderLaw exponential(double rate);
    static DisorderLaw user(std::vector<std::pair<double, double>> cdf);

    double sample(std::mt19937_64& g) const;
    double cdf(double x) const;
    double mean() const;
    double variance() const;
    double sup() const; // +inf when unbounded
    bool nondegenerate() const;
    // (Q1): nonnegative, nondegenerate, finite mean
    bool check_Q1() const;
    // (Q2): F > 0 on (0, lambda0] and continuous there (atom at 0 allowed), grid check
    bool check_Q2(double lambda0, int points = 1000) const;
    std::string name() const;
    nlohmann::json to_json() const;
    static DisorderLaw from_json(const nlohmann::json& j);
};

// one xi per 0-level vertex of `sites` (a lattice of mesh 0), drawn from the
// stream keyed by (seed, canonical node)
struct DisorderSample {
    std::uint64_t seed = 0;
    std::shared_ptr<const LatticeGraph> sites;
    std::vector<double> xi;
    double at(const VertexId& v) const;
    std::string to_csv() const;
};

DisorderSample sample_disorder(const DisorderLaw& law, std::shared_ptr<const LatticeGraph> sites,
                               std::uint64_t seed);

enum class FieldMode { Free, Periodized };
std::string to_string(FieldMode m);

// W(x, v') for x in the lattice (M, n) and v' in V_0 of K^<M+1>; with the
// folding of order M for the periodized field.
struct PotentialKernel {
    int M = 0, n = 0;
    SingleSiteProfile profile;
    std::shared_ptr<const LatticeGraph> lattice;  // (M, n)
    std::shared_ptr<const LatticeGraph> sites;    // (M+1, M+1)
    Eigen::SparseMatrix<double, Eigen::RowMajor> W;
    std::vector<int> image;       // site -> site of pi_M(site)
    double tail_coeff = 0;        // tail <= sup(xi) * tail_coeff
    bool exact = false;
};

PotentialKernel build_kernel(std::shared_ptr<const FractalSpec> spec, int M, int n,
                             const SingleSiteProfile& W);

// potential on every vertex of kernel.lattice; tail bound written when asked
Eigen::VectorXd potential_field(const PotentialKernel& k, const DisorderSample& xi, FieldMode mode,
                                double* tail_bound = nullptr);
double field_value(const PotentialKernel& k, const DisorderSample& xi, int x, FieldMode mode);

// brute-force evaluation over a larger region, used to check truncation
double field_value_region(const SingleSiteProfile& W, const LatticeGraph& region_fine,
                          const VertexId& x, const std::vector<std::pair<VertexId, double>>& sites);

struct WReport {
    int Mmax = 0;
    bool w1 = false, w2 = false, w3 = false;
    std::optional<bool> w4, w5;
    std::vector<double> w1_partial_sums; // sum of a_v over V_0 of K^<m>
    double w1_ratio = 0;                 // fitted increment ratio
    bool w2_equality = false;            // equality at every tested point
    int w2_strict = 0;                   // points with strict inequality
    double w2_max_violation = 0;
    std::string w2_witness;
    std::vector<double> w3_terms;        // sup_x tail sum outside C_q(x), q = 0..
    double w3_rate = 0;
    double w3_partial_sum = 0;
    std::string w5_witness;
    nlohmann::json to_json() const;
};

WReport verify_W_conditions(std::shared_ptr<const FractalSpec> spec, const SingleSiteProfile& W,
                            int Mmax = 4);

} // namespace fids
