#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fids/discrete_operator.hpp"
#include "fids/subordination.hpp"

namespace fids {

enum class WalkMode { Free, Reflected, Killed };
std::string to_string(WalkMode m);

struct WalkConfig {
    int M = 1, n = 3;
    double t = 1;       // level-M time units
    int paths = 10000;
    std::uint64_t seed = 1;
    std::optional<double> stable_exponent; // time change by an a-stable subordinator
    int batches = 20;
    int threads = 1;
    void validate() const;
};

struct WalkPath {
    std::vector<int> states; // sampler states visited
    std::vector<double> times; // jump epochs, times[0] = 0
    bool dead = false;    // killed
    bool escaped = false; // free walk hit an outer corner of its region
};

// Continuous-time walk uniformized at rate c * tau^{n-M}: every epoch of a
// Poisson clock moves along one row of the jump matrix (self-loops allowed).
class WalkSampler {
public:
    WalkMode mode() const { return m_mode; }
    int size() const { return static_cast<int>(m_vertex.size()); }
    double rate() const { return m_rate; }
    int lattice_vertex(int state) const { return m_vertex[state]; }
    int state_of(int lattice_vertex) const;
    const Eigen::VectorXd& weights() const { return m_weights; }
    double total_mass() const { return m_mass; }

    // destination for a uniform u in [0,1); -1 is death
    int step(int state, double u) const;
    double jump_prob(int from, int to) const;
    WalkPath sample(std::mt19937_64& g, int start, double t) const;

    // reflected/killed walk of a built operator
    static WalkSampler from_operator(const DiscreteLaplacian& L);
    // uniform-neighbour walk on the whole lattice; the outer corners other
    // than the origin end the path as escaped
    static WalkSampler free_walk(const LatticeGraph& g);

private:
    WalkMode m_mode = WalkMode::Reflected;
    double m_rate = 0;
    std::vector<int> m_vertex;
    std::vector<int> m_state; // lattice vertex -> state, -1 if absent
    std::vector<std::vector<std::pair<int, double>>> m_rows; // (to, cumulative)
    std::vector<char> m_escape;
    Eigen::VectorXd m_weights;
    double m_mass = 0;
};

// Neumann needs the folding of order M (MissingFolding otherwise)
WalkSampler simulate_walk(const WalkConfig& cfg, const LatticeGraph& lattice, WalkMode mode,
                          const FoldingMap* fold = nullptr);

struct TraceEstimate {
    double mean = 0, stderr_ = 0;
    int paths = 0, batches = 0;
    WalkMode mode = WalkMode::Reflected;
    bool with_potential = false;
    std::vector<double> batch_means;
    nlohmann::json to_json() const;
};

// (1/N^M) Tr exp(-t (phi(-L) + V)) from measure-weighted starts and the
// conditional return probability of the last jump. V is indexed by sampler
// state (empty for V = 0).
TraceEstimate estimate_trace(const WalkSampler& walk, const WalkConfig& cfg,
                             const BernsteinFunction& phi, const Eigen::VectorXd& V = {});

// spectral value of the same quantity
double spectral_trace(const SpectrumBundle& sb, const BernsteinFunction& phi, const Eigen::VectorXd& V,
                      double t);

// S_t of the a-stable subordinator, E exp(-lambda S_t) = exp(-t lambda^a)
double sample_stable_subordinator(double a, double t, std::mt19937_64& g);
double sample_stable_subordinator(double a, double t, std::uint64_t seed);

struct LaplaceRow {
    double lambda = 0, mean = 0, se = 0, exact = 0, z = 0;
};
std::vector<LaplaceRow> stable_laplace_check(double a, double t, const std::vector<double>& lambdas,
                                             int draws, std::uint64_t seed);

// two-sample Kolmogorov-Smirnov statistic and its asymptotic p-value
double ks_statistic(std::vector<double> a, std::vector<double> b);
double ks_pvalue(double D, std::size_t n, std::size_t m);

// chi-square homogeneity of two count vectors; returns (statistic, dof, p)
struct ChiSquare {
    double statistic = 0;
    int dof = 0;
    double p_value = 1;
};
ChiSquare chi_square_homogeneity(const std::vector<long>& a, const std::vector<long>& b);

struct FoldReport {
    int paths = 0, escaped = 0, cells = 0;
    ChiSquare chi2;
    bool pass = false;
    nlohmann::json to_json() const;
};

// end points of pi_M(free walk on K^<M+R>) against the reflected walk on K^<M>
FoldReport folded_walk_invariance(std::shared_ptr<const FractalSpec> spec, int M, int n, double t,
                                  int paths, std::uint64_t seed, int R = 3);

} // namespace fids
