#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fids/discrete_operator.hpp"
#include "fids/random_potential.hpp"
#include "fids/subordination.hpp"

namespace fids {

// Normalized eigenvalue counting function, N(lambda) = #{lambda_k <= lambda} / mass
struct CountingMeasure {
    Boundary boundary = Boundary::Neumann;
    int M = 0;
    std::vector<double> eigenvalues; // ascending
    double normalization = 1;        // N^M

    double operator()(double lambda) const;
    std::size_t count(double lambda) const;
};

CountingMeasure counting_measure(const Eigen::VectorXd& eigenvalues, int M, Boundary b,
                                 double normalization);

// (1/mass) sum exp(-t lambda_k), evaluated as exp(-t lambda_1) * sum exp(-t (lambda_k - lambda_1))
double laplace_value(const CountingMeasure& cm, double t);

struct LaplaceCurve {
    std::vector<double> t;
    std::vector<double> mean, var;
    int count = 0;
    // positive, nonincreasing, convex on the grid
    bool completely_monotone(double tol = 1e-10) const;
};

LaplaceCurve laplace_transform(const CountingMeasure& cm, const std::vector<double>& t_grid);

std::vector<double> geometric_grid(double lo, double hi, int per_decade);

// ---------------------------------------------------------------- gates

struct GateReport {
    bool ok = true;
    std::vector<std::string> failures;
    nlohmann::json details;
};

// ---------------------------------------------------------------- ensembles

struct EnsembleConfig {
    std::shared_ptr<const FractalSpec> spec;
    std::vector<int> Ms{1};
    int depth_offset = 2; // n = M + depth_offset
    BernsteinFunction phi;
    SingleSiteProfile profile = SingleSiteProfile::finite_range(1, {1, 0.25});
    DisorderLaw law;
    bool zero_potential = false;
    int samples = 8;
    std::uint64_t seed = 1;
    std::vector<double> t_grid;
    std::vector<double> lambda_grid;
    // (boundary, field) pairs to compute; Neumann/periodized is the series of
    // the monotone limit, Dirichlet and Neumann with the free field give the gap
    std::vector<std::pair<Boundary, FieldMode>> series{{Boundary::Neumann, FieldMode::Periodized},
                                                      {Boundary::Neumann, FieldMode::Free},
                                                      {Boundary::Dirichlet, FieldMode::Free}};
    int threads = 1;
    bool check_gates = true;
    int w_levels = 2;     // depth of the (W) proxy checks
    double lambda0 = 0.5; // (Q2) window (0, lambda0]
};

std::uint64_t sample_seed(std::uint64_t base, int s);

GateReport run_gates(const EnsembleConfig& cfg);

struct EnsembleSeries {
    int M = 0, n = 0;
    Boundary boundary = Boundary::Neumann;
    FieldMode mode = FieldMode::Periodized;
    std::vector<std::uint64_t> seeds;
    std::vector<std::vector<double>> eigenvalues; // per sample, ascending
    std::vector<std::vector<double>> laplace;     // per sample on t_grid
    std::vector<std::vector<double>> counting;    // per sample on lambda_grid
    std::vector<double> laplace_mean, laplace_var, counting_mean, counting_var;
    double normalization = 1;
    int samples() const { return static_cast<int>(seeds.size()); }
};

struct EnsembleResult {
    std::vector<double> t_grid, lambda_grid;
    std::vector<EnsembleSeries> series;
    GateReport gates;

    const EnsembleSeries& get(int M, Boundary b, FieldMode mode) const;
    const EnsembleSeries* find(int M, Boundary b, FieldMode mode) const;
    // mean Neumann/periodized Lambda per M and t, with Cauchy differences
    nlohmann::json convergence_table() const;
};

// runs gates (GateFailure on violation), then samples x M x series
EnsembleResult ensemble_run(const EnsembleConfig& cfg);

// the H eigenvalues of a single (M, sample, boundary, field) instance
Eigen::VectorXd instance_eigenvalues(const EnsembleConfig& cfg, int M, Boundary b, FieldMode mode,
                                     std::uint64_t seed);

struct MonotonicityRow {
    int M = 0;
    double t = 0, upper = 0, lower = 0, pooled_se = 0;
    bool ok = false;
};

// mean Lambda_{M+1} <= mean Lambda_M + z * pooled SE, consecutive M, every grid t
std::vector<MonotonicityRow> monotonicity_check(const EnsembleResult& r, double z = 2,
                                                Boundary b = Boundary::Neumann,
                                                FieldMode mode = FieldMode::Periodized);

struct GapRow {
    int M = 0;
    double t = 0, mean_sq_gap = 0, se = 0;
};

// E (Lambda^D - Lambda^N)^2 at grid point t for every M (same field)
std::vector<GapRow> dn_gap(const EnsembleResult& r, double t, FieldMode mode = FieldMode::Free);

struct OrderingReport {
    int instances = 0, violations = 0;
    double worst = 0; // largest lambda^N_k - lambda^D_k or Lambda^D - Lambda^N
};

// lambda_k^D >= lambda_k^N for every k, and Lambda^D <= Lambda^N on the grid
OrderingReport ordering_check(const EnsembleResult& r, FieldMode mode = FieldMode::Free,
                              double tol = 1e-9);

// Bernoulli disorder, periodized field, Neumann: multiple importance sampling
// for the small-lambda tail. Component 0 is the law itself; every other
// component raises P(xi = 0) to `tilt` on the sites of one m-cell of K^<M>.
// Sample s uses component s mod J (deterministic allocation) and carries the
// balance-heuristic weight p / sum_j Q_j / J, so weighted means are unbiased.
struct TiltedConfig {
    std::shared_ptr<const FractalSpec> spec;
    int M = 3, depth_offset = 1;
    BernsteinFunction phi;
    SingleSiteProfile profile = SingleSiteProfile::finite_range(1, {1, 0.25});
    DisorderLaw law;
    std::vector<int> levels; // cell levels m; empty = 1..M
    std::vector<double> tilts{0.9, 0.99};
    int samples = 1000;
    std::uint64_t seed = 1;
    std::vector<double> t_grid, lambda_grid;
    int threads = 1;
};

struct TiltedEnsemble {
    int M = 0, n = 0, samples = 0, components = 0;
    std::vector<double> t_grid, lambda_grid;
    std::vector<double> counting_mean, counting_se, laplace_mean, laplace_se;
    double ess = 0; // (sum w)^2 / sum w^2
    nlohmann::json to_json() const;
};

TiltedEnsemble tilted_ensemble(const TiltedConfig& cfg);

// ---------------------------------------------------------------- rate functions

struct Mu21Estimate {
    std::vector<int> depths;
    std::vector<double> discrete; // renormalized second Neumann eigenvalue of K^<1>
    double value = 0;             // extrapolated
    double lo = 0, hi = 0;        // interval from the extrapolation residual
    std::string method;
};

Mu21Estimate estimate_mu21(std::shared_ptr<const FractalSpec> spec, int n_max);

struct RateFunctions {
    DisorderLaw law;
    double d = 0, d_w = 0, alpha = 0, L = 2;
    double C1 = 1, C1_tilde = 1, mu21 = 1;
    double A0 = 1, C0 = 1;
    int r0 = 1, m1 = -1;
    double D0 = 0, D0_lo = 0, D0_hi = 0;
    double lambda0 = 1;
    double t0 = 0;

    double g(double x) const; // log 1 / F(D0 / x)
    double j(double x) const; // x^{d+alpha} g(x^alpha)
    double x_t(double t) const;
    double h(double t) const; // g(x_t^alpha)
    nlohmann::json to_json() const;
};

// D0 = C1~ / (4 A0 C0 r0) with C1~ = C1 mu21^{alpha/d_w}
double D0_formula(double C1_tilde, double A0, double C0, int r0);

RateFunctions rate_functions(const DisorderLaw& law, double A0, int m1, const FractalSpec& spec,
                             double alpha, double C1, const Mu21Estimate& mu21,
                             double lambda0 = 1);

// least M >= 0 with C1~ L^{-M alpha} <= phi(mu21 L^{-M d_w})
int compute_M2(const RateFunctions& rate, const BernsteinFunction& phi, int Mmax = 30);

// Temple: lambda_1 >= <psi,H psi> - (|H psi|^2 - <psi,H psi>^2) / (mu - <psi,H psi>)
double temple_lower_bound(const Eigen::MatrixXd& H, const Eigen::VectorXd& psi, double mu);

struct TempleReport {
    int M = 0, M2 = 0;
    std::uint64_t seed = 0;
    double lhs = 0, rhs = 0, margin = 0;
    double v_integral = 0, v2_integral = 0; // of the truncated field
    double lambda2 = 0;                     // phi(mu_2) of the free operator
    double truncation = 0;                  // D0 / L^{M alpha}
    bool temple_condition = false;          // <psi,H psi> < lambda2
    nlohmann::json to_json() const;
};

// LHS from the periodized field on the Neumann spectrum sb; RHS from the
// truncated field A0 * sum xi~_v 1_{C_m1(v)}
TempleReport temple_check(const SpectrumBundle& sb, const PotentialKernel& kernel,
                          const DisorderSample& xi, const BernsteinFunction& phi,
                          const RateFunctions& rate, int M2);

// ---------------------------------------------------------------- Lifschitz

struct LifschitzReport {
    double lambda_lo = 0, lambda_hi = 0, R = 0;
    std::vector<double> lambdas, r;
    std::vector<double> ts, s;
    double r_min = 0, r_max = 0, s_min = 0, s_max = 0;
    double r_slope = 0; // d log|r| / d log lambda
    double epsilon = 0, floor = 0;
    std::string verdict; // "lifschitz-band", "no-tail" or "inconclusive"
    nlohmann::json to_json() const;
};

// default window: the decade below the largest grid lambda with 0 < N <= cap
// and g(R / lambda) > 0
std::pair<double, double> auto_window(const std::vector<double>& lambda_grid,
                                      const std::vector<double>& N_mean, const RateFunctions& rate,
                                      double cap = 0.01, std::optional<double> R = std::nullopt);

LifschitzReport lifschitz_fit(const std::vector<double>& lambda_grid, const std::vector<double>& N_mean,
                              const std::vector<double>& t_grid, const std::vector<double>& Lambda_mean,
                              const RateFunctions& rate, std::pair<double, double> window,
                              std::optional<double> R = std::nullopt,
                              std::pair<double, double> t_window = {10, 1e3});

// ---------------------------------------------------------------- Bernstein

double bernstein_bound(int n, double p, double gamma);

struct BernsteinCell {
    int n = 0;
    double p = 0, gamma = 0, empirical = 0, bound = 0, sigma = 0;
    bool ok = false;
};

struct BernsteinReport {
    int draws = 0;
    std::vector<BernsteinCell> cells;
    bool ok = true;
    nlohmann::json to_json() const;
};

BernsteinReport bernstein_check(const std::vector<int>& ns, const std::vector<double>& ps,
                                const std::vector<double>& gammas, int draws, std::uint64_t seed);

} // namespace fids
