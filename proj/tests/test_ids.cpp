#include <doctest.h>

#include <boost/math/distributions/binomial.hpp>

#include <cmath>

#include "fids/errors.hpp"
#include "fids/ids_analysis.hpp"

using namespace fids;

namespace {

EnsembleConfig small_config()
{
    EnsembleConfig c;
    c.spec = preset_spec("gasket");
    c.profile = SingleSiteProfile::finite_range(1, {1, 0.25});
    c.profile.A0 = 0.5;
    c.profile.m1 = -1;
    c.law = DisorderLaw::bernoulli(0.5, 1);
    c.Ms = {1, 2};
    c.depth_offset = 2;
    c.samples = 6;
    c.seed = 99;
    c.t_grid = geometric_grid(0.1, 100, 3);
    c.lambda_grid = geometric_grid(1e-2, 100, 5);
    return c;
}

} // namespace

TEST_CASE("counting measure and Laplace transform")
{
    Eigen::VectorXd ev(3);
    ev << 0, 1, 2;
    auto cm = counting_measure(ev, 1, Boundary::Neumann, 3);
    CHECK(cm(1.5) == doctest::Approx(2.0 / 3));
    CHECK(cm(-1) == 0);
    CHECK(cm(1) == doctest::Approx(2.0 / 3)); // right-continuous
    CHECK(cm(1e9) == doctest::Approx(1));

    Eigen::VectorXd two(2);
    two << 0, 1;
    auto c2 = counting_measure(two, 0, Boundary::Neumann, 1);
    for (double t : {0.1, 1.0, 7.0})
        CHECK(laplace_value(c2, t) == doctest::Approx(1 + std::exp(-t)));
    CHECK(laplace_value(c2, 1e-12) == doctest::Approx(2));

    // shift keeps large t finite relative to exp(-t lambda_1)
    Eigen::VectorXd far(2);
    far << 800, 801;
    auto c3 = counting_measure(far, 0, Boundary::Neumann, 1);
    CHECK(laplace_value(c3, 1) == doctest::Approx(std::exp(-800.0) * (1 + std::exp(-1.0))));

    auto curve = laplace_transform(cm, geometric_grid(0.01, 100, 4));
    CHECK(curve.completely_monotone());
    LaplaceCurve bad = curve;
    bad.mean[3] = bad.mean[2] * 1.1;
    CHECK(!bad.completely_monotone());

    Eigen::VectorXd unsorted(2);
    unsorted << 1, 0;
    CHECK_THROWS_AS(counting_measure(unsorted, 0, Boundary::Neumann, 1), ConfigError);
}

TEST_CASE("free ensemble equals the spectral sum")
{
    auto c = small_config();
    c.zero_potential = true;
    c.phi = BernsteinFunction::stable(0.5);
    auto r = ensemble_run(c);
    for (int M : c.Ms) {
        const auto& s = r.get(M, Boundary::Neumann, FieldMode::Periodized);
        auto sb = spectrum_of(c.spec, M, M + c.depth_offset, Boundary::Neumann, false);
        for (std::size_t i = 0; i < c.t_grid.size(); ++i) {
            double direct = 0;
            for (int k = 0; k < sb.size(); ++k)
                direct += std::exp(-c.t_grid[i] * std::sqrt(std::max(0.0, sb.mu[k])));
            direct /= sb.total_mass;
            CHECK(s.laplace_mean[i] == doctest::Approx(direct).epsilon(1e-9));
            CHECK(s.laplace_var[i] < 1e-24);
        }
        // the zero mode alone below the gap
        CHECK(s.counting_mean[0] == doctest::Approx(1 / sb.total_mass));
        CHECK(s.eigenvalues[0][0] == doctest::Approx(0).scale(1));
    }
}

TEST_CASE("disordered ensemble: ordering, determinism, gates")
{
    auto c = small_config();
    auto r = ensemble_run(c);
    CHECK(r.gates.ok);
    auto ord = ordering_check(r, FieldMode::Free);
    CHECK(ord.instances == c.samples * 2);
    CHECK(ord.violations == 0);
    for (const auto& s : r.series)
        for (int i = 0; i < s.samples(); ++i) {
            LaplaceCurve lc{r.t_grid, s.laplace[i], {}, 1};
            CHECK(lc.completely_monotone());
            for (std::size_t k = 1; k < s.counting[i].size(); ++k)
                CHECK(s.counting[i][k] >= s.counting[i][k - 1]);
        }
    // one instance recomputed on its own
    const auto& s = r.get(2, Boundary::Dirichlet, FieldMode::Free);
    auto ev = instance_eigenvalues(c, 2, Boundary::Dirichlet, FieldMode::Free, s.seeds[3]);
    REQUIRE(ev.size() == static_cast<int>(s.eigenvalues[3].size()));
    for (int k = 0; k < ev.size(); ++k)
        CHECK(ev[k] == doctest::Approx(s.eigenvalues[3][k]).epsilon(1e-12));

    c.threads = 3;
    auto r3 = ensemble_run(c);
    for (std::size_t k = 0; k < r.series.size(); ++k)
        CHECK(r.series[k].laplace == r3.series[k].laplace);

    auto table = r.convergence_table();
    CHECK(table.size() == c.t_grid.size());
    CHECK(table[0]["levels"].size() == 2);
    auto gap = dn_gap(r, 1.0);
    CHECK(gap.size() == 2);
    auto mono = monotonicity_check(r);
    CHECK(mono.size() == c.t_grid.size());

    auto bad = small_config();
    bad.lambda0 = 1; // the atom at 1 breaks continuity of F on (0, 1]
    CHECK_THROWS_AS(ensemble_run(bad), GateFailure);
    bad = small_config();
    bad.phi = BernsteinFunction::log1p();
    CHECK_THROWS_AS(ensemble_run(bad), GateFailure);
    bad = small_config();
    bad.samples = 1;
    CHECK_THROWS_AS(ensemble_run(bad), ConfigError);
}

TEST_CASE("rate functions")
{
    CHECK(D0_formula(1, 1, 1, 2) == doctest::Approx(1.0 / 8));

    auto g = preset_spec("gasket");
    auto mu = estimate_mu21(g, 5);
    // independent oracle: continuum renormalization through the decimation map
    auto sb = spectrum_of(g, 1, 5, Boundary::Neumann, false);
    double exact = sb.renorm * continuum_limit(*g, sb.combinatorial[1]).value();
    CHECK(mu.value == doctest::Approx(exact).epsilon(1e-6));
    CHECK(mu.lo <= exact * (1 + 1e-9));
    CHECK(mu.hi >= exact * (1 - 1e-9));
    CHECK(mu.discrete.back() < exact);

    auto law = DisorderLaw::bernoulli(0.5, 1);
    auto rate = rate_functions(law, 0.5, -1, *g, g->walk_dim(), 1, mu, 0.5);
    CHECK(rate.D0 == doctest::Approx(mu.value / (4 * 0.5 * 3 * 2)));
    CHECK(rate.D0_lo <= rate.D0);
    CHECK(rate.D0_hi >= rate.D0);
    // D0 / x below the atom at 1: F = 1/2
    for (double x : {rate.D0 * 1.5, 10.0, 1e4})
        CHECK(rate.g(x) == doctest::Approx(std::log(2.0)));
    CHECK(rate.g(rate.D0 / 2) == 0);

    for (double t : geometric_grid(1, 1e6, 3)) {
        const double x = rate.x_t(t);
        CHECK(std::abs(rate.j(x) - t) <= 1e-8 * t);
        CHECK(std::abs(std::pow(x, rate.d + rate.alpha) * rate.h(t) - t) <= 1e-8 * t);
    }
    auto unif = rate_functions(DisorderLaw::uniform(2), 0.5, -1, *g, g->walk_dim(), 1, mu, 0.5);
    double prev = 0;
    for (double x : geometric_grid(0.1, 100, 4)) {
        if (unif.g(std::pow(x, unif.alpha)) == 0)
            continue;
        CHECK(unif.j(x) > prev);
        prev = unif.j(x);
    }
    CHECK_THROWS_AS(rate_functions(DisorderLaw::user({{0, 1}}), 0.5, -1, *g, g->walk_dim(), 1, mu),
                    DegenerateLaw);

    // pure powers meet the gap condition with equality from M = 0 on
    CHECK(compute_M2(rate, BernsteinFunction::identity()) == 0);
    RateFunctions tight = rate;
    tight.C1_tilde *= 2;
    CHECK_THROWS_AS(compute_M2(tight, BernsteinFunction::identity(), 10), PreconditionMNotReached);
    auto rel = BernsteinFunction::relativistic(0.5, 1);
    auto B = check_assumption_B(rel, g->walk_dim());
    auto rrel = rate_functions(law, 0.5, -1, *g, B.alpha, B.C1, mu, 0.5);
    int M2 = compute_M2(rrel, rel);
    for (int M = 0; M < M2; ++M)
        CHECK(rrel.C1_tilde * std::pow(2.0, -M * B.alpha) > rel(mu.value * std::pow(5.0, -M)));
    CHECK(rrel.C1_tilde * std::pow(2.0, -M2 * B.alpha) <= rel(mu.value * std::pow(5.0, -M2)) * (1 + 1e-12));
}

TEST_CASE("Temple inequality")
{
    Eigen::MatrixXd H = Eigen::Vector2d(0, 10).asDiagonal();
    CHECK(temple_lower_bound(H, Eigen::Vector2d(1, 0), 10) == doctest::Approx(0).scale(1));
    Eigen::MatrixXd A(2, 2);
    A << 1, 0.3, 0.3, 4;
    Eigen::VectorXd psi = Eigen::Vector2d(1, 0.1);
    double l1 = symmetric_eigenvalues(A)[0], l2 = symmetric_eigenvalues(A)[1];
    CHECK(temple_lower_bound(A, psi, l2) <= l1 + 1e-12);
    CHECK_THROWS_AS(temple_lower_bound(A, psi, 0.5), DomainError);

    auto g = preset_spec("gasket");
    auto mu = estimate_mu21(g, 4);
    auto law = DisorderLaw::bernoulli(0.5, 1);
    auto phi = BernsteinFunction::identity();
    auto rate = rate_functions(law, 0.5, -1, *g, g->walk_dim(), 1, mu, 0.5);
    const int M = 1, n = 3;
    auto W = SingleSiteProfile::finite_range(1, {1, 0.25});
    auto sb = spectrum_of(g, M, n, Boundary::Neumann, true);
    auto k = build_kernel(g, M, n, W);

    DisorderSample zero = sample_disorder(law, k.sites, 1);
    std::fill(zero.xi.begin(), zero.xi.end(), 0.0);
    auto rz = temple_check(sb, k, zero, phi, rate, 0);
    CHECK(rz.rhs == 0);
    CHECK(rz.lhs == doctest::Approx(0).scale(1));

    // all sites on: the truncated field is A0 * D0 / L^{M alpha} on every C_{-1}(v)
    DisorderSample ones = zero;
    std::fill(ones.xi.begin(), ones.xi.end(), 1.0);
    auto r1 = temple_check(sb, k, ones, phi, rate, 0);
    CHECK(r1.truncation == doctest::Approx(rate.D0 / 5));
    CHECK(r1.v2_integral > 0);
    CHECK(r1.temple_condition);
    CHECK(r1.margin >= 0);

    for (int s = 0; s < 20; ++s) {
        auto xi = sample_disorder(law, k.sites, sample_seed(3, s));
        auto r = temple_check(sb, k, xi, phi, rate, 0);
        CHECK(r.temple_condition);
        CHECK(r.margin >= -1e-12 * std::max(1.0, r.lhs));
    }
    CHECK_THROWS_AS(temple_check(sb, k, ones, phi, rate, 2), PreconditionMNotReached);
}

TEST_CASE("Lifschitz ratios on synthetic counting functions")
{
    auto g = preset_spec("gasket");
    auto mu = estimate_mu21(g, 4);
    auto rate = rate_functions(DisorderLaw::bernoulli(0.5, 1), 0.5, -1, *g, g->walk_dim(), 1, mu, 0.5);
    const double da = rate.d / rate.alpha;
    auto lam = geometric_grid(1e-3, 0.9, 10);
    auto ts = geometric_grid(1, 1e4, 5);
    std::vector<double> tail, flat, zero(lam.size(), 0.0), Lt;
    for (double l : lam) {
        tail.push_back(std::exp(-2 * std::pow(l, -da)));
        flat.push_back(1.0 / 81);
    }
    for (double t : ts)
        Lt.push_back(std::exp(-std::pow(t, 0.5)));

    auto rt = lifschitz_fit(lam, tail, ts, Lt, rate, {0.05, 0.5});
    CHECK(rt.verdict == "lifschitz-band");
    CHECK(rt.r_max == doctest::Approx(-2 / std::log(2.0)));
    CHECK(rt.r_min == doctest::Approx(-2 / std::log(2.0)));
    CHECK(rt.s_max < 0);
    CHECK(rt.ts.front() >= 10);
    CHECK(rt.ts.back() <= 1e3 * (1 + 1e-9));

    auto rf = lifschitz_fit(lam, flat, ts, Lt, rate, {0.05, 0.5});
    CHECK(rf.verdict == "no-tail");
    CHECK(rf.r_slope == doctest::Approx(da).epsilon(1e-9));

    CHECK_THROWS_AS(lifschitz_fit(lam, zero, ts, Lt, rate, {0.05, 0.5}), EmptyWindow);
    auto w = auto_window(lam, tail, rate, 0.01);
    CHECK(w.second / w.first == doctest::Approx(10));
    CHECK(tail[std::lower_bound(lam.begin(), lam.end(), w.second * (1 - 1e-12)) - lam.begin()] <= 0.01);
    CHECK_THROWS_AS(auto_window(lam, zero, rate), EmptyWindow);
}

TEST_CASE("Bernstein binomial bound")
{
    // bound against exact binomial tails
    for (int n : {5, 20, 80})
        for (double p : {0.1, 0.3, 0.6})
            for (double gm : {0.35, 0.5, 0.7, 0.9}) {
                if (gm <= p)
                    continue;
                boost::math::binomial_distribution<double> bin(n, p);
                int k = static_cast<int>(std::ceil(gm * n - 1e-9));
                double exact = k == 0 ? 1.0 : boost::math::cdf(boost::math::complement(bin, k - 1));
                CHECK(exact <= bernstein_bound(n, p, gm) * (1 + 1e-12));
            }
    auto rep = bernstein_check({5, 10}, {0.2, 0.5}, {0.3, 0.6, 0.9}, 2000, 4);
    CHECK(rep.ok);
    CHECK(rep.cells.size() == 10);
    CHECK_THROWS_AS(bernstein_bound(10, 0.5, 0.4), DomainError);
}

TEST_CASE("tilted ensemble matches the plain ensemble")
{
    auto c = small_config();
    c.Ms = {2};
    c.depth_offset = 1;
    c.samples = 3000;
    c.series = {{Boundary::Neumann, FieldMode::Periodized}};
    c.lambda_grid = geometric_grid(0.1, 10, 4);
    c.t_grid = {0.3, 1, 3};
    auto plain = ensemble_run(c);
    const auto& s = plain.series.front();

    TiltedConfig tc;
    tc.spec = c.spec;
    tc.M = 2;
    tc.depth_offset = 1;
    tc.profile = c.profile;
    tc.law = c.law;
    tc.samples = 9 * 150;
    tc.seed = 7;
    tc.t_grid = c.t_grid;
    tc.lambda_grid = c.lambda_grid;
    auto r = tilted_ensemble(tc);
    CHECK(r.components == 9); // plain + 2 tilts x (3 one-cells + the whole of K^<2>)
    CHECK(r.ess > 0);
    CHECK(r.ess <= tc.samples);
    for (std::size_t i = 0; i < c.lambda_grid.size(); ++i) {
        const double se = std::hypot(r.counting_se[i], std::sqrt(s.counting_var[i] / c.samples));
        CHECK(std::abs(r.counting_mean[i] - s.counting_mean[i]) <= 4 * se + 1e-15);
    }
    for (std::size_t i = 0; i < c.t_grid.size(); ++i) {
        const double se = std::hypot(r.laplace_se[i], std::sqrt(s.laplace_var[i] / c.samples));
        CHECK(std::abs(r.laplace_mean[i] - s.laplace_mean[i]) <= 4 * se);
    }

    tc.threads = 3;
    auto r3 = tilted_ensemble(tc);
    CHECK(r3.counting_mean == r.counting_mean);
    CHECK(r3.laplace_mean == r.laplace_mean);

    tc.law = DisorderLaw::uniform(1);
    CHECK_THROWS_AS(tilted_ensemble(tc), ConfigError);
    tc.law = c.law;
    tc.tilts = {1.0};
    CHECK_THROWS_AS(tilted_ensemble(tc), ConfigError);
    tc.tilts = {0.9};
    tc.levels = {3};
    CHECK_THROWS_AS(tilted_ensemble(tc), ConfigError);
}
