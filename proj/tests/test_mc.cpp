#include <doctest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>

#include "fids/errors.hpp"
#include "fids/mc_oracle.hpp"
#include "fids/random_potential.hpp"
#include "fids/rng.hpp"

using namespace fids;

namespace {

double quantile(std::vector<double> v, double q)
{
    std::sort(v.begin(), v.end());
    return v[static_cast<std::size_t>(q * (v.size() - 1))];
}

struct Setup {
    std::shared_ptr<const FractalSpec> spec = preset_spec("gasket");
    std::shared_ptr<const LatticeGraph> lat = enumerate_lattice(spec, 1, 3);
    std::shared_ptr<const FoldingMap> fold = make_folding(spec, 1, 1);
};

} // namespace

TEST_CASE("stable subordinator sampler")
{
    for (double a : {0.3, 0.5, 0.8}) {
        auto rows = stable_laplace_check(a, 1.5, {0.5, 1, 2}, 100000, 7);
        for (const auto& r : rows) {
            INFO("a=" << a << " lambda=" << r.lambda << " mean=" << r.mean << " exact=" << r.exact);
            CHECK(std::abs(r.z) < 3);
        }
    }

    // scaling: S_t has the law of t^{1/a} S_1
    const double a = 0.6, t = 2.5;
    std::vector<double> x, y;
    auto g1 = stream(11, 0, 1), g2 = stream(11, 0, 2);
    for (int i = 0; i < 20000; ++i) {
        x.push_back(sample_stable_subordinator(a, t, g1));
        y.push_back(std::pow(t, 1 / a) * sample_stable_subordinator(a, 1, g2));
    }
    CHECK(ks_pvalue(ks_statistic(x, y), x.size(), y.size()) > 0.01);

    // and it is not the law of t * S_1
    std::vector<double> z;
    for (double v : y)
        z.push_back(v * t / std::pow(t, 1 / a));
    CHECK(ks_pvalue(ks_statistic(x, z), x.size(), z.size()) < 0.01);

    // concentrates at t as a -> 1
    auto iqr = [](double a) {
        std::vector<double> s;
        auto g = stream(5, 0, 0);
        for (int i = 0; i < 20000; ++i)
            s.push_back(sample_stable_subordinator(a, 1, g));
        return quantile(s, 0.75) - quantile(s, 0.25);
    };
    CHECK(iqr(0.95) < iqr(0.7));
    CHECK(iqr(0.7) < iqr(0.5));

    CHECK_THROWS_AS(sample_stable_subordinator(1.0, 1, 1ull), DomainError);
    CHECK_THROWS_AS(sample_stable_subordinator(0.0, 1, 1ull), DomainError);
}

TEST_CASE("statistics helpers")
{
    std::vector<double> a{1, 2, 3, 4}, b{1, 2, 3, 4};
    CHECK(ks_statistic(a, b) == 0);
    CHECK(ks_statistic({1, 2}, {3, 4}) == 1);
    CHECK(ks_pvalue(0, 100, 100) == 1);
    // large-sample critical value of the one-sample form: 1.36 / sqrt(n) at 5%
    CHECK(ks_pvalue(1.358 / std::sqrt(5000.0), 10000, 10000) == doctest::Approx(0.05).epsilon(0.05));

    auto c = chi_square_homogeneity({50, 50}, {50, 50});
    CHECK(c.statistic == doctest::Approx(0));
    CHECK(c.p_value == doctest::Approx(1));
    auto d = chi_square_homogeneity({90, 10}, {10, 90});
    CHECK(d.p_value < 1e-10);
    CHECK_THROWS_AS(chi_square_homogeneity({1}, {1, 2}), ConfigError);
}

TEST_CASE("walk sampler follows the generator")
{
    Setup s;
    WalkConfig cfg;
    auto refl = simulate_walk(cfg, *s.lat, WalkMode::Reflected, s.fold.get());
    CHECK_THROWS_AS(simulate_walk(cfg, *s.lat, WalkMode::Reflected), MissingFolding);

    auto L = build_laplacian(*s.lat, build_measure(*s.lat), Boundary::Neumann, s.fold.get());
    CHECK(refl.rate() == doctest::Approx(L.rate * L.renorm));

    // one-step frequencies against the jump matrix, at an interior vertex and a corner
    for (int v : {s.lat->outer_corners()[1], s.lat->num_vertices() / 2}) {
        const int x = refl.state_of(v);
        std::vector<long> cnt(refl.size(), 0);
        auto g = stream(3, v, 0);
        const int draws = 100000;
        for (int i = 0; i < draws; ++i)
            ++cnt[refl.step(x, uniform01(g))];
        for (int j = 0; j < refl.size(); ++j) {
            const double p = L.jump(x, j);
            const double sd = std::sqrt(p * (1 - p) / draws);
            CHECK(std::abs(double(cnt[j]) / draws - p) <= 3 * sd + 1e-12);
        }
    }

    // holding times: number of epochs in [0, t] is Poisson(rate t)
    auto g = stream(4, 0, 0);
    double jumps = 0;
    const int reps = 4000;
    for (int i = 0; i < reps; ++i)
        jumps += refl.sample(g, 0, 0.1).states.size() - 1;
    const double mean = refl.rate() * 0.1;
    CHECK(std::abs(jumps / reps - mean) < 3 * std::sqrt(mean / reps));
}

TEST_CASE("killed walk absorption")
{
    Setup s;
    auto L = build_laplacian(*s.lat, build_measure(*s.lat), Boundary::Dirichlet);
    auto killed = WalkSampler::from_operator(L);
    CHECK(killed.mode() == WalkMode::Killed);

    // start next to the corner V_1 = corners[1]
    const int corner = s.lat->outer_corners()[1];
    const int v = *s.lat->nbr_begin(corner);
    const int x = killed.state_of(v);
    const double t = 0.05;
    Eigen::MatrixXd Pt = (t * L.renorm * L.generator).exp();
    const double exact = 1 - Pt.row(x).sum();

    const int paths = 20000;
    int dead = 0;
    for (int p = 0; p < paths; ++p) {
        auto g = stream(21, p, 0);
        dead += killed.sample(g, x, t).dead;
    }
    const double f = double(dead) / paths;
    INFO("empirical " << f << " exact " << exact);
    CHECK(exact > 0.05);
    CHECK(std::abs(f - exact) < 3 * std::sqrt(exact * (1 - exact) / paths));
}

TEST_CASE("Monte Carlo trace agrees with the spectrum")
{
    Setup s;
    auto sbN = spectrum_of(s.spec, 1, 3, Boundary::Neumann);
    auto sbD = spectrum_of(s.spec, 1, 3, Boundary::Dirichlet);
    auto id = BernsteinFunction::identity();

    WalkConfig cfg;
    cfg.t = 1;
    cfg.paths = 10000;
    cfg.seed = 5;
    auto refl = simulate_walk(cfg, *s.lat, WalkMode::Reflected, s.fold.get());
    auto killed = simulate_walk(cfg, *s.lat, WalkMode::Killed);

    auto eN = estimate_trace(refl, cfg, id);
    const double xN = spectral_trace(sbN, id, {}, cfg.t);
    INFO("N: " << eN.mean << " +- " << eN.stderr_ << " vs " << xN);
    CHECK(eN.batches == 20);
    CHECK(std::abs(eN.mean - xN) < 3 * eN.stderr_);

    auto eD = estimate_trace(killed, cfg, id);
    const double xD = spectral_trace(sbD, id, {}, cfg.t);
    INFO("D: " << eD.mean << " +- " << eD.stderr_ << " vs " << xD);
    CHECK(std::abs(eD.mean - xD) < 3 * eD.stderr_);
    CHECK(eD.mean <= eN.mean + 3 * std::hypot(eD.stderr_, eN.stderr_));

    // one disorder realization
    auto kernel = build_kernel(s.spec, 1, 3, SingleSiteProfile::finite_range(1, {1, 0.25}));
    auto xi = sample_disorder(DisorderLaw::bernoulli(0.5, 1), kernel.sites, 17);
    Eigen::VectorXd V = potential_field(kernel, xi, FieldMode::Periodized);
    auto eV = estimate_trace(refl, cfg, id, V);
    const double xV = spectral_trace(sbN, id, V, cfg.t);
    INFO("V: " << eV.mean << " +- " << eV.stderr_ << " vs " << xV);
    CHECK(std::abs(eV.mean - xV) < 3 * eV.stderr_);
    CHECK(eV.with_potential);
    // same paths, the potential only discounts
    CHECK(eV.mean <= eN.mean);
    for (int b = 0; b < eV.batches; ++b)
        CHECK(eV.batch_means[b] <= eN.batch_means[b]);

    WalkConfig c4 = cfg;
    c4.threads = 3;
    auto e4 = estimate_trace(refl, c4, id, V);
    CHECK(e4.mean == eV.mean);
    CHECK(e4.stderr_ == eV.stderr_);

    Eigen::VectorXd neg = V;
    neg[0] = -1;
    CHECK_THROWS_AS(estimate_trace(refl, cfg, id, neg), NegativePotential);
    CHECK_THROWS_AS(estimate_trace(refl, cfg, BernsteinFunction::stable(0.5)), IncompatiblePhi);
    WalkConfig bad = cfg;
    bad.batches = 10;
    CHECK_THROWS_AS(estimate_trace(refl, bad, id), ConfigError);
}

TEST_CASE("subordinated walk trace")
{
    Setup s;
    auto sbN = spectrum_of(s.spec, 1, 3, Boundary::Neumann);
    auto refl = simulate_walk(WalkConfig{}, *s.lat, WalkMode::Reflected, s.fold.get());
    // walk length is S_t times the jump rate, heavy-tailed: keep t^{1/a} small
    for (auto [a, t] : {std::pair{0.8, 0.5}, std::pair{0.5, 0.05}}) {
        WalkConfig cfg;
        cfg.t = t;
        cfg.paths = 10000;
        cfg.seed = 8;
        cfg.stable_exponent = a;
        auto phi = BernsteinFunction::stable(a);
        auto e = estimate_trace(refl, cfg, phi);
        const double x = spectral_trace(sbN, phi, {}, cfg.t);
        INFO("a=" << a << ": " << e.mean << " +- " << e.stderr_ << " vs " << x);
        CHECK(std::abs(e.mean - x) < 3 * e.stderr_);
        CHECK_THROWS_AS(estimate_trace(refl, cfg, BernsteinFunction::stable(a - 0.1)), IncompatiblePhi);
        CHECK_THROWS_AS(estimate_trace(refl, cfg, BernsteinFunction::identity()), IncompatiblePhi);
    }
}

TEST_CASE("projected free walk is the reflected walk")
{
    auto spec = preset_spec("gasket");
    auto rep = folded_walk_invariance(spec, 1, 3, 1.0, 20000, 3);
    INFO(rep.to_json().dump());
    CHECK(rep.escaped == 0);
    CHECK(rep.pass);

    // a time mismatch is detected by the same statistic
    auto big = enumerate_lattice(spec, 1, 3);
    auto fold = make_folding(spec, 1, 1);
    WalkConfig cfg;
    auto refl = simulate_walk(cfg, *big, WalkMode::Reflected, fold.get());
    std::vector<long> a(big->num_vertices(), 0), b(big->num_vertices(), 0);
    for (int p = 0; p < 5000; ++p) {
        auto g1 = stream(1, p, 1), g2 = stream(1, p, 2);
        ++a[refl.lattice_vertex(refl.sample(g1, 0, 0.02).states.back())];
        ++b[refl.lattice_vertex(refl.sample(g2, 0, 0.05).states.back())];
    }
    CHECK(chi_square_homogeneity(a, b).p_value < 0.01);
}
