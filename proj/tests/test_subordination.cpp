#include <doctest.h>

#include <cmath>
#include <random>

#include "fids/errors.hpp"
#include "fids/subordination.hpp"

using namespace fids;

TEST_CASE("closed forms of phi")
{
    CHECK(eval_phi(BernsteinFunction::stable(0.5), 4) == doctest::Approx(2));
    CHECK(eval_phi(BernsteinFunction::relativistic(0.5, 1), 3) == doctest::Approx(1));
    for (double x : {0.0, 0.3, 7.0, 1e5})
        CHECK(eval_phi(BernsteinFunction::identity(), x) == x);
    CHECK_THROWS_AS(eval_phi(BernsteinFunction::identity(), -1), DomainError);
    auto u = BernsteinFunction::user({{1, 1}, {2, 1.5}, {4, 2}});
    CHECK(u(0.5) == doctest::Approx(0.5));
    CHECK(u(3) == doctest::Approx(1.75));
    CHECK(u(6) == doctest::Approx(2.5));
    CHECK_NOTHROW(u.validate());
    CHECK_THROWS_AS(BernsteinFunction::user({{1, 1}, {2, 3}}).validate(), ConfigError);
    CHECK_THROWS_AS(BernsteinFunction::stable(1.5).validate(), ConfigError);
    auto j = BernsteinFunction::relativistic(0.25, 2).to_json();
    auto back = BernsteinFunction::from_json(j);
    CHECK(back(3.3) == BernsteinFunction::relativistic(0.25, 2)(3.3));
}

TEST_CASE("assumption (B)")
{
    const double dw = std::log(5.0) / std::log(2.0);
    for (double a : {0.2, 0.5, 0.9, 1.0}) {
        auto rep = check_assumption_B(BernsteinFunction::stable(a), dw);
        CHECK(rep.exponent == doctest::Approx(a).epsilon(1e-6));
        CHECK(rep.alpha == doctest::Approx(a * dw).epsilon(1e-6));
        CHECK(rep.C1 == doctest::Approx(1).epsilon(1e-6));
        CHECK(rep.C2 == doctest::Approx(1).epsilon(1e-6));
        CHECK(rep.log_growth);
    }
    auto id = check_assumption_B(BernsteinFunction::identity(), dw);
    CHECK(id.alpha == doctest::Approx(dw));
    auto rel = check_assumption_B(BernsteinFunction::relativistic(0.5, 1), dw);
    CHECK(rel.exponent == doctest::Approx(1).epsilon(1e-5));
    CHECK(rel.C1 <= rel.C2);
    CHECK_THROWS_AS(check_assumption_B(BernsteinFunction::log1p(), dw), ViolatesB);
}

TEST_CASE("Schrodinger matrix")
{
    auto g = preset_spec("gasket");
    auto sb = spectrum_of(g, 1, 3, Boundary::Neumann);
    const int n = sb.size();
    auto stable = BernsteinFunction::stable(0.5);

    // V = 0: spectrum is phi(mu)
    auto ev = symmetric_eigenvalues(schrodinger_matrix(sb, stable, Eigen::VectorXd::Zero(n)));
    for (int i = 0; i < n; ++i)
        CHECK(ev[i] == doctest::Approx(std::sqrt(std::max(0.0, sb.mu[i]))).epsilon(1e-9).scale(1));
    CHECK(std::abs(ev[0]) < 1e-6);

    // constant shift
    auto ev1 = symmetric_eigenvalues(schrodinger_matrix(sb, BernsteinFunction::identity(), Eigen::VectorXd::Constant(n, 2.5)));
    for (int i = 0; i < n; ++i)
        CHECK(ev1[i] == doctest::Approx(sb.mu[i] + 2.5).epsilon(1e-10));

    // phi(-L)^2 = -L for the 1/2-stable exponent
    Eigen::MatrixXd P = phi_of_operator(sb, stable);
    Eigen::MatrixXd L = phi_of_operator(sb, BernsteinFunction::identity());
    CHECK((P * P - L).cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, L.cwiseAbs().maxCoeff()));
    // -L in symmetric coordinates from the generator directly
    auto lat = enumerate_lattice(g, 1, 3);
    auto fold = make_folding(g, 1, 1);
    auto G = build_laplacian(*lat, build_measure(*lat), Boundary::Neumann, fold.get());
    Eigen::VectorXd sq = G.weights.cwiseSqrt();
    Eigen::MatrixXd direct = -G.renorm * (sq.asDiagonal() * G.generator * sq.cwiseInverse().asDiagonal());
    CHECK((direct - L).cwiseAbs().maxCoeff() < 1e-8 * L.cwiseAbs().maxCoeff());

    Eigen::VectorXd bad = Eigen::VectorXd::Zero(n);
    bad[3] = -1;
    CHECK_THROWS_AS(schrodinger_matrix(sb, stable, bad), NegativePotential);

    // ground state monotone in V, spectral mapping monotone
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0, 1);
    for (int rep = 0; rep < 20; ++rep) {
        Eigen::VectorXd V(n), W(n);
        for (int i = 0; i < n; ++i) {
            V[i] = u(rng);
            W[i] = V[i] + u(rng) * (u(rng) < 0.3);
        }
        double a = symmetric_eigenvalues(schrodinger_matrix(sb, stable, V))[0];
        double b = symmetric_eigenvalues(schrodinger_matrix(sb, stable, W))[0];
        CHECK(a <= b + 1e-12);
    }
    for (int i = 1; i < n; ++i)
        CHECK(stable(std::max(0.0, sb.mu[i - 1])) <= stable(std::max(0.0, sb.mu[i])));
}
