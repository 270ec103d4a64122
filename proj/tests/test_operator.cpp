#include <doctest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>

#include "fids/discrete_operator.hpp"
#include "fids/errors.hpp"

using namespace fids;

namespace {

std::vector<double> sorted(const Eigen::VectorXd& v)
{
    std::vector<double> out(v.data(), v.data() + v.size());
    std::sort(out.begin(), out.end());
    return out;
}

void check_spectrum(const Eigen::VectorXd& got, std::vector<double> want, double tol = 1e-9)
{
    auto g = sorted(got);
    std::sort(want.begin(), want.end());
    REQUIRE(g.size() == want.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        CHECK(g[i] == doctest::Approx(want[i]).epsilon(tol));
}

// plain graph Laplacian D - A of a lattice, no folding
Eigen::MatrixXd graph_laplacian(const LatticeGraph& g)
{
    const int nv = g.num_vertices();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(nv, nv);
    for (int v = 0; v < nv; ++v) {
        A(v, v) += g.degree(v);
        for (auto it = g.nbr_begin(v); it != g.nbr_end(v); ++it)
            A(v, *it) -= 1;
    }
    return A;
}

double corner_resistance(const LatticeGraph& g)
{
    Eigen::MatrixXd Lg = graph_laplacian(g);
    auto c = g.outer_corners();
    const int nv = g.num_vertices();
    // ground corner c[0], inject unit current at c[1]
    std::vector<int> keep;
    for (int v = 0; v < nv; ++v)
        if (v != c[0])
            keep.push_back(v);
    Eigen::MatrixXd red(keep.size(), keep.size());
    Eigen::VectorXd b = Eigen::VectorXd::Zero(keep.size());
    int at = -1;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (keep[i] == c[1])
            at = static_cast<int>(i);
        for (std::size_t j = 0; j < keep.size(); ++j)
            red(i, j) = Lg(keep[i], keep[j]);
    }
    b[at] = 1;
    Eigen::VectorXd pot = red.ldlt().solve(b);
    return pot[at];
}

} // namespace

TEST_CASE("vertex measure: rank-weighted, total N^M")
{
    auto g = preset_spec("gasket");
    auto m00 = build_measure(*enumerate_lattice(g, 0, 0));
    for (auto& w : m00.weights)
        CHECK((w == Rational(1, 3)));
    CHECK((m00.total_mass == Rational(1)));

    auto l11 = enumerate_lattice(g, 1, 1);
    auto m11 = build_measure(*l11);
    for (int v = 0; v < l11->num_vertices(); ++v)
        CHECK((m11.weights[v] == Rational(l11->rank(v), 3)));
    CHECK((m11.total_mass == Rational(3)));

    for (int M = 0; M <= 3; ++M)
        for (int n = M; n <= M + 2; ++n)
            CHECK((build_measure(*enumerate_lattice(g, M, n)).total_mass == Rational(ipow(3, M))));
}

TEST_CASE("small spectra of the gasket")
{
    auto g = preset_spec("gasket");
    check_spectrum(spectrum_of(g, 0, 0, Boundary::Neumann).combinatorial, {0, 6, 6});
    check_spectrum(spectrum_of(g, 0, 1, Boundary::Neumann).combinatorial, {0, 3, 3, 6, 6, 6});
    check_spectrum(spectrum_of(g, 1, 1, Boundary::Dirichlet).combinatorial, {2, 5, 5});
    // depth 2: roots of 5x - x^2 = 3 come in pairs
    const double lo = (5 - std::sqrt(13.0)) / 2, hi = (5 + std::sqrt(13.0)) / 2;
    auto s2 = sorted(spectrum_of(g, 0, 2, Boundary::Neumann).combinatorial);
    REQUIRE(s2.size() == 15);
    CHECK(s2[0] == doctest::Approx(0).epsilon(1e-12));
    CHECK(s2[1] == doctest::Approx(lo));
    CHECK(s2[2] == doctest::Approx(lo));
    CHECK(s2[3] == doctest::Approx(3));
    CHECK(s2[5] == doctest::Approx(3));
    CHECK(s2[6] == doctest::Approx(hi));
    CHECK(s2[7] == doctest::Approx(hi));
    CHECK(s2[8] == doctest::Approx(5));
    CHECK(s2.back() == doctest::Approx(6));
    CHECK(spectrum_of(g, 0, 0, Boundary::Dirichlet).size() == 0);
}

TEST_CASE("generator structure: row sums, weighted symmetry, interior rows")
{
    auto g = preset_spec("gasket");
    for (int M = 0; M <= 2; ++M)
        for (int n = M; n <= M + 2; ++n) {
            auto lat = enumerate_lattice(g, M, n);
            auto meas = build_measure(*lat);
            auto fold = make_folding(g, M, 1);
            auto N = build_laplacian(*lat, meas, Boundary::Neumann, fold.get());
            auto D = build_laplacian(*lat, meas, Boundary::Dirichlet);
            CHECK(N.rate == doctest::Approx(4));
            CHECK(N.renorm == doctest::Approx(std::pow(5.0, n - M)));
            CHECK(N.generator.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);
            if (D.vertices.size() > 0) {
                CHECK(D.generator.rowwise().sum().maxCoeff() < 1e-12);
                CHECK(D.jump.rowwise().sum().maxCoeff() <= 1 + 1e-12);
            }
            Eigen::MatrixXd S = N.weights.asDiagonal() * N.generator;
            CHECK((S - S.transpose()).cwiseAbs().maxCoeff() < 1e-12);
            // interior rows coincide with the unfolded walk D^{-1}A
            auto corners = lat->outer_corners();
            for (int v = 0; v < lat->num_vertices(); ++v) {
                if (std::find(corners.begin(), corners.end(), v) != corners.end())
                    continue;
                Eigen::VectorXd row = Eigen::VectorXd::Zero(lat->num_vertices());
                for (auto it = lat->nbr_begin(v); it != lat->nbr_end(v); ++it)
                    row[*it] += 1.0 / lat->degree(v);
                CHECK((N.jump.row(v).transpose() - row).cwiseAbs().maxCoeff() < 1e-14);
            }
        }
    CHECK_THROWS_AS(build_laplacian(*enumerate_lattice(g, 1, 1), build_measure(*enumerate_lattice(g, 1, 1)),
                                    Boundary::Neumann),
                    MissingFolding);
}

TEST_CASE("folding pushes the ring measure to N times the vertex measure")
{
    auto g = preset_spec("gasket");
    for (int M = 0; M <= 2; ++M)
        for (int n = M; n <= M + 2; ++n) {
            auto lat = enumerate_lattice(g, M, n);
            auto ring = enumerate_lattice(g, M + 1, n + 1);
            auto fold = make_folding(g, M, 1);
            auto w = build_measure(*lat).weights;
            auto wr = build_measure(*ring).weights;
            std::vector<Rational> push(lat->num_vertices(), Rational(0));
            for (int u = 0; u < ring->num_vertices(); ++u)
                push[fold->project(*lat, ring->id(u))] += wr[u];
            for (int v = 0; v < lat->num_vertices(); ++v)
                CHECK((push[v] == w[v] * 3));
        }
}

TEST_CASE("eigenvectors: weighted orthonormal, sign convention, constant ground state")
{
    auto g = preset_spec("gasket");
    for (int M = 0; M <= 2; ++M) {
        auto sb = spectrum_of(g, M, M + 2, Boundary::Neumann);
        Eigen::MatrixXd gram = sb.psi.transpose() * sb.weights.asDiagonal() * sb.psi;
        CHECK((gram - Eigen::MatrixXd::Identity(sb.size(), sb.size())).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(std::abs(sb.mu[0]) < 1e-10);
        const double c = std::pow(3.0, -M / 2.0);
        CHECK((sb.psi.col(0).array() - c).abs().maxCoeff() < 1e-10);
        CHECK(sb.max_residual < 1e-9);
        for (int k = 0; k < sb.size(); ++k) {
            int r = 0;
            while (std::abs(sb.psi(r, k)) < 1e-10 * sb.psi.col(k).cwiseAbs().maxCoeff())
                ++r;
            CHECK(sb.psi(r, k) > 0);
        }
    }
}

TEST_CASE("Dirichlet eigenvalues dominate Neumann ones (interlacing)")
{
    auto g = preset_spec("gasket");
    for (int M = 0; M <= 2; ++M)
        for (int n = M + 1; n <= M + 3; ++n) {
            auto N = spectrum_of(g, M, n, Boundary::Neumann, false);
            auto D = spectrum_of(g, M, n, Boundary::Dirichlet, false);
            const int gap = N.size() - D.size();
            CHECK(gap == 3);
            for (int k = 0; k < D.size(); ++k) {
                CHECK(D.mu[k] >= N.mu[k] - 1e-9);
                CHECK(D.mu[k] <= N.mu[k + gap] + 1e-9);
            }
        }
}

TEST_CASE("spectral decimation relation between consecutive depths")
{
    // every level n+1 eigenvalue other than 6 is mapped by 5x - x^2 onto a level n eigenvalue
    auto g = preset_spec("gasket");
    for (int n = 0; n < 5; ++n) {
        auto coarse = sorted(spectrum_of(g, 0, n, Boundary::Neumann, false).combinatorial);
        auto fine = sorted(spectrum_of(g, 0, n + 1, Boundary::Neumann, false).combinatorial);
        for (double x : fine) {
            if (std::abs(x - 6) < 1e-8)
                continue;
            double y = 5 * x - x * x;
            double best = 1e9;
            for (double c : coarse)
                best = std::min(best, std::abs(c - y));
            CHECK(best < 1e-8);
        }
    }
}

TEST_CASE("trace identity against the matrix exponential")
{
    auto g = preset_spec("gasket");
    for (auto b : {Boundary::Neumann, Boundary::Dirichlet}) {
        auto lat = enumerate_lattice(g, 1, 3);
        auto meas = build_measure(*lat);
        auto fold = make_folding(g, 1, 1);
        auto L = build_laplacian(*lat, meas, b, fold.get());
        auto sb = eigendecompose(L, false);
        for (double t : {0.01, 0.1, 1.0}) {
            Eigen::MatrixXd E = (t * L.renorm * L.generator).exp();
            double spec_sum = (-t * sb.mu.array()).exp().sum();
            CHECK(E.trace() == doctest::Approx(spec_sum).epsilon(1e-10));
        }
    }
}

TEST_CASE("time scale tau = 5 from effective resistance")
{
    auto g = preset_spec("gasket");
    std::vector<double> R;
    for (int n = 0; n <= 4; ++n)
        R.push_back(corner_resistance(*enumerate_lattice(g, 0, n)));
    CHECK(R[0] == doctest::Approx(2.0 / 3));
    for (int n = 1; n <= 4; ++n)
        CHECK(R[n] / R[n - 1] * g->N == doctest::Approx(g->tau).epsilon(1e-12));
}

TEST_CASE("continuum limit of the decimation map")
{
    auto g = preset_spec("gasket");
    CHECK(*continuum_limit(*g, 0) == 0);
    CHECK(!continuum_limit(*g, 7).has_value());
    CHECK(!continuum_limit(*g, -1).has_value());
    for (double x : {1e-6, 0.01, 0.5, 1.0, 2.0}) {
        auto phi = continuum_limit(*g, x);
        REQUIRE(phi);
        // lower inverse in closed form
        double y = x, s = 1;
        for (int m = 0; m < 60; ++m) {
            y = 2 * y / (5 + std::sqrt(25 - 4 * y));
            s *= 5;
        }
        CHECK(*phi == doctest::Approx(s * y).epsilon(1e-12));
        CHECK(*continuum_limit(*g, decimation_map(*g, x)) == doctest::Approx(5 * *phi).epsilon(1e-12));
    }
    CHECK(*continuum_limit(*g, 1e-9) == doctest::Approx(1e-9).epsilon(1e-8));
}

TEST_CASE("eigenvalue scaling between (0,4) and (1,5)")
{
    auto g = preset_spec("gasket");
    auto rep = eigenvalue_scaling_check(g, 4, 0, 1, 10);
    CHECK(rep.K == 10);
    CHECK(rep.renormalized_available);
    CHECK(rep.renormalized_deviation < 1e-6);
    CHECK(rep.raw_deviation > rep.renormalized_deviation);
    CHECK(rep.walk_dim == doctest::Approx(std::log(5.0) / std::log(2.0)));
}

TEST_CASE("dense cap and spectrum cache")
{
    auto g = preset_spec("gasket");
    set_dense_cap(10);
    CHECK_THROWS_AS(spectrum_of(g, 0, 3, Boundary::Neumann), SizeLimit);
    set_dense_cap(6000);

    auto dir = std::filesystem::temp_directory_path() / "fids-test-cache";
    std::filesystem::remove_all(dir);
    setenv("FRACTAL_IDS_CACHE", dir.c_str(), 1);
    bool hit = true;
    auto a = cached_spectrum(g, 1, 3, Boundary::Neumann, true, &hit);
    CHECK(!hit);
    auto b = cached_spectrum(g, 1, 3, Boundary::Neumann, true, &hit);
    CHECK(hit);
    CHECK(a.mu == b.mu);
    CHECK(a.psi == b.psi);
    CHECK(a.weights == b.weights);
    unsetenv("FRACTAL_IDS_CACHE");
    std::filesystem::remove_all(dir);
}
