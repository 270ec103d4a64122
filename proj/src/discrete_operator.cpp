#include "fids/discrete_operator.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "fids/errors.hpp"
#include "fids/hash.hpp"

namespace fids {

namespace {
int g_dense_cap = 6000;
}

void set_dense_cap(int dim) { g_dense_cap = dim; }
int dense_cap() { return g_dense_cap; }

std::string to_string(Boundary b) { return b == Boundary::Dirichlet ? "dirichlet" : "neumann"; }

Boundary boundary_from_string(const std::string& s)
{
    if (s == "dirichlet" || s == "D")
        return Boundary::Dirichlet;
    if (s == "neumann" || s == "N")
        return Boundary::Neumann;
    throw ConfigError("boundary must be 'dirichlet' or 'neumann', got '" + s + "'");
}

Eigen::VectorXd VertexMeasure::as_double() const
{
    Eigen::VectorXd w(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i)
        w[i] = boost::rational_cast<double>(weights[i]);
    return w;
}

VertexMeasure build_measure(const LatticeGraph& lattice)
{
    const FractalSpec& s = lattice.spec();
    VertexMeasure m;
    m.total_mass = 0;
    const std::int64_t num = ipow(s.N, lattice.level());
    const std::int64_t den = ipow(s.N, lattice.depth()) * s.k;
    for (int v = 0; v < lattice.num_vertices(); ++v) {
        Rational w(lattice.rank(v) * num, den);
        m.weights.push_back(w);
        m.total_mass += w;
    }
    return m;
}

DiscreteLaplacian build_laplacian(const LatticeGraph& lattice, const VertexMeasure& measure,
                                  Boundary boundary, const FoldingMap* fold)
{
    const FractalSpec& s = lattice.spec();
    DiscreteLaplacian L;
    L.boundary = boundary;
    L.M = lattice.level();
    L.n = lattice.depth();
    L.rate = (s.k - 1) * s.r0;
    L.renorm = std::pow(s.tau, L.n - L.M);
    L.spec_hash = s.hash();
    L.total_mass = boost::rational_cast<double>(measure.total_mass);
    const Eigen::VectorXd w = measure.as_double();

    if (boundary == Boundary::Neumann) {
        if (!fold || fold->order() != L.M)
            throw MissingFolding("Neumann operator on K^<" + std::to_string(L.M) +
                                 "> needs a folding map of that order");
        const int nv = lattice.num_vertices();
        if (nv > g_dense_cap)
            throw SizeLimit("operator dimension " + std::to_string(nv) + " exceeds the dense cap " +
                            std::to_string(g_dense_cap));
        L.vertices.resize(nv);
        for (int v = 0; v < nv; ++v)
            L.vertices[v] = v;
        L.jump = Eigen::MatrixXd::Zero(nv, nv);
        auto ring = enumerate_lattice(lattice.spec_ptr(), L.M + 1, L.n + 1);
        for (int v = 0; v < nv; ++v) {
            int u = ring->find(lattice.id(v));
            const double p = 1.0 / ring->degree(u);
            for (auto it = ring->nbr_begin(u); it != ring->nbr_end(u); ++it)
                L.jump(v, fold->project(lattice, ring->id(*it))) += p;
        }
        L.weights = w;
    } else {
        auto corners = lattice.outer_corners();
        std::vector<int> row(lattice.num_vertices(), -1);
        for (int v = 0; v < lattice.num_vertices(); ++v)
            if (std::find(corners.begin(), corners.end(), v) == corners.end()) {
                row[v] = static_cast<int>(L.vertices.size());
                L.vertices.push_back(v);
            }
        const int nv = static_cast<int>(L.vertices.size());
        if (nv > g_dense_cap)
            throw SizeLimit("operator dimension " + std::to_string(nv) + " exceeds the dense cap " +
                            std::to_string(g_dense_cap));
        L.jump = Eigen::MatrixXd::Zero(nv, nv);
        L.weights.resize(nv);
        for (int i = 0; i < nv; ++i) {
            int v = L.vertices[i];
            L.weights[i] = w[v];
            const double p = 1.0 / lattice.degree(v);
            for (auto it = lattice.nbr_begin(v); it != lattice.nbr_end(v); ++it)
                if (row[*it] >= 0)
                    L.jump(i, row[*it]) += p;
        }
    }
    const int nv = static_cast<int>(L.vertices.size());
    L.generator = L.rate * (L.jump - Eigen::MatrixXd::Identity(nv, nv));
    return L;
}

Eigen::MatrixXd SpectrumBundle::symmetric_vectors() const
{
    return weights.cwiseSqrt().asDiagonal() * psi;
}

SpectrumBundle eigendecompose(const DiscreteLaplacian& L, bool vectors)
{
    const int nv = static_cast<int>(L.vertices.size());
    if (nv > g_dense_cap)
        throw SizeLimit("operator dimension " + std::to_string(nv) + " exceeds the dense cap");
    SpectrumBundle sb;
    sb.boundary = L.boundary;
    sb.M = L.M;
    sb.n = L.n;
    sb.spec_hash = L.spec_hash;
    sb.vertices = L.vertices;
    sb.weights = L.weights;
    sb.renorm = L.renorm;
    sb.total_mass = L.total_mass;
    if (nv == 0) {
        sb.combinatorial.resize(0);
        sb.mu.resize(0);
        sb.psi.resize(0, 0);
        return sb;
    }
    const Eigen::VectorXd sq = L.weights.cwiseSqrt();
    Eigen::MatrixXd A = sq.asDiagonal() * (-L.generator) * sq.cwiseInverse().asDiagonal();
    const double asym = (A - A.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * std::max(1.0, A.cwiseAbs().maxCoeff()))
        throw ConvergenceFailure("generator is not symmetric in the vertex measure (asymmetry " +
                                 std::to_string(asym) + ")");
    A = 0.5 * (A + A.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        A, vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw ConvergenceFailure("dense eigensolver did not converge");
    sb.combinatorial = es.eigenvalues();
    sb.mu = L.renorm * sb.combinatorial;
    if (vectors) {
        Eigen::MatrixXd U = es.eigenvectors();
        for (int c = 0; c < nv; ++c) {
            const double scale = U.col(c).cwiseAbs().maxCoeff();
            for (int r = 0; r < nv; ++r)
                if (std::abs(U(r, c)) > 1e-10 * scale) {
                    if (U(r, c) < 0)
                        U.col(c) *= -1;
                    break;
                }
        }
        sb.psi = sq.cwiseInverse().asDiagonal() * U;
        Eigen::MatrixXd R = (-L.generator) * sb.psi - sb.psi * sb.combinatorial.asDiagonal();
        for (int c = 0; c < nv; ++c) {
            double res = R.col(c).cwiseAbs().maxCoeff() / std::max(1.0, std::abs(sb.combinatorial[c]));
            sb.max_residual = std::max(sb.max_residual, res);
        }
        if (sb.max_residual > 1e-9)
            throw ConvergenceFailure("eigen-residual " + std::to_string(sb.max_residual) +
                                     " exceeds 1e-9");
    }
    return sb;
}

SpectrumBundle spectrum_of(std::shared_ptr<const FractalSpec> spec, int M, int n, Boundary b,
                           bool vectors)
{
    auto lattice = enumerate_lattice(spec, M, n);
    auto measure = build_measure(*lattice);
    std::shared_ptr<const FoldingMap> fold;
    if (b == Boundary::Neumann)
        fold = make_folding(spec, M, 1);
    return eigendecompose(build_laplacian(*lattice, measure, b, fold.get()), vectors);
}

double decimation_map(const FractalSpec& spec, double x)
{
    double r = 0, p = 1;
    for (double c : spec.decimation) {
        r += c * p;
        p *= x;
    }
    return r;
}

namespace {

double decimation_derivative(const FractalSpec& spec, double x)
{
    double r = 0, p = 1;
    for (std::size_t i = 1; i < spec.decimation.size(); ++i) {
        r += i * spec.decimation[i] * p;
        p *= x;
    }
    return r;
}

// end of the increasing branch through 0
double branch_end(const FractalSpec& spec)
{
    double lo = 0, step = 1e-3;
    while (decimation_derivative(spec, lo + step) > 0 && lo < 1e6)
        lo += step;
    double hi = lo + step;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        (decimation_derivative(spec, mid) > 0 ? lo : hi) = mid;
    }
    return lo;
}

double lower_inverse(const FractalSpec& spec, double x, double yc)
{
    // Newton from below; R is increasing on [0, yc]
    double y = x / decimation_derivative(spec, 0.0);
    for (int it = 0; it < 100; ++it) {
        double f = decimation_map(spec, y) - x;
        double step = f / decimation_derivative(spec, y);
        double next = y - step;
        if (!(next >= 0 && next <= yc))
            break;
        if (std::abs(next - y) <= 1e-17 * std::abs(next)) {
            y = next;
            return y;
        }
        y = next;
    }
    double lo = 0, hi = yc;
    for (int i = 0; i < 300; ++i) {
        double mid = 0.5 * (lo + hi);
        (decimation_map(spec, mid) < x ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace

std::optional<double> continuum_limit(const FractalSpec& spec, double x)
{
    if (spec.decimation.size() < 2 || spec.decimation[0] != 0.0)
        return std::nullopt;
    if (std::abs(x) < 1e-300)
        return 0.0;
    if (x < 0)
        return std::nullopt;
    const double yc = branch_end(spec);
    if (x > decimation_map(spec, yc) * (1 + 1e-12))
        return std::nullopt;
    const double t = decimation_derivative(spec, 0.0);
    double y = x, scale = 1, prev = x;
    for (int m = 0; m < 400; ++m) {
        y = lower_inverse(spec, y, yc);
        scale *= t;
        double val = scale * y;
        if (std::abs(val - prev) <= 1e-16 * std::abs(val))
            return val;
        prev = val;
    }
    return prev;
}

ScalingReport eigenvalue_scaling_check(std::shared_ptr<const FractalSpec> spec, int n, int M1,
                                       int M2, int K)
{
    ScalingReport rep;
    rep.M1 = M1;
    rep.M2 = M2;
    rep.n1 = n;
    rep.n2 = n + (M2 - M1);
    rep.K = K;
    rep.walk_dim = spec->walk_dim();
    auto a = spectrum_of(spec, M1, rep.n1, Boundary::Neumann, false);
    auto b = spectrum_of(spec, M2, rep.n2, Boundary::Neumann, false);
    const double factor = std::pow(spec->tau, M2 - M1);
    K = std::min({K, a.size(), b.size()});
    rep.K = K;
    auto rel = [](double x, double y) {
        double s = std::max(std::abs(x), std::abs(y));
        return s < 1e-10 ? std::abs(x - y) : std::abs(x - y) / s;
    };
    rep.renormalized_available = !spec->decimation.empty();
    for (int i = 0; i < K; ++i) {
        double lhs = a.mu[i], rhs = factor * b.mu[i];
        rep.raw_lhs.push_back(lhs);
        rep.raw_rhs.push_back(rhs);
        rep.raw_deviation = std::max(rep.raw_deviation, rel(lhs, rhs));
        if (rep.renormalized_available) {
            auto ca = continuum_limit(*spec, std::max(0.0, a.combinatorial[i]));
            auto cb = continuum_limit(*spec, std::max(0.0, b.combinatorial[i]));
            if (!ca || !cb) {
                rep.renormalized_available = false;
                continue;
            }
            double l = a.renorm * *ca, r = factor * b.renorm * *cb;
            rep.ren_lhs.push_back(l);
            rep.ren_rhs.push_back(r);
            rep.renormalized_deviation = std::max(rep.renormalized_deviation, rel(l, r));
        }
    }
    return rep;
}

std::optional<std::string> cache_dir()
{
    const char* env = std::getenv("FRACTAL_IDS_CACHE");
    if (!env || !*env)
        return std::nullopt;
    return std::string(env);
}

SpectrumBundle cached_spectrum(std::shared_ptr<const FractalSpec> spec, int M, int n, Boundary b,
                               bool vectors, bool* hit)
{
    if (hit)
        *hit = false;
    auto dir = cache_dir();
    if (!dir)
        return spectrum_of(spec, M, n, b, vectors);
    namespace fs = std::filesystem;
    const std::string key = sha256_hex(spec->hash() + "|" + std::to_string(M) + "|" +
                                       std::to_string(n) + "|" + to_string(b))
                                .substr(0, 24);
    const fs::path file = fs::path(*dir) / ("spectrum-" + key + ".json");
    if (fs::exists(file)) {
        std::ifstream in(file);
        nlohmann::json j;
        in >> j;
        if (!vectors || j.contains("psi")) {
            SpectrumBundle sb;
            sb.boundary = b;
            sb.M = M;
            sb.n = n;
            sb.spec_hash = j.at("spec_hash");
            sb.renorm = j.at("renorm");
            sb.total_mass = j.at("total_mass");
            sb.vertices = j.at("vertices").get<std::vector<int>>();
            auto ev = j.at("combinatorial").get<std::vector<double>>();
            auto w = j.at("weights").get<std::vector<double>>();
            sb.combinatorial = Eigen::Map<Eigen::VectorXd>(ev.data(), ev.size());
            sb.weights = Eigen::Map<Eigen::VectorXd>(w.data(), w.size());
            sb.mu = sb.renorm * sb.combinatorial;
            if (vectors) {
                auto cols = j.at("psi").get<std::vector<std::vector<double>>>();
                sb.psi.resize(ev.size(), ev.size());
                for (std::size_t c = 0; c < cols.size(); ++c)
                    for (std::size_t r = 0; r < cols[c].size(); ++r)
                        sb.psi(r, c) = cols[c][r];
            }
            if (hit)
                *hit = true;
            return sb;
        }
    }
    auto sb = spectrum_of(spec, M, n, b, vectors);
    nlohmann::json j;
    j["spec_hash"] = sb.spec_hash;
    j["M"] = M;
    j["n"] = n;
    j["boundary"] = to_string(b);
    j["renorm"] = sb.renorm;
    j["total_mass"] = sb.total_mass;
    j["vertices"] = sb.vertices;
    j["combinatorial"] = std::vector<double>(sb.combinatorial.data(),
                                             sb.combinatorial.data() + sb.combinatorial.size());
    j["weights"] = std::vector<double>(sb.weights.data(), sb.weights.data() + sb.weights.size());
    if (vectors) {
        std::vector<std::vector<double>> cols;
        for (int c = 0; c < sb.psi.cols(); ++c)
            cols.emplace_back(sb.psi.col(c).data(), sb.psi.col(c).data() + sb.psi.rows());
        j["psi"] = cols;
    }
    fs::create_directories(*dir);
    const fs::path tmp = file.string() + ".tmp";
    {
        std::ofstream out(tmp);
        out << j.dump();
    }
    fs::rename(tmp, file);
    return sb;
}

} // namespace fids
