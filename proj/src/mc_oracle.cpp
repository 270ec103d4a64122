#include "fids/mc_oracle.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <thread>

#include "fids/errors.hpp"
#include "fids/rng.hpp"

namespace fids {

std::string to_string(WalkMode m)
{
    switch (m) {
    case WalkMode::Free: return "free";
    case WalkMode::Reflected: return "reflected";
    case WalkMode::Killed: return "killed";
    }
    return "?";
}

void WalkConfig::validate() const
{
    if (!(t > 0))
        throw ConfigError("walk time must be positive");
    if (batches < 20)
        throw ConfigError("need at least 20 batches, got " + std::to_string(batches));
    if (paths < batches)
        throw ConfigError("fewer paths than batches");
    if (stable_exponent && !(*stable_exponent > 0 && *stable_exponent < 1))
        throw DomainError("stable exponent must lie in (0,1)");
    if (threads < 1)
        throw ConfigError("threads must be >= 1");
}

int WalkSampler::state_of(int v) const
{
    if (v < 0 || v >= static_cast<int>(m_state.size()) || m_state[v] < 0)
        throw OutOfLattice("lattice vertex " + std::to_string(v) + " is not a walk state");
    return m_state[v];
}

int WalkSampler::step(int s, double u) const
{
    const auto& row = m_rows[s];
    auto it = std::upper_bound(row.begin(), row.end(), u,
                               [](double x, const std::pair<int, double>& e) { return x < e.second; });
    if (it == row.end())
        return -1;
    return it->first;
}

double WalkSampler::jump_prob(int from, int to) const
{
    double prev = 0;
    for (const auto& [j, c] : m_rows[from]) {
        if (j == to)
            return c - prev;
        prev = c;
    }
    return 0;
}

WalkPath WalkSampler::sample(std::mt19937_64& g, int start, double t) const
{
    WalkPath p;
    p.states.push_back(start);
    p.times.push_back(0);
    std::exponential_distribution<double> hold(m_rate);
    double T = hold(g);
    int s = start;
    while (T <= t) {
        s = step(s, uniform01(g));
        if (s < 0) {
            p.dead = true;
            p.times.push_back(T);
            break;
        }
        p.states.push_back(s);
        p.times.push_back(T);
        if (m_escape[s]) {
            p.escaped = true;
            break;
        }
        T += hold(g);
    }
    return p;
}

WalkSampler WalkSampler::from_operator(const DiscreteLaplacian& L)
{
    WalkSampler w;
    w.m_mode = L.boundary == Boundary::Neumann ? WalkMode::Reflected : WalkMode::Killed;
    w.m_rate = L.rate * L.renorm;
    w.m_vertex = L.vertices;
    int nv = 0;
    for (int v : L.vertices)
        nv = std::max(nv, v + 1);
    w.m_state.assign(nv, -1);
    for (int i = 0; i < static_cast<int>(L.vertices.size()); ++i)
        w.m_state[L.vertices[i]] = i;
    const int n = static_cast<int>(L.vertices.size());
    w.m_rows.resize(n);
    for (int i = 0; i < n; ++i) {
        double c = 0;
        for (int j = 0; j < n; ++j)
            if (L.jump(i, j) > 0) {
                c += L.jump(i, j);
                w.m_rows[i].push_back({j, c});
            }
        // Neumann rows sum to one up to rounding
        if (w.m_mode == WalkMode::Reflected && !w.m_rows[i].empty())
            w.m_rows[i].back().second = 1.0 + 1e-15;
    }
    w.m_escape.assign(n, 0);
    w.m_weights = L.weights;
    w.m_mass = L.total_mass;
    return w;
}

WalkSampler WalkSampler::free_walk(const LatticeGraph& g)
{
    const FractalSpec& s = g.spec();
    WalkSampler w;
    w.m_mode = WalkMode::Free;
    w.m_rate = (s.k - 1) * s.r0 * std::pow(s.tau, g.depth() - g.level());
    const int n = g.num_vertices();
    w.m_vertex.resize(n);
    w.m_state.resize(n);
    w.m_rows.resize(n);
    w.m_escape.assign(n, 0);
    w.m_weights = Eigen::VectorXd::Zero(n);
    for (int v = 0; v < n; ++v) {
        w.m_vertex[v] = v;
        w.m_state[v] = v;
        std::vector<int> nb(g.nbr_begin(v), g.nbr_end(v));
        std::sort(nb.begin(), nb.end());
        const double p = 1.0 / nb.size();
        double c = 0;
        for (std::size_t i = 0; i < nb.size(); ++i) {
            c += p;
            if (i + 1 < nb.size() && nb[i + 1] == nb[i])
                continue;
            w.m_rows[v].push_back({nb[i], c});
        }
        w.m_rows[v].back().second = 1.0 + 1e-15;
        w.m_weights[v] = g.rank(v);
    }
    auto corners = g.outer_corners();
    for (std::size_t c = 1; c < corners.size(); ++c)
        w.m_escape[corners[c]] = 1;
    w.m_mass = w.m_weights.sum();
    return w;
}

WalkSampler simulate_walk(const WalkConfig& cfg, const LatticeGraph& lattice, WalkMode mode,
                          const FoldingMap* fold)
{
    cfg.validate();
    if (mode == WalkMode::Free)
        return WalkSampler::free_walk(lattice);
    auto measure = build_measure(lattice);
    auto L = build_laplacian(lattice, measure,
                             mode == WalkMode::Reflected ? Boundary::Neumann : Boundary::Dirichlet, fold);
    return WalkSampler::from_operator(L);
}

nlohmann::json TraceEstimate::to_json() const
{
    return {{"mc_mean", mean},     {"mc_stderr", stderr_},          {"paths", paths},
            {"batches", batches},  {"mode", fids::to_string(mode)}, {"with_potential", with_potential}};
}

namespace {

void check_phi(const WalkConfig& cfg, const BernsteinFunction& phi)
{
    using K = BernsteinFunction::Kind;
    if (cfg.stable_exponent) {
        if (phi.kind != K::Stable || std::abs(phi.exponent - *cfg.stable_exponent) > 1e-12)
            throw IncompatiblePhi("stable time change with exponent " +
                                  std::to_string(*cfg.stable_exponent) + " needs phi = lambda^a, got " +
                                  phi.name());
    } else if (phi.kind != K::Identity) {
        throw IncompatiblePhi("walk without time change samples phi = identity, got " + phi.name());
    }
}

// one path of the trace estimator started at x
double path_weight(const WalkSampler& w, const Eigen::VectorXd& Vs, int x, double t,
                   std::mt19937_64& g)
{
    const bool pot = Vs.size() > 0;
    std::exponential_distribution<double> hold(w.rate());
    double T = 0, logw = 0;
    int s = x;
    double E = hold(g);
    if (T + E > t)
        return std::exp(pot ? -Vs[x] * t : 0.0);
    while (true) {
        const double Tn = T + E;
        if (pot)
            logw -= Vs[s] * E;
        const double E2 = hold(g);
        if (Tn + E2 > t) {
            // last jump before t: average the indicator over its destination
            if (pot)
                logw -= Vs[x] * (t - Tn);
            return w.jump_prob(s, x) * std::exp(logw);
        }
        s = w.step(s, uniform01(g));
        if (s < 0)
            return 0;
        T = Tn;
        E = E2;
    }
}

} // namespace

TraceEstimate estimate_trace(const WalkSampler& walk, const WalkConfig& cfg, const BernsteinFunction& phi,
                             const Eigen::VectorXd& V)
{
    cfg.validate();
    check_phi(cfg, phi);
    if (walk.mode() == WalkMode::Free)
        throw ConfigError("trace estimation needs a reflected or killed walk");
    const int n = walk.size();
    Eigen::VectorXd Vs;
    if (V.size() > 0) {
        if (cfg.stable_exponent)
            throw ConfigError("a potential together with the stable time change is not supported");
        Vs.resize(n);
        for (int s = 0; s < n; ++s) {
            const int v = walk.lattice_vertex(s);
            if (v >= V.size())
                throw ConfigError("potential shorter than the lattice");
            if (!(V[v] >= 0))
                throw NegativePotential("V = " + std::to_string(V[v]) + " at vertex " + std::to_string(v));
            Vs[s] = V[v];
        }
    }
    const Eigen::VectorXd& wts = walk.weights();
    const double W = wts.sum();
    std::vector<double> cum(n);
    double c = 0;
    for (int s = 0; s < n; ++s)
        cum[s] = (c += wts[s] / W);

    std::vector<double> vals(cfg.paths);
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int p; (p = next++) < cfg.paths;) {
            auto g = stream(cfg.seed, static_cast<std::uint64_t>(p), 0x3C);
            int x = static_cast<int>(std::upper_bound(cum.begin(), cum.end(), uniform01(g)) - cum.begin());
            x = std::min(x, n - 1);
            double t = cfg.t;
            if (cfg.stable_exponent)
                t = sample_stable_subordinator(*cfg.stable_exponent, cfg.t, g);
            vals[p] = path_weight(walk, Vs, x, t, g) * W / (wts[x] * walk.total_mass());
        }
    };
    if (cfg.threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < cfg.threads; ++i)
            pool.emplace_back(worker);
        for (auto& th : pool)
            th.join();
    }

    TraceEstimate e;
    e.paths = cfg.paths;
    e.batches = cfg.batches;
    e.mode = walk.mode();
    e.with_potential = V.size() > 0;
    e.batch_means.assign(cfg.batches, 0);
    std::vector<int> counts(cfg.batches, 0);
    for (int p = 0; p < cfg.paths; ++p) {
        const int b = static_cast<int>(static_cast<long long>(p) * cfg.batches / cfg.paths);
        e.batch_means[b] += vals[p];
        ++counts[b];
    }
    for (int b = 0; b < cfg.batches; ++b)
        e.batch_means[b] /= counts[b];
    double m = 0;
    for (double x : e.batch_means)
        m += x;
    m /= cfg.batches;
    double v = 0;
    for (double x : e.batch_means)
        v += (x - m) * (x - m);
    v /= cfg.batches - 1;
    e.mean = m;
    e.stderr_ = std::sqrt(v / cfg.batches);
    return e;
}

double spectral_trace(const SpectrumBundle& sb, const BernsteinFunction& phi, const Eigen::VectorXd& V,
                      double t)
{
    Eigen::VectorXd lam;
    if (V.size() == 0) {
        lam.resize(sb.size());
        for (int i = 0; i < sb.size(); ++i)
            lam[i] = phi(std::max(0.0, sb.mu[i]));
    } else {
        Eigen::VectorXd Vr(sb.size());
        for (int i = 0; i < sb.size(); ++i)
            Vr[i] = V[sb.vertices[i]];
        lam = symmetric_eigenvalues(schrodinger_matrix(sb, phi, Vr));
    }
    double s = 0;
    for (int i = 0; i < lam.size(); ++i)
        s += std::exp(-t * lam[i]);
    return s / sb.total_mass;
}

double sample_stable_subordinator(double a, double t, std::mt19937_64& g)
{
    if (!(a > 0 && a < 1))
        throw DomainError("stable exponent must lie in (0,1), got " + std::to_string(a));
    if (!(t >= 0))
        throw DomainError("negative time");
    // Kanter's representation of the one-sided a-stable law
    double U;
    do
        U = std::numbers::pi * uniform01(g);
    while (U == 0);
    std::exponential_distribution<double> ex(1.0);
    const double E = ex(g);
    const double S1 = std::sin(a * U) / std::pow(std::sin(U), 1 / a) *
                      std::pow(std::sin((1 - a) * U) / E, (1 - a) / a);
    return std::pow(t, 1 / a) * S1;
}

double sample_stable_subordinator(double a, double t, std::uint64_t seed)
{
    auto g = stream(seed, 0, 0x57);
    return sample_stable_subordinator(a, t, g);
}

std::vector<LaplaceRow> stable_laplace_check(double a, double t, const std::vector<double>& lambdas,
                                             int draws, std::uint64_t seed)
{
    std::vector<double> S(draws);
    auto g = stream(seed, 0, 0x57);
    for (auto& s : S)
        s = sample_stable_subordinator(a, t, g);
    std::vector<LaplaceRow> out;
    for (double l : lambdas) {
        LaplaceRow r;
        r.lambda = l;
        double m = 0, m2 = 0;
        for (double s : S) {
            const double e = std::exp(-l * s);
            m += e;
            m2 += e * e;
        }
        m /= draws;
        m2 /= draws;
        r.mean = m;
        r.se = std::sqrt(std::max(0.0, m2 - m * m) / draws);
        r.exact = std::exp(-t * std::pow(l, a));
        r.z = r.se > 0 ? (r.mean - r.exact) / r.se : 0;
        out.push_back(r);
    }
    return out;
}

double ks_statistic(std::vector<double> a, std::vector<double> b)
{
    if (a.empty() || b.empty())
        throw ConfigError("empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double D = 0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x)
            ++i;
        while (j < b.size() && b[j] <= x)
            ++j;
        D = std::max(D, std::abs(double(i) / a.size() - double(j) / b.size()));
    }
    return D;
}

double ks_pvalue(double D, std::size_t n, std::size_t m)
{
    const double ne = double(n) * m / (n + m);
    const double s = std::sqrt(ne);
    const double lam = (s + 0.12 + 0.11 / s) * D;
    if (lam < 1e-3)
        return 1;
    double q = 0;
    for (int k = 1; k <= 200; ++k) {
        const double term = 2 * ((k % 2) ? 1 : -1) * std::exp(-2.0 * k * k * lam * lam);
        q += term;
        if (std::abs(term) < 1e-16)
            break;
    }
    return std::clamp(q, 0.0, 1.0);
}

ChiSquare chi_square_homogeneity(const std::vector<long>& a, const std::vector<long>& b)
{
    if (a.size() != b.size())
        throw ConfigError("count vectors differ in length");
    double na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        na += a[i];
        nb += b[i];
    }
    if (na == 0 || nb == 0)
        throw ConfigError("empty sample");
    const double ka = std::sqrt(nb / na), kb = std::sqrt(na / nb);
    ChiSquare r;
    int cells = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] + b[i] == 0)
            continue;
        const double d = ka * a[i] - kb * b[i];
        r.statistic += d * d / (a[i] + b[i]);
        ++cells;
    }
    r.dof = cells - 1;
    if (r.dof < 1) {
        r.p_value = 1;
        return r;
    }
    boost::math::chi_squared dist(r.dof);
    r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
    return r;
}

nlohmann::json FoldReport::to_json() const
{
    return {{"paths", paths},          {"escaped", escaped},     {"cells", cells},
            {"chi2", chi2.statistic},  {"dof", chi2.dof},        {"p_value", chi2.p_value},
            {"pass", pass}};
}

FoldReport folded_walk_invariance(std::shared_ptr<const FractalSpec> spec, int M, int n, double t,
                                  int paths, std::uint64_t seed, int R)
{
    if (R < 1)
        throw ConfigError("need at least one extra level");
    auto target = enumerate_lattice(spec, M, n);
    auto big = enumerate_lattice(spec, M + R, n + R);
    auto fold = make_folding(spec, M, R);
    auto fold1 = R == 1 ? fold : make_folding(spec, M, 1);

    WalkSampler refl = WalkSampler::from_operator(
        build_laplacian(*target, build_measure(*target), Boundary::Neumann, fold1.get()));
    WalkSampler free = WalkSampler::free_walk(*big);

    std::vector<int> image(big->num_vertices());
    for (int v = 0; v < big->num_vertices(); ++v)
        image[v] = fold->project(*target, big->id(v));

    // start in the middle of K^<M>: the vertex closest to the centroid
    Vec2 c = Vec2::Zero();
    for (const auto& p : spec->corners)
        c += p;
    c /= spec->corners.size();
    c *= std::pow(spec->L, M);
    int x0 = 0;
    for (int v = 1; v < target->num_vertices(); ++v)
        if ((target->coord(v) - c).norm() < (target->coord(x0) - c).norm())
            x0 = v;
    const int xb = big->find(target->id(x0));

    FoldReport rep;
    rep.paths = paths;
    std::vector<long> a(target->num_vertices(), 0), b(target->num_vertices(), 0);
    for (int p = 0; p < paths; ++p) {
        auto g1 = stream(seed, static_cast<std::uint64_t>(p), 0xF1);
        auto w1 = refl.sample(g1, refl.state_of(x0), t);
        ++a[refl.lattice_vertex(w1.states.back())];
        auto g2 = stream(seed, static_cast<std::uint64_t>(p), 0xF2);
        auto w2 = free.sample(g2, xb, t);
        if (w2.escaped) {
            ++rep.escaped;
            continue;
        }
        ++b[image[w2.states.back()]];
    }
    rep.chi2 = chi_square_homogeneity(a, b);
    rep.cells = rep.chi2.dof + 1;
    rep.pass = rep.escaped == 0 && rep.chi2.p_value > 0.01;
    return rep;
}

} // namespace fids
