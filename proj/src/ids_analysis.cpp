#include "fids/ids_analysis.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "fids/errors.hpp"
#include "fids/rng.hpp"

namespace fids {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_grid(const std::vector<double>& g, const char* what)
{
    if (g.empty())
        throw ConfigError(std::string(what) + " grid is empty");
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(g[i] > 0) && std::string(what) == "t")
            throw ConfigError("t grid must be positive");
        if (i && !(g[i] > g[i - 1]))
            throw ConfigError(std::string(what) + " grid must be strictly increasing");
    }
}

double mean_of(const std::vector<double>& v)
{
    double s = 0;
    for (double x : v)
        s += x;
    return v.empty() ? 0 : s / v.size();
}

double var_of(const std::vector<double>& v)
{
    if (v.size() < 2)
        return 0;
    double m = mean_of(v), s = 0;
    for (double x : v)
        s += (x - m) * (x - m);
    return s / (v.size() - 1);
}

std::size_t nearest(const std::vector<double>& grid, double t)
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (std::abs(std::log(grid[i] / t)) < std::abs(std::log(grid[best] / t)))
            best = i;
    return best;
}

// per level: spectra, phi(-L) per boundary, potential kernel
struct LevelContext {
    int M = 0, n = 0;
    std::map<Boundary, SpectrumBundle> sb;
    std::map<Boundary, Eigen::MatrixXd> phiL;
    std::optional<PotentialKernel> kernel;
};

LevelContext make_level(const EnsembleConfig& cfg, int M, const std::vector<Boundary>& bs)
{
    LevelContext c;
    c.M = M;
    c.n = M + cfg.depth_offset;
    for (Boundary b : bs) {
        if (c.sb.count(b))
            continue;
        c.sb[b] = spectrum_of(cfg.spec, M, c.n, b, true);
        Eigen::MatrixXd P = phi_of_operator(c.sb[b], cfg.phi);
        c.phiL[b] = 0.5 * (P + P.transpose());
    }
    if (!cfg.zero_potential)
        c.kernel = build_kernel(cfg.spec, M, c.n, cfg.profile);
    return c;
}

Eigen::VectorXd rows_of(const SpectrumBundle& sb, const Eigen::VectorXd& field)
{
    Eigen::VectorXd V(sb.size());
    for (int i = 0; i < sb.size(); ++i)
        V[i] = field[sb.vertices[i]];
    return V;
}

Eigen::VectorXd solve(const Eigen::MatrixXd& phiL, const Eigen::VectorXd& V)
{
    Eigen::MatrixXd H = phiL;
    H.diagonal() += V;
    return symmetric_eigenvalues(H);
}

void validate_config(const EnsembleConfig& cfg)
{
    if (!cfg.spec)
        throw ConfigError("ensemble needs a fractal spec");
    if (cfg.samples < 2)
        throw ConfigError("ensemble needs S >= 2 samples");
    if (cfg.Ms.empty())
        throw ConfigError("ensemble needs at least one level M");
    for (int M : cfg.Ms)
        if (M < 0)
            throw ConfigError("levels M must be >= 0");
    if (cfg.depth_offset < 0)
        throw ConfigError("depth offset must be >= 0");
    if (cfg.series.empty())
        throw ConfigError("no (boundary, field) series requested");
    check_grid(cfg.t_grid, "t");
    check_grid(cfg.lambda_grid, "lambda");
    cfg.phi.validate();
    if (!cfg.zero_potential)
        cfg.profile.validate(cfg.spec->N);
}

} // namespace

// ---------------------------------------------------------------- counting

double CountingMeasure::operator()(double lambda) const
{
    return static_cast<double>(count(lambda)) / normalization;
}

std::size_t CountingMeasure::count(double lambda) const
{
    return static_cast<std::size_t>(std::upper_bound(eigenvalues.begin(), eigenvalues.end(), lambda) -
                                    eigenvalues.begin());
}

CountingMeasure counting_measure(const Eigen::VectorXd& eigenvalues, int M, Boundary b,
                                 double normalization)
{
    CountingMeasure cm;
    cm.boundary = b;
    cm.M = M;
    cm.normalization = normalization;
    cm.eigenvalues.assign(eigenvalues.data(), eigenvalues.data() + eigenvalues.size());
    if (!std::is_sorted(cm.eigenvalues.begin(), cm.eigenvalues.end()))
        throw ConfigError("counting measure needs a sorted spectrum");
    return cm;
}

double laplace_value(const CountingMeasure& cm, double t)
{
    if (cm.eigenvalues.empty())
        return 0;
    const double l1 = cm.eigenvalues.front();
    double s = 0;
    for (double l : cm.eigenvalues)
        s += std::exp(-t * (l - l1));
    return std::exp(-t * l1) * s / cm.normalization;
}

bool LaplaceCurve::completely_monotone(double tol) const
{
    for (std::size_t i = 0; i < mean.size(); ++i) {
        if (!(mean[i] > 0))
            return false;
        if (i && mean[i] > mean[i - 1] + tol)
            return false;
        if (i >= 2) {
            // second divided difference on a possibly uneven grid
            double s1 = (mean[i] - mean[i - 1]) / (t[i] - t[i - 1]);
            double s0 = (mean[i - 1] - mean[i - 2]) / (t[i - 1] - t[i - 2]);
            if (s1 - s0 < -tol)
                return false;
        }
    }
    return true;
}

LaplaceCurve laplace_transform(const CountingMeasure& cm, const std::vector<double>& t_grid)
{
    check_grid(t_grid, "t");
    LaplaceCurve c;
    c.t = t_grid;
    c.count = 1;
    for (double t : t_grid)
        c.mean.push_back(laplace_value(cm, t));
    c.var.assign(t_grid.size(), 0.0);
    return c;
}

std::vector<double> geometric_grid(double lo, double hi, int per_decade)
{
    if (!(lo > 0 && hi > lo && per_decade > 0))
        throw ConfigError("geometric grid needs 0 < lo < hi");
    const int n = static_cast<int>(std::ceil(std::log10(hi / lo) * per_decade - 1e-9));
    std::vector<double> g;
    for (int i = 0; i <= n; ++i)
        g.push_back(lo * std::pow(10.0, static_cast<double>(i) / per_decade));
    g.back() = std::min(g.back(), hi);
    if (g.size() >= 2 && !(g.back() > g[g.size() - 2]))
        g.pop_back();
    return g;
}

// ---------------------------------------------------------------- gates

GateReport run_gates(const EnsembleConfig& cfg)
{
    GateReport r;
    auto fail = [&](const std::string& f) {
        r.ok = false;
        r.failures.push_back(f);
    };
    const auto& spec = *cfg.spec;

    bool glp = true;
    for (int M : cfg.Ms) {
        try {
            make_folding(cfg.spec, M, 1);
        } catch (const MissingFolding& e) {
            glp = false;
            r.details["glp_witness"] = e.what();
        }
    }
    r.details["glp"] = glp;
    if (!glp)
        fail("GLP");

    try {
        auto b = check_assumption_B(cfg.phi, spec.walk_dim());
        r.details["B"] = b.to_json();
    } catch (const ViolatesB& e) {
        r.details["B"] = {{"ok", false}, {"reason", e.what()}};
        fail("(B)");
    }

    if (cfg.zero_potential) {
        r.details["potential"] = "zero";
        return r;
    }
    const bool q1 = cfg.law.check_Q1(), q2 = cfg.law.check_Q2(cfg.lambda0);
    r.details["Q1"] = q1;
    r.details["Q2"] = {{"ok", q2}, {"lambda0", cfg.lambda0}};
    if (!q1)
        fail("(Q1)");
    if (!q2)
        fail("(Q2)");

    auto w = verify_W_conditions(cfg.spec, cfg.profile, cfg.w_levels);
    r.details["W"] = w.to_json();
    if (!w.w1)
        fail("(W1)");
    if (!w.w2)
        fail("(W2)");
    if (!w.w3)
        fail("(W3)");
    if (w.w4 && !*w.w4)
        fail("(W4)");
    if (w.w5 && !*w.w5)
        fail("(W5)");
    return r;
}

// ---------------------------------------------------------------- ensembles

std::uint64_t sample_seed(std::uint64_t base, int s)
{
    // splitmix64 step
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(s) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

const EnsembleSeries* EnsembleResult::find(int M, Boundary b, FieldMode mode) const
{
    for (const auto& s : series)
        if (s.M == M && s.boundary == b && s.mode == mode)
            return &s;
    return nullptr;
}

const EnsembleSeries& EnsembleResult::get(int M, Boundary b, FieldMode mode) const
{
    if (auto* s = find(M, b, mode))
        return *s;
    throw ConfigError("no ensemble series for M=" + std::to_string(M) + " " + to_string(b) + "/" +
                      to_string(mode));
}

nlohmann::json EnsembleResult::convergence_table() const
{
    std::vector<const EnsembleSeries*> rows;
    for (const auto& s : series)
        if (s.boundary == Boundary::Neumann && s.mode == FieldMode::Periodized)
            rows.push_back(&s);
    std::sort(rows.begin(), rows.end(), [](auto a, auto b) { return a->M < b->M; });
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
        nlohmann::json row{{"t", t_grid[i]}};
        nlohmann::json per = nlohmann::json::array();
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const auto& s = *rows[k];
            nlohmann::json e{{"M", s.M},
                             {"mean", s.laplace_mean[i]},
                             {"stderr", std::sqrt(s.laplace_var[i] / s.samples())}};
            if (k)
                e["delta"] = s.laplace_mean[i] - rows[k - 1]->laplace_mean[i];
            per.push_back(e);
        }
        row["levels"] = per;
        out.push_back(row);
    }
    return out;
}

EnsembleResult ensemble_run(const EnsembleConfig& cfg)
{
    validate_config(cfg);
    EnsembleResult res;
    res.t_grid = cfg.t_grid;
    res.lambda_grid = cfg.lambda_grid;
    if (cfg.check_gates) {
        res.gates = run_gates(cfg);
        if (!res.gates.ok) {
            std::string msg;
            for (const auto& f : res.gates.failures)
                msg += (msg.empty() ? "" : ", ") + f;
            throw GateFailure("violated: " + msg);
        }
    }

    std::vector<Boundary> bs;
    for (auto [b, m] : cfg.series)
        if (std::find(bs.begin(), bs.end(), b) == bs.end())
            bs.push_back(b);

    std::vector<LevelContext> levels;
    for (int M : cfg.Ms)
        levels.push_back(make_level(cfg, M, bs));

    const int S = cfg.samples;
    for (const auto& lv : levels)
        for (auto [b, mode] : cfg.series) {
            EnsembleSeries s;
            s.M = lv.M;
            s.n = lv.n;
            s.boundary = b;
            s.mode = mode;
            s.normalization = lv.sb.at(b).total_mass;
            for (int i = 0; i < S; ++i)
                s.seeds.push_back(sample_seed(cfg.seed, i));
            s.eigenvalues.resize(S);
            s.laplace.resize(S);
            s.counting.resize(S);
            res.series.push_back(std::move(s));
        }

    const int nseries = static_cast<int>(cfg.series.size());
    const int ntasks = static_cast<int>(levels.size()) * S;
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex err_mu;

    auto work = [&] {
        for (;;) {
            int task = next.fetch_add(1);
            if (task >= ntasks)
                return;
            try {
                const int li = task / S, si = task % S;
                const auto& lv = levels[li];
                const std::uint64_t seed = sample_seed(cfg.seed, si);
                std::map<FieldMode, Eigen::VectorXd> fields;
                std::optional<DisorderSample> xi;
                if (!cfg.zero_potential)
                    xi = sample_disorder(cfg.law, lv.kernel->sites, seed);
                for (int k = 0; k < nseries; ++k) {
                    auto [b, mode] = cfg.series[k];
                    const auto& sb = lv.sb.at(b);
                    Eigen::VectorXd V = Eigen::VectorXd::Zero(sb.size());
                    if (xi) {
                        if (!fields.count(mode))
                            fields[mode] = potential_field(*lv.kernel, *xi, mode);
                        V = rows_of(sb, fields[mode]);
                    }
                    Eigen::VectorXd ev = solve(lv.phiL.at(b), V);
                    auto& s = res.series[li * nseries + k];
                    auto cm = counting_measure(ev, lv.M, b, sb.total_mass);
                    for (double t : cfg.t_grid)
                        s.laplace[si].push_back(laplace_value(cm, t));
                    for (double l : cfg.lambda_grid)
                        s.counting[si].push_back(cm(l));
                    s.eigenvalues[si] = std::move(cm.eigenvalues);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!err)
                    err = std::current_exception();
            }
        }
    };
    const int nt = std::max(1, std::min(cfg.threads, ntasks));
    if (nt == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < nt; ++i)
            pool.emplace_back(work);
        for (auto& t : pool)
            t.join();
    }
    if (err)
        std::rethrow_exception(err);

    for (auto& s : res.series) {
        for (std::size_t i = 0; i < cfg.t_grid.size(); ++i) {
            std::vector<double> col;
            for (const auto& row : s.laplace)
                col.push_back(row[i]);
            s.laplace_mean.push_back(mean_of(col));
            s.laplace_var.push_back(var_of(col));
        }
        for (std::size_t i = 0; i < cfg.lambda_grid.size(); ++i) {
            std::vector<double> col;
            for (const auto& row : s.counting)
                col.push_back(row[i]);
            s.counting_mean.push_back(mean_of(col));
            s.counting_var.push_back(var_of(col));
        }
    }
    return res;
}

// ---------------------------------------------------------------- tilted ensemble

nlohmann::json TiltedEnsemble::to_json() const
{
    return {{"M", M},
            {"n", n},
            {"samples", samples},
            {"components", components},
            {"ess", ess},
            {"t_grid", t_grid},
            {"lambda_grid", lambda_grid},
            {"counting_mean", counting_mean},
            {"counting_se", counting_se},
            {"laplace_mean", laplace_mean},
            {"laplace_se", laplace_se}};
}

TiltedEnsemble tilted_ensemble(const TiltedConfig& cfg)
{
    if (!cfg.spec)
        throw ConfigError("tilted ensemble needs a fractal spec");
    if (cfg.law.kind != DisorderLaw::Kind::Bernoulli)
        throw ConfigError("tilted ensemble needs a Bernoulli law");
    if (cfg.M < 1 || cfg.depth_offset < 0)
        throw ConfigError("tilted ensemble needs M >= 1 and depth offset >= 0");
    if (cfg.samples < 2)
        throw ConfigError("tilted ensemble needs S >= 2 samples");
    for (double q : cfg.tilts)
        if (!(q > 0 && q < 1))
            throw ConfigError("tilts must lie in (0, 1)");
    check_grid(cfg.t_grid, "t");
    check_grid(cfg.lambda_grid, "lambda");
    cfg.phi.validate();
    const double p0 = cfg.law.p0;
    if (!(p0 > 0 && p0 < 1))
        throw ConfigError("tilted ensemble needs 0 < p0 < 1");

    std::vector<int> levels = cfg.levels;
    if (levels.empty())
        for (int m = 1; m <= cfg.M; ++m)
            levels.push_back(m);
    for (int m : levels)
        if (m < 0 || m > cfg.M)
            throw ConfigError("cell levels must lie in [0, M]");

    const int M = cfg.M, n = M + cfg.depth_offset;
    const auto& spec = *cfg.spec;
    auto sb = spectrum_of(cfg.spec, M, n, Boundary::Neumann, true);
    Eigen::MatrixXd phiL = phi_of_operator(sb, cfg.phi);
    phiL = 0.5 * (phiL + phiL.transpose());
    auto kernel = build_kernel(cfg.spec, M, n, cfg.profile);
    const auto& sites = *kernel.sites;

    // only the image sites enter the periodized field
    std::vector<int> relevant(kernel.image.begin(), kernel.image.end());
    std::sort(relevant.begin(), relevant.end());
    relevant.erase(std::unique(relevant.begin(), relevant.end()), relevant.end());

    // component j >= 1: (site list, tilt)
    std::vector<std::vector<int>> members{{}};
    std::vector<double> tilt{p0};
    const std::int64_t inside = ipow(spec.N, M);
    for (int m : levels) {
        std::map<std::int64_t, std::vector<int>> cells;
        const std::int64_t Nm = ipow(spec.N, m);
        for (int v : relevant)
            for (const Node* it = sites.inc_begin(v); it != sites.inc_end(v); ++it) {
                const std::int64_t c = *it / spec.k;
                if (c < inside)
                    cells[c / Nm].push_back(v);
            }
        for (auto& [_, list] : cells) {
            list.erase(std::unique(list.begin(), list.end()), list.end());
            for (double q : cfg.tilts) {
                members.push_back(list);
                tilt.push_back(q);
            }
        }
    }
    const int J = static_cast<int>(members.size());
    std::vector<int> pos(sites.num_vertices(), -1);
    for (std::size_t i = 0; i < relevant.size(); ++i)
        pos[relevant[i]] = static_cast<int>(i);

    const int S = cfg.samples;
    std::vector<double> weight(S);
    std::vector<std::vector<double>> counting(S), laplace(S);
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex err_mu;

    auto work = [&] {
        for (;;) {
            const int s = next.fetch_add(1);
            if (s >= S)
                return;
            try {
                const int comp = s % J;
                std::vector<char> in(sites.num_vertices(), 0);
                for (int v : members[comp])
                    in[v] = 1;
                const std::uint64_t seed = sample_seed(cfg.seed, s);
                DisorderSample xi;
                xi.seed = seed;
                xi.sites = kernel.sites;
                xi.xi.assign(sites.num_vertices(), cfg.law.a);
                std::vector<char> zero(relevant.size(), 0);
                for (std::size_t i = 0; i < relevant.size(); ++i) {
                    const int v = relevant[i];
                    auto g = stream(seed, static_cast<std::uint64_t>(sites.node(v)), 0x78);
                    const double q = in[v] ? tilt[comp] : p0;
                    if (uniform01(g) < q) {
                        xi.xi[v] = 0;
                        zero[i] = 1;
                    }
                }
                // Q_j / p in logs, then p / mean_j Q_j
                std::vector<double> lr(J, 0.0);
                for (int j = 1; j < J; ++j) {
                    const double l0 = std::log(tilt[j] / p0), l1 = std::log((1 - tilt[j]) / (1 - p0));
                    for (int v : members[j])
                        lr[j] += zero[pos[v]] ? l0 : l1;
                }
                const double top = *std::max_element(lr.begin(), lr.end());
                double sum = 0;
                for (double x : lr)
                    sum += std::exp(x - top);
                weight[s] = std::exp(-top) * J / sum;

                Eigen::VectorXd V = rows_of(sb, potential_field(kernel, xi, FieldMode::Periodized));
                auto cm = counting_measure(solve(phiL, V), M, Boundary::Neumann, sb.total_mass);
                for (double t : cfg.t_grid)
                    laplace[s].push_back(laplace_value(cm, t));
                for (double l : cfg.lambda_grid)
                    counting[s].push_back(cm(l));
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!err)
                    err = std::current_exception();
            }
        }
    };
    const int nt = std::max(1, std::min(cfg.threads, S));
    if (nt == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < nt; ++i)
            pool.emplace_back(work);
        for (auto& t : pool)
            t.join();
    }
    if (err)
        std::rethrow_exception(err);

    TiltedEnsemble r;
    r.M = M;
    r.n = n;
    r.samples = S;
    r.components = J;
    r.t_grid = cfg.t_grid;
    r.lambda_grid = cfg.lambda_grid;
    auto column = [&](const std::vector<std::vector<double>>& rows, std::size_t i, std::vector<double>& mean,
                      std::vector<double>& se) {
        std::vector<double> col(S);
        for (int s = 0; s < S; ++s)
            col[s] = weight[s] * rows[s][i];
        mean.push_back(mean_of(col));
        se.push_back(std::sqrt(var_of(col) / S));
    };
    for (std::size_t i = 0; i < cfg.lambda_grid.size(); ++i)
        column(counting, i, r.counting_mean, r.counting_se);
    for (std::size_t i = 0; i < cfg.t_grid.size(); ++i)
        column(laplace, i, r.laplace_mean, r.laplace_se);
    double sw = 0, sw2 = 0;
    for (double w : weight) {
        sw += w;
        sw2 += w * w;
    }
    r.ess = sw2 > 0 ? sw * sw / sw2 : 0;
    return r;
}

Eigen::VectorXd instance_eigenvalues(const EnsembleConfig& cfg, int M, Boundary b, FieldMode mode,
                                     std::uint64_t seed)
{
    auto lv = make_level(cfg, M, {b});
    const auto& sb = lv.sb.at(b);
    Eigen::VectorXd V = Eigen::VectorXd::Zero(sb.size());
    if (!cfg.zero_potential) {
        auto xi = sample_disorder(cfg.law, lv.kernel->sites, seed);
        V = rows_of(sb, potential_field(*lv.kernel, xi, mode));
    }
    return solve(lv.phiL.at(b), V);
}

std::vector<MonotonicityRow> monotonicity_check(const EnsembleResult& r, double z, Boundary b,
                                                FieldMode mode)
{
    std::vector<const EnsembleSeries*> rows;
    for (const auto& s : r.series)
        if (s.boundary == b && s.mode == mode)
            rows.push_back(&s);
    std::sort(rows.begin(), rows.end(), [](auto a, auto c) { return a->M < c->M; });
    std::vector<MonotonicityRow> out;
    for (std::size_t k = 1; k < rows.size(); ++k) {
        const auto &lo = *rows[k - 1], &hi = *rows[k];
        for (std::size_t i = 0; i < r.t_grid.size(); ++i) {
            MonotonicityRow m;
            m.M = lo.M;
            m.t = r.t_grid[i];
            m.lower = lo.laplace_mean[i];
            m.upper = hi.laplace_mean[i];
            m.pooled_se = std::sqrt(lo.laplace_var[i] / lo.samples() + hi.laplace_var[i] / hi.samples());
            m.ok = m.upper <= m.lower + z * m.pooled_se + 1e-14 * std::abs(m.lower);
            out.push_back(m);
        }
    }
    return out;
}

std::vector<GapRow> dn_gap(const EnsembleResult& r, double t, FieldMode mode)
{
    const std::size_t i = nearest(r.t_grid, t);
    std::vector<GapRow> out;
    for (const auto& d : r.series) {
        if (d.boundary != Boundary::Dirichlet || d.mode != mode)
            continue;
        const auto* n = r.find(d.M, Boundary::Neumann, mode);
        if (!n)
            continue;
        std::vector<double> sq;
        for (int s = 0; s < d.samples(); ++s) {
            double g = d.laplace[s][i] - n->laplace[s][i];
            sq.push_back(g * g);
        }
        out.push_back({d.M, r.t_grid[i], mean_of(sq), std::sqrt(var_of(sq) / sq.size())});
    }
    std::sort(out.begin(), out.end(), [](auto& a, auto& b) { return a.M < b.M; });
    return out;
}

OrderingReport ordering_check(const EnsembleResult& r, FieldMode mode, double tol)
{
    OrderingReport rep;
    for (const auto& d : r.series) {
        if (d.boundary != Boundary::Dirichlet || d.mode != mode)
            continue;
        const auto* n = r.find(d.M, Boundary::Neumann, mode);
        if (!n)
            continue;
        for (int s = 0; s < d.samples(); ++s) {
            ++rep.instances;
            bool bad = false;
            const auto &D = d.eigenvalues[s], &N = n->eigenvalues[s];
            if (D.size() > N.size())
                bad = true;
            for (std::size_t k = 0; k < D.size() && k < N.size(); ++k) {
                double gap = N[k] - D[k];
                rep.worst = std::max(rep.worst, gap);
                if (gap > tol * std::max(1.0, std::abs(N[k])))
                    bad = true;
            }
            for (std::size_t i = 0; i < r.t_grid.size(); ++i) {
                double gap = d.laplace[s][i] - n->laplace[s][i];
                rep.worst = std::max(rep.worst, gap);
                if (gap > tol * std::max(1.0, n->laplace[s][i]))
                    bad = true;
            }
            rep.violations += bad;
        }
    }
    return rep;
}

// ---------------------------------------------------------------- rate functions

Mu21Estimate estimate_mu21(std::shared_ptr<const FractalSpec> spec, int n_max)
{
    if (n_max < 1)
        throw ConfigError("mu_2^1 needs depth n >= 1");
    Mu21Estimate e;
    for (int n = std::max(1, n_max - 2); n <= n_max; ++n) {
        auto sb = cached_spectrum(spec, 1, n, Boundary::Neumann, false);
        if (sb.size() < 2)
            continue;
        e.depths.push_back(n);
        e.discrete.push_back(sb.mu[1]);
    }
    if (e.discrete.empty())
        throw ConfigError("no second Neumann eigenvalue of K^<1>");
    const double last = e.discrete.back();
    e.value = last;
    e.method = "discrete";
    if (e.discrete.size() >= 3) {
        const std::size_t m = e.discrete.size();
        double a0 = e.discrete[m - 3], a1 = e.discrete[m - 2], a2 = e.discrete[m - 1];
        double den = (a2 - a1) - (a1 - a0);
        if (std::abs(den) > 1e-300) {
            e.value = a2 - (a2 - a1) * (a2 - a1) / den;
            e.method = "aitken";
        }
    }
    const double res = std::abs(e.value - last);
    e.lo = e.value - res;
    e.hi = e.value + res;
    return e;
}

double D0_formula(double C1_tilde, double A0, double C0, int r0)
{
    return C1_tilde / (4 * A0 * C0 * r0);
}

double RateFunctions::g(double x) const
{
    if (!(x > 0))
        return 0;
    double F = law.cdf(D0 / x);
    if (F >= 1)
        return 0;
    return F > 0 ? -std::log(F) : kInf;
}

double RateFunctions::j(double x) const
{
    if (!(x > 0))
        return 0;
    return std::pow(x, d + alpha) * g(std::pow(x, alpha));
}

double RateFunctions::x_t(double t) const
{
    if (!(t > 0))
        throw DomainError("x_t needs t > 0");
    double hi = 1;
    for (int i = 0; j(hi) < t; ++i) {
        if (i > 2000)
            throw DegenerateLaw("j stays below t = " + std::to_string(t));
        hi *= 2;
    }
    double lo = hi;
    for (int i = 0; j(lo) >= t; ++i) {
        if (i > 2000)
            return lo;
        lo /= 2;
    }
    for (int i = 0; i < 300 && hi - lo > 1e-15 * hi; ++i) {
        double mid = 0.5 * (lo + hi);
        (j(mid) < t ? lo : hi) = mid;
    }
    return hi;
}

double RateFunctions::h(double t) const { return g(std::pow(x_t(t), alpha)); }

nlohmann::json RateFunctions::to_json() const
{
    return {{"law", law.to_json()}, {"d", d},       {"d_w", d_w},     {"alpha", alpha},
            {"L", L},               {"C1", C1},     {"C1_tilde", C1_tilde},
            {"mu21", mu21},         {"A0", A0},     {"C0", C0},       {"r0", r0},
            {"m1", m1},             {"D0", D0},     {"D0_interval", {D0_lo, D0_hi}},
            {"lambda0", lambda0},   {"t0", t0}};
}

RateFunctions rate_functions(const DisorderLaw& law, double A0, int m1, const FractalSpec& spec,
                             double alpha, double C1, const Mu21Estimate& mu21, double lambda0)
{
    if (!(A0 > 0) || m1 >= 0)
        throw ConfigError("rate functions need A0 > 0 and m1 < 0");
    if (!(mu21.value > 0 && alpha > 0 && C1 > 0))
        throw ConfigError("rate functions need positive alpha, C1 and mu_2^1");
    RateFunctions r;
    r.law = law;
    r.d = spec.d;
    r.d_w = spec.walk_dim();
    r.alpha = alpha;
    r.L = spec.L;
    r.C1 = C1;
    r.mu21 = mu21.value;
    r.A0 = A0;
    r.m1 = m1;
    r.C0 = spec.c0;
    r.r0 = spec.r0;
    r.lambda0 = lambda0;
    r.C1_tilde = C1 * std::pow(mu21.value, alpha / r.d_w);
    r.D0 = D0_formula(r.C1_tilde, A0, r.C0, r.r0);
    r.D0_lo = D0_formula(C1 * std::pow(std::max(mu21.lo, 0.0), alpha / r.d_w), A0, r.C0, r.r0);
    r.D0_hi = D0_formula(C1 * std::pow(mu21.hi, alpha / r.d_w), A0, r.C0, r.r0);

    bool any = false;
    for (double x : geometric_grid(1e-6, 1e6, 10))
        any = any || r.g(x) > 0;
    if (!any)
        throw DegenerateLaw("F(D0 / x^alpha) = 1 on the whole grid");
    r.t0 = r.j(std::pow(r.D0 / lambda0, 1 / alpha));
    return r;
}

int compute_M2(const RateFunctions& rate, const BernsteinFunction& phi, int Mmax)
{
    for (int M = 0; M <= Mmax; ++M) {
        double lhs = rate.C1_tilde * std::pow(rate.L, -M * rate.alpha);
        double rhs = eval_phi(phi, rate.mu21 * std::pow(rate.L, -M * rate.d_w));
        if (lhs <= rhs * (1 + 1e-12))
            return M;
    }
    throw PreconditionMNotReached("no M <= " + std::to_string(Mmax) + " satisfies the gap condition");
}

double temple_lower_bound(const Eigen::MatrixXd& H, const Eigen::VectorXd& psi, double mu)
{
    Eigen::VectorXd p = psi / psi.norm();
    Eigen::VectorXd Hp = H * p;
    const double e = p.dot(Hp);
    if (!(e < mu))
        throw DomainError("Temple needs <psi, H psi> < mu");
    return e - (Hp.squaredNorm() - e * e) / (mu - e);
}

nlohmann::json TempleReport::to_json() const
{
    return {{"M", M},
            {"M2", M2},
            {"seed", seed},
            {"lhs", lhs},
            {"rhs", rhs},
            {"margin", margin},
            {"v_integral", v_integral},
            {"v2_integral", v2_integral},
            {"lambda2", lambda2},
            {"truncation", truncation},
            {"temple_condition", temple_condition}};
}

TempleReport temple_check(const SpectrumBundle& sb, const PotentialKernel& kernel,
                          const DisorderSample& xi, const BernsteinFunction& phi,
                          const RateFunctions& rate, int M2)
{
    if (sb.M < M2)
        throw PreconditionMNotReached("M = " + std::to_string(sb.M) + " < M2 = " + std::to_string(M2));
    if (sb.boundary != Boundary::Neumann || sb.M != kernel.M || sb.n != kernel.n)
        throw ConfigError("Temple check needs the Neumann spectrum of the kernel's lattice");
    const auto& lat = *kernel.lattice;
    const auto& sites = *kernel.sites;
    TempleReport rep;
    rep.M = sb.M;
    rep.M2 = M2;
    rep.seed = xi.seed;

    Eigen::VectorXd V = rows_of(sb, potential_field(kernel, xi, FieldMode::Periodized));
    rep.lhs = symmetric_eigenvalues(schrodinger_matrix(sb, phi, V))[0];

    rep.truncation = rate.D0 * std::pow(rate.L, -sb.M * rate.alpha);
    Eigen::VectorXd Vt = Eigen::VectorXd::Zero(lat.num_vertices());
    for (int s = 0; s < sites.num_vertices(); ++s) {
        if (!sites.in_subcomplex(s, sb.M))
            continue;
        const int v = lat.find(sites.id(s));
        const double x = std::min(xi.xi[s], rep.truncation);
        if (x == 0)
            continue;
        for (int y = 0; y < lat.num_vertices(); ++y)
            if (common_level(lat, y, v) <= rate.m1)
                Vt[y] += rate.A0 * x;
    }
    Eigen::VectorXd Vr = rows_of(sb, Vt);
    rep.v_integral = sb.weights.dot(Vr);
    rep.v2_integral = sb.weights.dot(Vr.cwiseProduct(Vr));
    const double vol = sb.total_mass;
    rep.rhs = (rep.v_integral - 2 * rep.v2_integral * std::pow(rate.L, sb.M * rate.alpha) / rate.C1_tilde) / vol;
    rep.margin = rep.lhs - rep.rhs;
    rep.lambda2 = sb.size() > 1 ? eval_phi(phi, std::max(0.0, sb.mu[1])) : kInf;
    rep.temple_condition = rep.v_integral / vol < rep.lambda2;
    return rep;
}

// ---------------------------------------------------------------- Lifschitz

nlohmann::json LifschitzReport::to_json() const
{
    return {{"lambda_window", {lambda_lo, lambda_hi}},
            {"R", R},
            {"r_min", r_min},
            {"r_max", r_max},
            {"r_slope", r_slope},
            {"s_min", s_min},
            {"s_max", s_max},
            {"epsilon", epsilon},
            {"floor", floor},
            {"points_r", lambdas.size()},
            {"points_s", ts.size()},
            {"verdict", verdict}};
}

std::pair<double, double> auto_window(const std::vector<double>& lambda_grid,
                                      const std::vector<double>& N_mean, const RateFunctions& rate,
                                      double cap, std::optional<double> R)
{
    const double r = R.value_or(rate.D0);
    for (std::size_t i = lambda_grid.size(); i-- > 0;)
        if (N_mean[i] > 0 && N_mean[i] <= cap && rate.g(r / lambda_grid[i]) > 0)
            return {lambda_grid[i] / 10, lambda_grid[i]};
    throw EmptyWindow("no grid point with 0 < N <= " + std::to_string(cap));
}

LifschitzReport lifschitz_fit(const std::vector<double>& lambda_grid, const std::vector<double>& N_mean,
                              const std::vector<double>& t_grid, const std::vector<double>& Lambda_mean,
                              const RateFunctions& rate, std::pair<double, double> window,
                              std::optional<double> R, std::pair<double, double> t_window)
{
    LifschitzReport rep;
    rep.lambda_lo = window.first;
    rep.lambda_hi = window.second;
    rep.R = R.value_or(rate.D0);
    const double da = rate.d / rate.alpha;
    const double eps = 1e-9;
    for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
        const double l = lambda_grid[i];
        if (l < window.first * (1 - eps) || l > window.second * (1 + eps) || !(N_mean[i] > 0))
            continue;
        const double g = rate.g(rep.R / l);
        if (!(g > 0) || !std::isfinite(g))
            continue;
        rep.lambdas.push_back(l);
        rep.r.push_back(std::pow(l, da) * std::log(N_mean[i]) / g);
    }
    if (rep.r.empty())
        throw EmptyWindow("N vanishes on [" + std::to_string(window.first) + ", " +
                          std::to_string(window.second) + "]");
    rep.r_min = *std::min_element(rep.r.begin(), rep.r.end());
    rep.r_max = *std::max_element(rep.r.begin(), rep.r.end());

    const double e1 = rate.d / (rate.d + rate.alpha), e2 = rate.alpha / (rate.d + rate.alpha);
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
        const double t = t_grid[i];
        if (t < t_window.first * (1 - eps) || t > t_window.second * (1 + eps) || !(Lambda_mean[i] > 0))
            continue;
        const double h = rate.h(t);
        if (!(h > 0) || !std::isfinite(h))
            continue;
        rep.ts.push_back(t);
        rep.s.push_back(std::log(Lambda_mean[i]) / (std::pow(t, e1) * std::pow(h, e2)));
    }
    if (!rep.s.empty()) {
        rep.s_min = *std::min_element(rep.s.begin(), rep.s.end());
        rep.s_max = *std::max_element(rep.s.begin(), rep.s.end());
    }

    // shape: |r| flat under a Lifschitz tail, ~ lambda^{d/alpha} without one
    const int n = static_cast<int>(rep.r.size());
    if (n >= 2 && rep.r_max < 0) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (int i = 0; i < n; ++i) {
            double x = std::log(rep.lambdas[i]), y = std::log(-rep.r[i]);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        rep.r_slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }
    rep.epsilon = -rep.r_max;
    rep.floor = rep.r_min;
    const bool band = n >= 3 && rep.r_max < 0 && std::isfinite(rep.r_min);
    if (band && std::abs(rep.r_slope) < da / 2)
        rep.verdict = "lifschitz-band";
    else if (n >= 3 && (rep.r_max >= 0 || rep.r_slope >= da / 2))
        rep.verdict = "no-tail";
    else
        rep.verdict = "inconclusive";
    return rep;
}

// ---------------------------------------------------------------- Bernstein

double bernstein_bound(int n, double p, double gamma)
{
    if (!(p > 0 && p < 1 && gamma > p && gamma < 1 && n >= 1))
        throw DomainError("Bernstein bound needs 0 < p < gamma < 1");
    return std::exp(n * ((1 - gamma) * std::log((1 - p) / (1 - gamma)) + gamma * std::log(p / gamma)));
}

nlohmann::json BernsteinReport::to_json() const
{
    nlohmann::json cs = nlohmann::json::array();
    for (const auto& c : cells)
        cs.push_back({{"n", c.n},
                      {"p", c.p},
                      {"gamma", c.gamma},
                      {"empirical", c.empirical},
                      {"bound", c.bound},
                      {"sigma", c.sigma},
                      {"ok", c.ok}});
    return {{"draws", draws}, {"ok", ok}, {"cells", cs}};
}

BernsteinReport bernstein_check(const std::vector<int>& ns, const std::vector<double>& ps,
                                const std::vector<double>& gammas, int draws, std::uint64_t seed)
{
    if (draws < 1)
        throw ConfigError("Bernstein check needs draws >= 1");
    BernsteinReport rep;
    rep.draws = draws;
    std::uint64_t cell = 0;
    for (int n : ns)
        for (double p : ps)
            for (double g : gammas) {
                if (!(g > p && g < 1))
                    continue;
                auto rng = stream(seed, cell++, 0xB1);
                std::binomial_distribution<int> bin(n, p);
                int hits = 0;
                for (int i = 0; i < draws; ++i)
                    hits += bin(rng) >= g * n - 1e-9;
                BernsteinCell c;
                c.n = n;
                c.p = p;
                c.gamma = g;
                c.empirical = static_cast<double>(hits) / draws;
                c.bound = bernstein_bound(n, p, g);
                c.sigma = std::sqrt(c.empirical * (1 - c.empirical) / draws);
                c.ok = c.empirical <= c.bound + 3 * c.sigma;
                rep.ok = rep.ok && c.ok;
                rep.cells.push_back(c);
            }
    return rep;
}

} // namespace fids
