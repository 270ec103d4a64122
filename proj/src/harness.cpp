#include "fids/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fids/errors.hpp"
#include "fids/hash.hpp"
#include "fids/mc_oracle.hpp"
#include "fids/random_potential.hpp"

#ifndef FIDS_VERSION
#define FIDS_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;

namespace fids {

std::string code_version() { return "fractal-ids " FIDS_VERSION; }

namespace {

std::string fmt(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::vector<double> parse_grid(const nlohmann::json& j, const char* what)
{
    std::vector<double> g;
    if (j.is_array()) {
        g = j.get<std::vector<double>>();
    } else if (j.is_object()) {
        const double lo = j.at("lo").get<double>(), hi = j.at("hi").get<double>();
        const int pd = j.value("per_decade", 5);
        if (!(lo > 0 && hi > lo) || pd < 1)
            throw ConfigError(std::string(what) + ": need 0 < lo < hi and per_decade >= 1");
        g = geometric_grid(lo, hi, pd);
    } else {
        throw ConfigError(std::string(what) + " must be a list or {lo, hi, per_decade}");
    }
    if (g.empty())
        throw ConfigError(std::string(what) + " is empty");
    for (std::size_t i = 1; i < g.size(); ++i)
        if (!(g[i] > g[i - 1]))
            throw ConfigError(std::string(what) + " must be strictly increasing");
    return g;
}

std::shared_ptr<const FractalSpec> parse_spec(const nlohmann::json& j)
{
    if (j.is_string()) {
        const auto name = j.get<std::string>();
        const auto names = preset_names();
        if (std::find(names.begin(), names.end(), name) == names.end())
            throw ConfigError("unknown preset '" + name + "'");
        return preset_spec(name);
    }
    if (!j.is_object() || !j.contains("similitudes"))
        throw ConfigError("spec must be a preset name or an object with 'similitudes'");
    SpecOptions o;
    o.name = j.value("name", "custom");
    if (j.contains("tau"))
        o.tau = j.at("tau").get<double>();
    if (j.contains("hausdorff_dim"))
        o.hausdorff_dim = j.at("hausdorff_dim").get<double>();
    o.decimation = j.value("decimation", std::vector<double>{});
    return build_spec(similitudes_from_json(j.at("similitudes")), o);
}

std::pair<Boundary, FieldMode> parse_series(const nlohmann::json& j)
{
    if (!j.is_array() || j.size() != 2)
        throw ConfigError("series entries are [boundary, field]");
    const auto f = j[1].get<std::string>();
    FieldMode m;
    if (f == "free")
        m = FieldMode::Free;
    else if (f == "periodized")
        m = FieldMode::Periodized;
    else
        throw ConfigError("unknown field mode '" + f + "'");
    return {boundary_from_string(j[0].get<std::string>()), m};
}

void write_file(const fs::path& p, const std::string& s)
{
    std::ofstream f(p, std::ios::binary);
    if (!f)
        throw ConfigError("cannot write " + p.string());
    f << s;
}

std::string read_file(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

std::string series_label(int M, Boundary b, FieldMode m)
{
    return "M" + std::to_string(M) + "_" + to_string(b) + "_" + to_string(m);
}

} // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j)
{
    static const std::set<std::string> keys{
        "spec",   "M",       "n",         "depth_offset", "phi",      "profile",  "law",
        "zero_potential",    "samples",   "seed",         "t_grid",   "lambda_grid", "series",
        "output", "threads", "caps",      "lambda0",      "w_levels", "lifschitz"};
    if (!j.is_object())
        throw ConfigError("run config must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!keys.count(it.key()))
            throw ConfigError("unknown config key '" + it.key() + "'");
    try {
        RunConfig c;
        c.spec_source = j.value("spec", nlohmann::json("gasket"));
        if (j.contains("M"))
            c.Ms = j.at("M").is_array() ? j.at("M").get<std::vector<int>>()
                                        : std::vector<int>{j.at("M").get<int>()};
        if (c.Ms.empty())
            throw ConfigError("M list is empty");
        for (std::size_t i = 0; i < c.Ms.size(); ++i)
            if (c.Ms[i] < 0 || (i && c.Ms[i] <= c.Ms[i - 1]))
                throw ConfigError("M list must be nonnegative and strictly increasing");
        if (j.contains("n") && j.contains("depth_offset"))
            throw ConfigError("give either n (depth at the smallest M) or depth_offset");
        if (j.contains("n"))
            c.depth_offset = j.at("n").get<int>() - c.Ms.front();
        else
            c.depth_offset = j.value("depth_offset", 2);
        if (c.depth_offset < 0)
            throw ConfigError("depth must be at least M");
        c.phi = BernsteinFunction::from_json(j.value("phi", nlohmann::json{{"kind", "identity"}}));
        c.profile = j.contains("profile") ? SingleSiteProfile::from_json(j.at("profile"))
                                          : SingleSiteProfile::finite_range(1, {1, 0.25});
        c.law = DisorderLaw::from_json(j.value("law", nlohmann::json{{"kind", "bernoulli"}}));
        c.zero_potential = j.value("zero_potential", false);
        c.samples = j.value("samples", 8);
        if (c.samples < 2)
            throw ConfigError("need at least 2 samples");
        c.seed = j.value("seed", std::uint64_t{1});
        c.t_grid = parse_grid(j.value("t_grid", nlohmann::json{{"lo", 0.1}, {"hi", 1000}, {"per_decade", 4}}),
                              "t_grid");
        c.lambda_grid = parse_grid(
            j.value("lambda_grid", nlohmann::json{{"lo", 1e-3}, {"hi", 1000}, {"per_decade", 5}}),
            "lambda_grid");
        if (j.contains("series")) {
            c.series.clear();
            for (const auto& s : j.at("series"))
                c.series.push_back(parse_series(s));
        } else {
            c.series = EnsembleConfig{}.series;
        }
        if (c.series.empty())
            throw ConfigError("no series requested");
        c.output = j.value("output", c.output);
        c.threads = j.value("threads", 1);
        if (c.threads < 1)
            throw ConfigError("threads must be >= 1");
        if (j.contains("caps")) {
            const auto& caps = j.at("caps");
            if (caps.contains("dense"))
                c.dense_cap = caps.at("dense").get<int>();
            if (caps.contains("nodes"))
                c.node_cap = caps.at("nodes").get<std::int64_t>();
        }
        c.lambda0 = j.value("lambda0", 0.5);
        c.w_levels = j.value("w_levels", 2);
        if (j.contains("lifschitz")) {
            const auto& l = j.at("lifschitz");
            c.lifschitz = l.value("enabled", true);
            c.lifschitz_cap = l.value("cap", 0.01);
        }
        c.spec = parse_spec(c.spec_source);
        c.profile.validate(c.spec->N);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
}

nlohmann::json RunConfig::to_json() const
{
    nlohmann::json series_j = nlohmann::json::array();
    for (auto [b, m] : series)
        series_j.push_back({to_string(b), to_string(m)});
    nlohmann::json caps = nlohmann::json::object();
    if (dense_cap)
        caps["dense"] = *dense_cap;
    if (node_cap)
        caps["nodes"] = *node_cap;
    // threads and output do not change any result and stay out of the echo
    return {{"spec", spec_source},
            {"spec_hash", spec ? spec->hash() : ""},
            {"M", Ms},
            {"depth_offset", depth_offset},
            {"phi", phi.to_json()},
            {"profile", profile.to_json()},
            {"law", law.to_json()},
            {"zero_potential", zero_potential},
            {"samples", samples},
            {"seed", seed},
            {"t_grid", t_grid},
            {"lambda_grid", lambda_grid},
            {"series", series_j},
            {"caps", caps},
            {"lambda0", lambda0},
            {"w_levels", w_levels},
            {"lifschitz", {{"enabled", lifschitz}, {"cap", lifschitz_cap}}}};
}

std::string RunConfig::hash() const { return sha256_hex(to_json().dump() + "\n" + code_version()); }

EnsembleConfig RunConfig::ensemble() const
{
    EnsembleConfig e;
    e.spec = spec;
    e.Ms = Ms;
    e.depth_offset = depth_offset;
    e.phi = phi;
    e.profile = profile;
    e.law = law;
    e.zero_potential = zero_potential;
    e.samples = samples;
    e.seed = seed;
    e.t_grid = t_grid;
    e.lambda_grid = lambda_grid;
    e.series = series;
    e.threads = threads;
    e.lambda0 = lambda0;
    e.w_levels = w_levels;
    return e;
}

void RunConfig::apply_caps() const
{
    if (dense_cap)
        set_dense_cap(*dense_cap);
    if (node_cap)
        set_size_cap(*node_cap);
}

RunConfig load_run_config(const std::string& path)
{
    std::ifstream f(path);
    if (!f)
        throw ConfigError("cannot read config " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    return RunConfig::from_json(j);
}

std::vector<std::string> run_preset_names() { return {"gasket-smoke", "gasket-ids", "gasket-lifschitz"}; }

nlohmann::json run_preset(const std::string& name)
{
    const nlohmann::json profile{{"kind", "finite_range"}, {"M0", 1}, {"table", {1, 0.25}}, {"A0", 0.5}, {"m1", -1}};
    const nlohmann::json law{{"kind", "bernoulli"}, {"p0", 0.5}, {"a", 1}};
    if (name == "gasket-smoke")
        return {{"spec", "gasket"},
                {"M", {1}},
                {"n", 3},
                {"phi", {{"kind", "identity"}}},
                {"profile", profile},
                {"law", law},
                {"samples", 8},
                {"seed", 1},
                {"t_grid", {{"lo", 0.1}, {"hi", 100}, {"per_decade", 3}}},
                {"lambda_grid", {{"lo", 1e-2}, {"hi", 100}, {"per_decade", 4}}},
                {"output", "gasket-smoke"}};
    if (name == "gasket-ids")
        return {{"spec", "gasket"},
                {"M", {1, 2}},
                {"depth_offset", 2},
                {"profile", profile},
                {"law", law},
                {"samples", 32},
                {"seed", 7},
                {"t_grid", {{"lo", 0.1}, {"hi", 1000}, {"per_decade", 4}}},
                {"lambda_grid", {{"lo", 1e-3}, {"hi", 100}, {"per_decade", 5}}},
                {"output", "gasket-ids"}};
    if (name == "gasket-lifschitz")
        return {{"spec", "gasket"},
                {"M", {4}},
                {"depth_offset", 1},
                {"profile", profile},
                {"law", law},
                {"samples", 1944},
                {"seed", 1111},
                {"series", nlohmann::json::array({nlohmann::json::array({"neumann", "periodized"})})},
                {"t_grid", {{"lo", 1}, {"hi", 1000}, {"per_decade", 4}}},
                {"lambda_grid", {{"lo", 1e-2}, {"hi", 1}, {"per_decade", 10}}},
                {"output", "gasket-lifschitz"}};
    throw ConfigError("unknown run preset '" + name + "'");
}

int exit_code_for(const Error& e)
{
    if (e.kind() == "GateFailure" || e.kind() == "ViolatesB")
        return 2;
    return 1;
}

// ---------------------------------------------------------------- CSV writers

std::string ids_csv(const EnsembleResult& r)
{
    std::ostringstream os;
    os << "lambda";
    for (const auto& s : r.series)
        os << ",N_" << series_label(s.M, s.boundary, s.mode);
    os << "\n";
    for (std::size_t i = 0; i < r.lambda_grid.size(); ++i) {
        os << fmt(r.lambda_grid[i]);
        for (const auto& s : r.series)
            os << "," << fmt(s.counting_mean[i]);
        os << "\n";
    }
    return os.str();
}

std::string laplace_csv(const EnsembleResult& r)
{
    std::ostringstream os;
    os << "t";
    for (const auto& s : r.series) {
        const auto l = series_label(s.M, s.boundary, s.mode);
        os << ",Lambda_" << l << ",var_" << l;
    }
    os << "\n";
    for (std::size_t i = 0; i < r.t_grid.size(); ++i) {
        os << fmt(r.t_grid[i]);
        for (const auto& s : r.series)
            os << "," << fmt(s.laplace_mean[i]) << "," << fmt(s.laplace_var[i]);
        os << "\n";
    }
    return os.str();
}

std::string eigenvalues_csv(const EnsembleSeries& s)
{
    std::ostringstream os;
    os << "sample,seed,k,eigenvalue\n";
    for (int i = 0; i < s.samples(); ++i)
        for (std::size_t k = 0; k < s.eigenvalues[i].size(); ++k)
            os << i << "," << s.seeds[i] << "," << k + 1 << "," << fmt(s.eigenvalues[i][k]) << "\n";
    return os.str();
}

std::string spectrum_csv(std::shared_ptr<const FractalSpec> spec, int M, int n, Boundary b,
                         bool renormalized)
{
    auto sb = cached_spectrum(spec, M, n, b, false);
    const Eigen::VectorXd& ev = renormalized ? sb.mu : sb.combinatorial;
    std::ostringstream os;
    os << "k,eigenvalue\n";
    for (int i = 0; i < ev.size(); ++i) {
        // exact small cases print as integers
        double x = ev[i];
        if (std::abs(x - std::round(x)) < 1e-9 * std::max(1.0, std::abs(x)))
            x = std::round(x);
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.12g", x == 0 ? 0.0 : x);
        os << i + 1 << "," << buf << "\n";
    }
    return os.str();
}

// ---------------------------------------------------------------- analysis

nlohmann::json glp_report(std::shared_ptr<const FractalSpec> spec, const std::vector<int>& Ms)
{
    nlohmann::json out{{"spec", spec->name}, {"spec_hash", spec->hash()}, {"k", spec->k}};
    bool ok = true;
    nlohmann::json per = nlohmann::json::array();
    for (int M : Ms) {
        nlohmann::json e{{"M", M}};
        try {
            make_folding(spec, M, 1);
            e["glp"] = true;
        } catch (const MissingFolding& err) {
            e["glp"] = false;
            e["witness"] = err.what();
            ok = false;
        }
        per.push_back(e);
    }
    out["glp"] = ok;
    out["orders"] = per;
    return out;
}

RateFunctions run_rate_functions(const RunConfig& cfg)
{
    if (!cfg.profile.A0 || !cfg.profile.m1)
        throw ConfigError("rate functions need A0 and m1 on the profile");
    auto B = check_assumption_B(cfg.phi, cfg.spec->walk_dim());
    auto mu = estimate_mu21(cfg.spec, 4);
    return rate_functions(cfg.law, *cfg.profile.A0, *cfg.profile.m1, *cfg.spec, B.alpha, B.C1, mu,
                          cfg.lambda0);
}

LifschitzReport run_lifschitz(const RunConfig& cfg, const EnsembleResult& r,
                              std::optional<std::pair<double, double>> window)
{
    const EnsembleSeries* s = nullptr;
    for (const auto& x : r.series)
        if (x.boundary == Boundary::Neumann && x.mode == FieldMode::Periodized && (!s || x.M > s->M))
            s = &x;
    if (!s)
        throw ConfigError("Lifschitz analysis needs a neumann/periodized series");
    auto rate = run_rate_functions(cfg);
    auto w = window ? *window : auto_window(r.lambda_grid, s->counting_mean, rate, cfg.lifschitz_cap);
    return lifschitz_fit(r.lambda_grid, s->counting_mean, r.t_grid, s->laplace_mean, rate, w);
}

// ---------------------------------------------------------------- run

RunResult run_experiment(const RunConfig& cfg)
{
    const auto t0 = std::chrono::steady_clock::now();
    cfg.apply_caps();
    RunResult res;
    const fs::path dir(cfg.output);
    res.directory = dir.string();
    const std::string chash = cfg.hash();

    // cache: same config hash and every listed file intact
    const fs::path mpath = dir / "manifest.json";
    if (fs::exists(mpath)) {
        try {
            auto m = nlohmann::json::parse(read_file(mpath));
            bool intact = m.value("config_hash", "") == chash && m.value("status", "") == "ok";
            if (intact)
                for (auto it = m.at("files").begin(); it != m.at("files").end(); ++it)
                    if (!fs::exists(dir / it.key()) || sha256_file((dir / it.key()).string()) != it.value())
                        intact = false;
            if (intact) {
                res.cache_hit = true;
                res.manifest = m;
                res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                return res;
            }
        } catch (const nlohmann::json::exception&) {
        }
    }
    fs::create_directories(dir);
    // stale outputs from an earlier config would otherwise linger
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && (e.path().extension() == ".csv" || e.path().extension() == ".json"))
            fs::remove(e.path());

    std::map<std::string, std::string> files;
    auto put = [&](const std::string& name, const std::string& body) {
        write_file(dir / name, body);
        files[name] = sha256_hex(body);
    };
    nlohmann::json manifest{{"config", cfg.to_json()},
                            {"config_hash", chash},
                            {"spec_hash", cfg.spec->hash()},
                            {"spec", cfg.spec->to_json()},
                            {"code_version", code_version()}};
    if (cfg.spec->tau_source != "registry")
        manifest["warnings"] = {"tau supplied by the configuration; the walk clock relies on it"};
    put("config.json", cfg.to_json().dump(2) + "\n");

    auto ecfg = cfg.ensemble();
    auto gates = run_gates(ecfg);
    nlohmann::json gj{{"ok", gates.ok}, {"failures", gates.failures}, {"details", gates.details}};
    put("gates.json", gj.dump(2) + "\n");
    manifest["gates"] = gj;
    if (!gates.ok) {
        std::string msg;
        for (const auto& f : gates.failures)
            msg += (msg.empty() ? "" : ", ") + f;
        manifest["status"] = "gate-failure";
        manifest["files"] = files;
        write_file(mpath, manifest.dump(2) + "\n");
        throw GateFailure("violated: " + msg + " (see " + (dir / "gates.json").string() + ")");
    }

    ecfg.check_gates = false;
    auto r = ensemble_run(ecfg);
    r.gates = gates;

    put("ids.csv", ids_csv(r));
    put("laplace.csv", laplace_csv(r));
    for (const auto& s : r.series)
        put("eigenvalues_" + series_label(s.M, s.boundary, s.mode) + ".csv", eigenvalues_csv(s));

    nlohmann::json analysis;
    analysis["convergence"] = r.convergence_table();
    if (cfg.Ms.size() > 1 && r.find(cfg.Ms.front(), Boundary::Neumann, FieldMode::Periodized)) {
        nlohmann::json rows = nlohmann::json::array();
        bool ok = true;
        for (const auto& m : monotonicity_check(r)) {
            rows.push_back({{"M", m.M}, {"t", m.t}, {"upper", m.upper}, {"lower", m.lower},
                            {"pooled_se", m.pooled_se}, {"ok", m.ok}});
            ok = ok && m.ok;
        }
        analysis["monotonicity"] = {{"ok", ok}, {"rows", rows}};
    }
    if (r.find(cfg.Ms.front(), Boundary::Dirichlet, FieldMode::Free) &&
        r.find(cfg.Ms.front(), Boundary::Neumann, FieldMode::Free)) {
        auto o = ordering_check(r);
        analysis["ordering"] = {{"instances", o.instances}, {"violations", o.violations}, {"worst", o.worst}};
        nlohmann::json gap = nlohmann::json::array();
        for (const auto& g : dn_gap(r, 1.0))
            gap.push_back({{"M", g.M}, {"t", g.t}, {"mean_sq_gap", g.mean_sq_gap}, {"se", g.se}});
        analysis["dn_gap"] = gap;
    }
    if (cfg.lifschitz && !cfg.zero_potential) {
        try {
            auto rate = run_rate_functions(cfg);
            analysis["rate_functions"] = rate.to_json();
            analysis["lifschitz"] = run_lifschitz(cfg, r).to_json();
        } catch (const Error& e) {
            analysis["lifschitz"] = {{"verdict", "skipped"}, {"reason", e.what()}};
        }
    }
    put("analysis.json", analysis.dump(2) + "\n");

    // work counters only; wall clock would break byte-identical reruns
    nlohmann::json work = nlohmann::json::array();
    for (const auto& s : r.series)
        work.push_back({{"series", series_label(s.M, s.boundary, s.mode)},
                        {"samples", s.samples()},
                        {"dimension", s.eigenvalues.empty() ? 0 : s.eigenvalues[0].size()}});
    manifest["work"] = work;
    manifest["status"] = "ok";
    manifest["files"] = files;
    write_file(mpath, manifest.dump(2) + "\n");
    res.manifest = manifest;
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

// ---------------------------------------------------------------- mc-check

nlohmann::json mc_check(std::shared_ptr<const FractalSpec> spec, int M, int n, double t, int paths,
                        std::uint64_t seed, const McCase& c, const SingleSiteProfile& profile,
                        const DisorderLaw& law, int threads)
{
    auto lattice = enumerate_lattice(spec, M, n);
    std::shared_ptr<const FoldingMap> fold;
    if (c.boundary == Boundary::Neumann)
        fold = make_folding(spec, M, 1);
    WalkConfig wc;
    wc.M = M;
    wc.n = n;
    wc.t = t;
    wc.paths = paths;
    wc.seed = seed;
    wc.threads = threads;
    wc.stable_exponent = c.stable_exponent;
    auto walk = simulate_walk(wc, *lattice, c.boundary == Boundary::Neumann ? WalkMode::Reflected
                                                                            : WalkMode::Killed,
                              fold.get());
    auto phi = c.stable_exponent ? BernsteinFunction::stable(*c.stable_exponent)
                                 : BernsteinFunction::identity();
    Eigen::VectorXd V;
    if (c.disorder) {
        auto kernel = build_kernel(spec, M, n, profile);
        auto xi = sample_disorder(law, kernel.sites, seed);
        V = potential_field(kernel, xi, FieldMode::Periodized);
    }
    auto est = estimate_trace(walk, wc, phi, V);
    auto sb = spectrum_of(spec, M, n, c.boundary);
    const double exact = spectral_trace(sb, phi, V, t);
    return {{"case", c.name},
            {"mc_mean", est.mean},
            {"mc_stderr", est.stderr_},
            {"spectral_value", exact},
            {"z_score", est.stderr_ > 0 ? (est.mean - exact) / est.stderr_ : 0.0},
            {"boundary", to_string(c.boundary)},
            {"phi", phi.name()},
            {"potential", c.disorder ? "periodized" : "zero"},
            {"M", M},
            {"n", n},
            {"t", t},
            {"paths", paths},
            {"batches", est.batches},
            {"seed", seed}};
}

} // namespace fids
