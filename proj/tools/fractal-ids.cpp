#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

#include "fids/errors.hpp"
#include "fids/harness.hpp"

using namespace fids;
using nlohmann::json;

namespace {

struct Common {
    std::string config, preset, out;
    std::vector<int> Ms;
    std::optional<int> samples, threads;
    std::optional<std::uint64_t> seed;
    std::string output;
};

json load_json(const std::string& path)
{
    std::ifstream f(path);
    if (!f)
        throw ConfigError("cannot read config " + path);
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
}

// --config wins over --preset; flags override config keys
RunConfig run_config(const Common& c, const std::string& default_preset)
{
    json j;
    if (!c.config.empty())
        j = load_json(c.config);
    else
        j = run_preset(c.preset.empty() ? default_preset : c.preset);
    if (!c.Ms.empty())
        j["M"] = c.Ms;
    if (c.samples)
        j["samples"] = *c.samples;
    if (c.seed)
        j["seed"] = *c.seed;
    if (c.threads)
        j["threads"] = *c.threads;
    if (!c.output.empty())
        j["output"] = c.output;
    return RunConfig::from_json(j);
}

std::shared_ptr<const FractalSpec> spec_of(const Common& c)
{
    if (!c.config.empty())
        return RunConfig::from_json(load_json(c.config)).spec;
    const std::string name = c.preset.empty() ? "gasket" : c.preset;
    const auto names = preset_names();
    if (std::find(names.begin(), names.end(), name) == names.end())
        throw ConfigError("unknown preset '" + name + "'");
    return preset_spec(name);
}

void emit(const Common& c, const std::string& body)
{
    if (c.out.empty()) {
        std::cout << body;
        return;
    }
    std::ofstream f(c.out, std::ios::binary);
    if (!f)
        throw ConfigError("cannot write " + c.out);
    f << body;
}

void add_io(CLI::App* s, Common& c, bool run_like)
{
    s->add_option("--config", c.config, "run configuration (JSON)");
    s->add_option("--preset", c.preset, run_like ? "run preset (gasket-smoke, gasket-ids, gasket-lifschitz)"
                                                 : "fractal preset (gasket, vicsek, ...)");
    s->add_option("--out", c.out, "write to this file instead of stdout");
    if (run_like) {
        s->add_option("--M", c.Ms, "levels M");
        s->add_option("--samples", c.samples, "ensemble size");
        s->add_option("--seed", c.seed, "base seed");
        s->add_option("--threads", c.threads, "worker threads");
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Integrated density of states for random Schroedinger operators on nested fractals"};
    app.require_subcommand(1);
    Common c;

    auto* glp = app.add_subcommand("glp-check", "good labeling property of a fractal");
    add_io(glp, c, false);
    std::vector<int> glp_Ms{0, 1, 2, 3};
    glp->add_option("--orders", glp_Ms, "orders M to label");

    auto* spec = app.add_subcommand("spectrum", "eigenvalues of the discrete Laplacian");
    add_io(spec, c, false);
    int sM = 0, sn = 1;
    std::string sb = "neumann";
    bool renorm = false;
    spec->add_option("--M", sM, "level");
    spec->add_option("--n", sn, "subdivisions of K^<M>");
    spec->add_option("--boundary", sb, "dirichlet | neumann");
    spec->add_flag("--renormalized", renorm, "multiply by tau^{n-M}");

    auto* ids = app.add_subcommand("ids", "ensemble counting functions as CSV");
    add_io(ids, c, true);
    bool ids_laplace = false;
    ids->add_flag("--laplace", ids_laplace, "Laplace transforms instead of counting functions");

    auto* lif = app.add_subcommand("lifschitz", "Lifschitz tail analysis");
    add_io(lif, c, true);
    std::optional<double> wlo, whi;
    bool contrast = false, tilted = false;
    lif->add_option("--lambda-lo", wlo, "window lower end");
    lif->add_option("--lambda-hi", whi, "window upper end");
    lif->add_flag("--contrast", contrast, "also report V = 0 on the same window");
    lif->add_flag("--tilted", tilted, "cell-tilted importance sampling (Bernoulli laws)");

    auto* mc = app.add_subcommand("mc-check", "Monte Carlo trace against the spectrum");
    add_io(mc, c, false);
    int mM = 1, mn = 3, paths = 10000, mthreads = 1;
    double mt = 1;
    std::uint64_t mseed = 1;
    std::string mcase = "all";
    double stable_a = 0.8;
    mc->add_option("--M", mM, "level");
    mc->add_option("--n", mn, "subdivisions of K^<M>");
    mc->add_option("--t", mt, "time in level-M units");
    mc->add_option("--paths", paths, "walk paths");
    mc->add_option("--seed", mseed, "seed");
    mc->add_option("--threads", mthreads, "worker threads");
    mc->add_option("--case", mcase, "free | disorder | dirichlet | stable | all");
    mc->add_option("--stable-exponent", stable_a, "exponent of the stable time change");

    auto* run = app.add_subcommand("run", "full experiment into an output directory");
    add_io(run, c, true);
    run->add_option("--output", c.output, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*glp) {
            auto rep = glp_report(spec_of(c), glp_Ms);
            emit(c, rep.dump(2) + "\n");
            return rep["glp"].get<bool>() ? 0 : 2;
        }
        if (*spec) {
            emit(c, spectrum_csv(spec_of(c), sM, sn, boundary_from_string(sb), renorm));
            return 0;
        }
        if (*ids) {
            auto cfg = run_config(c, "gasket-smoke");
            cfg.apply_caps();
            auto r = ensemble_run(cfg.ensemble());
            emit(c, ids_laplace ? laplace_csv(r) : ids_csv(r));
            return 0;
        }
        if (*lif) {
            auto cfg = run_config(c, "gasket-lifschitz");
            cfg.apply_caps();
            std::optional<std::pair<double, double>> w;
            if (wlo || whi) {
                if (!(wlo && whi))
                    throw ConfigError("give both --lambda-lo and --lambda-hi");
                w = std::pair{*wlo, *whi};
            }
            auto ecfg = cfg.ensemble();
            ecfg.series = {{Boundary::Neumann, FieldMode::Periodized}};
            LifschitzReport rep;
            json out;
            if (tilted) {
                TiltedConfig tc;
                tc.spec = cfg.spec;
                tc.M = cfg.Ms.back();
                tc.depth_offset = cfg.depth_offset;
                tc.phi = cfg.phi;
                tc.profile = cfg.profile;
                tc.law = cfg.law;
                tc.samples = cfg.samples;
                tc.seed = cfg.seed;
                tc.t_grid = cfg.t_grid;
                tc.lambda_grid = cfg.lambda_grid;
                tc.threads = cfg.threads;
                auto r = tilted_ensemble(tc);
                auto rate = run_rate_functions(cfg);
                auto win = w ? *w : auto_window(r.lambda_grid, r.counting_mean, rate, cfg.lifschitz_cap);
                rep = lifschitz_fit(r.lambda_grid, r.counting_mean, r.t_grid, r.laplace_mean, rate, win);
                out["ensemble"] = r.to_json();
            } else {
                auto r = ensemble_run(ecfg);
                rep = run_lifschitz(cfg, r, w);
            }
            out["disordered"] = rep.to_json();
            if (contrast) {
                auto zcfg = ecfg;
                zcfg.Ms = {cfg.Ms.back()};
                zcfg.samples = 2;
                zcfg.zero_potential = true;
                auto z = ensemble_run(zcfg);
                const auto& s = z.series.front();
                out["zero_potential"] = lifschitz_fit(z.lambda_grid, s.counting_mean, z.t_grid, s.laplace_mean,
                                                      run_rate_functions(cfg), {rep.lambda_lo, rep.lambda_hi})
                                            .to_json();
            }
            emit(c, out.dump(2) + "\n");
            return 0;
        }
        if (*mc) {
            auto sp = spec_of(c);
            std::vector<McCase> cases;
            if (mcase == "free" || mcase == "all")
                cases.push_back({"neumann-free", Boundary::Neumann, false, std::nullopt});
            if (mcase == "disorder" || mcase == "all")
                cases.push_back({"neumann-disorder", Boundary::Neumann, true, std::nullopt});
            if (mcase == "dirichlet" || mcase == "all")
                cases.push_back({"dirichlet-free", Boundary::Dirichlet, false, std::nullopt});
            if (mcase == "stable" || mcase == "all")
                cases.push_back({"neumann-stable", Boundary::Neumann, false, stable_a});
            if (cases.empty())
                throw ConfigError("unknown case '" + mcase + "'");
            auto cfg = RunConfig::from_json(run_preset("gasket-smoke"));
            json out = json::array();
            for (const auto& k : cases)
                out.push_back(mc_check(sp, mM, mn, mt, paths, mseed, k, cfg.profile, cfg.law, mthreads));
            emit(c, (cases.size() == 1 ? out[0] : out).dump(2) + "\n");
            return 0;
        }
        if (*run) {
            auto cfg = run_config(c, "gasket-smoke");
            auto res = run_experiment(cfg);
            json out{{"directory", res.directory},
                     {"cache_hit", res.cache_hit},
                     {"status", res.manifest.value("status", "")},
                     {"config_hash", res.manifest.value("config_hash", "")}};
            std::cout << out.dump(2) << "\n";
            std::cerr << "wall clock " << res.seconds << " s\n";
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "fractal-ids: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "fractal-ids: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
