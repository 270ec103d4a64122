#pragma once

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fids/errors.hpp"
#include "fids/ids_analysis.hpp"

namespace fids {

std::string code_version();

// Single-file experiment description. Grids are either explicit lists or
// {"lo", "hi", "per_decade"}; the spec is a preset name or
// {"name", "similitudes", "tau", "hausdorff_dim", "decimation"}.
struct RunConfig {
    nlohmann::json spec_source = "gasket";
    std::shared_ptr<const FractalSpec> spec;
    std::vector<int> Ms{1};
    int depth_offset = 2;
    BernsteinFunction phi;
    SingleSiteProfile profile;
    DisorderLaw law;
    bool zero_potential = false;
    int samples = 8;
    std::uint64_t seed = 1;
    std::vector<double> t_grid, lambda_grid;
    std::vector<std::pair<Boundary, FieldMode>> series;
    std::string output = "fractal-ids-out";
    int threads = 1;
    std::optional<int> dense_cap;
    std::optional<std::int64_t> node_cap;
    double lambda0 = 0.5;
    int w_levels = 2;
    bool lifschitz = true;
    double lifschitz_cap = 0.01;

    // ConfigError on any schema problem, before anything is computed
    static RunConfig from_json(const nlohmann::json& j);
    // canonical echo: every default filled in, grids expanded
    nlohmann::json to_json() const;
    // hash of the canonical echo and the code version
    std::string hash() const;
    EnsembleConfig ensemble() const;
    void apply_caps() const;
};

RunConfig load_run_config(const std::string& path);
std::vector<std::string> run_preset_names();
nlohmann::json run_preset(const std::string& name);

struct RunResult {
    std::string directory;
    bool cache_hit = false;
    nlohmann::json manifest;
    double seconds = 0; // wall clock, not written to the directory
};

// gates -> lattice -> operators -> ensemble -> analysis; writes CSV/JSON
// outputs plus manifest.json. A directory whose manifest carries the same
// config hash and intact file hashes is a cache hit and is left untouched.
// GateFailure after gates.json and the manifest are written.
RunResult run_experiment(const RunConfig& cfg);

// 0 ok, 1 configuration / size problems, 2 failed gates
int exit_code_for(const Error& e);

// ---------------------------------------------------------------- subcommand back-ends

nlohmann::json glp_report(std::shared_ptr<const FractalSpec> spec, const std::vector<int>& Ms);

// "k,eigenvalue" rows of -G (pre-renormalization) or of mu when renormalized
std::string spectrum_csv(std::shared_ptr<const FractalSpec> spec, int M, int n, Boundary b,
                         bool renormalized);

// lambda plus one mean counting column per series; columns are nondecreasing
std::string ids_csv(const EnsembleResult& r);
std::string laplace_csv(const EnsembleResult& r);
std::string eigenvalues_csv(const EnsembleSeries& s);

// rate functions of a config (needs A0 and m1 on the profile)
RateFunctions run_rate_functions(const RunConfig& cfg);
// Lifschitz report of the largest M Neumann/periodized series
LifschitzReport run_lifschitz(const RunConfig& cfg, const EnsembleResult& r,
                              std::optional<std::pair<double, double>> window = std::nullopt);

struct McCase {
    std::string name;
    Boundary boundary = Boundary::Neumann;
    bool disorder = false;
    std::optional<double> stable_exponent;
};

// {case, mc_mean, mc_stderr, spectral_value, z_score, ...}
nlohmann::json mc_check(std::shared_ptr<const FractalSpec> spec, int M, int n, double t, int paths,
                        std::uint64_t seed, const McCase& c, const SingleSiteProfile& profile,
                        const DisorderLaw& law, int threads = 1);

} // namespace fids
