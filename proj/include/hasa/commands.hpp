#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hasa/backends.hpp"
#include "hasa/metrics.hpp"
#include "hasa/phantom.hpp"
#include "hasa/pipeline.hpp"
#include "hasa/power.hpp"
#include "hasa/prompts.hpp"
#include "hasa/sdm.hpp"
#include "hasa/student.hpp"

namespace hasa {

struct MetricOptions {
    double outlier_k = 3.0;
    bool pooled_vol_acc = false;
    bool edge_per_slice = false;
    bool edge_pngs = true;
};

/// Everything a run needs. Sub-spec seeds default to `seed` unless the
/// config file sets them.
struct RunConfig {
    std::string tag = "run";
    uint64_t seed = 0;
    std::filesystem::path data_root = "data";
    std::filesystem::path exchange_dir;  // file and attention backends
    std::filesystem::path output_dir = "runs";
    PhantomSetSpec phantoms;
    BackendKind backend = BackendKind::oracle;
    CorruptionSpec corruption;
    GuessFilters filters;
    JitterSpec jitter;
    SdmSpec sdm;
    std::vector<ChannelPolicy> policies{ChannelPolicy::t1_only, ChannelPolicy::guess_raw, ChannelPolicy::guess_sdm};
    AugmentSpec augment;
    std::array<double, 3> split{0.6, 0.2, 0.2};
    StudentConfig student = StudentConfig::desk_preset();
    MetricOptions metrics;

    void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);

/// Applies "a.b.c=value" overrides; value is parsed as JSON, else taken as a string.
void apply_overrides(nlohmann::json& j, const std::vector<std::string>& overrides);

/// Reads a config file (empty path = defaults) and applies overrides.
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// runs/<YYYYmmdd-HHMMSS>-<tag>/ under output_dir, or `explicit_dir`. Writes
/// the resolved config to config.json inside it.
std::filesystem::path prepare_run_dir(const RunConfig& cfg, const std::optional<std::filesystem::path>& explicit_dir);

/// Writes cfg.phantoms.count subjects (T1, T2, label NIfTI and spec JSON)
/// plus manifest.json into data_root.
Manifest cmd_phantoms(const RunConfig& cfg);

/// Builds `<id>_guess.nii.gz`, `<id>_guess_sdm.nii.gz` and `<id>_prompts.jsonl`
/// for every subject of data_root/manifest.json and records them in the manifest.
Manifest cmd_guess(const RunConfig& cfg);

/// Loads subject `id` as a sample under `policy`.
TrainingSample load_sample(const Manifest& m, const RunConfig& cfg, const std::string& id, ChannelPolicy policy);

struct TrainResult {
    ChannelPolicy policy;
    std::filesystem::path checkpoint;
    TrainingHistory history;
};

/// Trains one student per policy (cfg.policies unless `only` is given).
/// Writes student_<policy>.ckpt and history_<policy>.csv into run_dir.
std::vector<TrainResult> cmd_train(const RunConfig& cfg, const std::filesystem::path& run_dir,
                                   const std::optional<ChannelPolicy>& only = std::nullopt, bool resume = false);

struct EvalReport {
    std::vector<EvalRecord> records;
    std::vector<ResultRow> rows;
    std::map<std::string, std::vector<std::string>> outliers;  // config -> flagged subject ids
    std::map<std::string, std::vector<std::size_t>> histograms;  // config -> error distance histogram
};

struct EvalOptions {
    std::vector<std::filesystem::path> checkpoints;  // empty: every student_*.ckpt in run_dir
    std::string split = "test";                      // train, val, test or all
    bool truth_as_prediction = false;                // adds a "ground_truth" row
};

/// Evaluates checkpoints on a split. Writes results.csv, results.txt,
/// records.csv, edge_histogram.csv, outliers.json/.txt and edge PNGs into run_dir.
EvalReport cmd_eval(const RunConfig& cfg, const std::filesystem::path& run_dir, const EvalOptions& options = {});

struct PowerRow {
    PowerSpec spec;
    double se = 0.0;
    double eps_formula = 0.0;
    double accuracy_formula = 0.0;
    double accuracy_tenth = 0.0;  // 1 - eps/10
    double mc_detection = 0.0;    // at eps = eps_formula
};

/// One row per z value.
std::vector<PowerRow> cmd_power(long n_cases, long n_controls, const std::vector<double>& zs, double effect,
                                long trials, uint64_t seed);
std::string power_table_text(const std::vector<PowerRow>& rows);
std::string power_table_csv(const std::vector<PowerRow>& rows);

}  // namespace hasa
