// Command-line front end: phantoms, guess, train, eval, power.
#include <CLI11.hpp>

#include <iostream>

#include "hasa/commands.hpp"

namespace fs = std::filesystem;
using namespace hasa;

namespace {

struct Common {
    std::string config;
    std::vector<std::string> overrides;
    std::string run_dir;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("-c,--config", c.config, "JSON run config (defaults when omitted)");
    cmd->add_option("-s,--set", c.overrides, "Override a config field, e.g. student.epochs=5");
    cmd->add_option("--run-dir", c.run_dir, "Run directory (default runs/<timestamp>-<tag>/)");
}

std::optional<fs::path> run_dir_of(const Common& c) {
    if (c.run_dir.empty()) return std::nullopt;
    return fs::path(c.run_dir);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Segmentation students guided by foundation-model guesses"};
    app.require_subcommand(1);

    Common common;

    auto* phantoms = app.add_subcommand("phantoms", "Generate a synthetic phantom dataset and manifest");
    add_common(phantoms, common);

    auto* guess = app.add_subcommand("guess", "Build guess and SDM volumes for every subject");
    add_common(guess, common);

    auto* train_cmd = app.add_subcommand("train", "Train one student per channel policy");
    add_common(train_cmd, common);
    std::string policy;
    bool resume = false;
    train_cmd->add_option("-p,--policy", policy, "Train only this policy");
    train_cmd->add_flag("--resume", resume, "Continue from the checkpoints in --run-dir");

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate checkpoints: table, edge maps, outliers");
    add_common(eval_cmd, common);
    EvalOptions eval_opts;
    std::vector<std::string> checkpoints;
    eval_cmd->add_option("-k,--checkpoint", checkpoints, "Checkpoint file (repeatable; default all in --run-dir)");
    eval_cmd->add_option("--split", eval_opts.split, "train, val, test or all")
        ->check(CLI::IsMember({"train", "val", "test", "all"}));
    eval_cmd->add_flag("--truth-as-prediction", eval_opts.truth_as_prediction, "Add a ground-truth row");

    auto* power = app.add_subcommand("power", "Required measurement accuracy and Monte-Carlo detection rate");
    long n_cases = 0, n_controls = 0, trials = 10000;
    std::vector<double> zs{1.96, 1.645};
    double effect = 0.10;
    uint64_t seed = 0;
    std::string power_csv;
    power->add_option("--cases", n_cases, "Number of cases")->required()->check(CLI::PositiveNumber);
    power->add_option("--controls", n_controls, "Number of controls")->required()->check(CLI::PositiveNumber);
    power->add_option("-z,--z", zs, "Critical z (repeatable)");
    power->add_option("--effect", effect, "Relative volume change in cases");
    power->add_option("--trials", trials, "Monte-Carlo trials")->check(CLI::Range(1000L, 100000000L));
    power->add_option("--seed", seed, "Monte-Carlo seed");
    power->add_option("--csv", power_csv, "Also write the table as CSV");

    CLI11_PARSE(app, argc, argv);

    try {
        if (power->parsed()) {
            const auto rows = cmd_power(n_cases, n_controls, zs, effect, trials, seed);
            std::cout << power_table_text(rows);
            if (!power_csv.empty()) {
                std::ofstream f(power_csv);
                if (!f) throw std::runtime_error("cannot write " + power_csv);
                f << power_table_csv(rows);
            }
            return 0;
        }

        const RunConfig cfg = load_run_config(common.config, common.overrides);
        const fs::path run_dir = prepare_run_dir(cfg, run_dir_of(common));
        std::clog << "run directory: " << run_dir.string() << "\n";

        if (phantoms->parsed()) {
            const Manifest m = cmd_phantoms(cfg);
            std::cout << "wrote " << m.subjects.size() << " subjects to " << cfg.data_root.string() << " (train "
                      << m.train.size() << ", val " << m.val.size() << ", test " << m.test.size() << ")\n";
        } else if (guess->parsed()) {
            const Manifest m = cmd_guess(cfg);
            std::cout << "wrote guesses for " << m.subjects.size() << " subjects to " << cfg.data_root.string() << "\n";
        } else if (train_cmd->parsed()) {
            if (resume && common.run_dir.empty()) throw std::invalid_argument("--resume needs --run-dir");
            std::optional<ChannelPolicy> only;
            if (!policy.empty()) only = channel_policy_from_string(policy);
            for (const auto& r : cmd_train(cfg, run_dir, only, resume)) {
                std::cout << to_string(r.policy) << ": best epoch " << r.history.best_epoch << ", val DICE "
                          << r.history.best_val_dice << " -> " << r.checkpoint.string() << "\n";
            }
        } else if (eval_cmd->parsed()) {
            for (const auto& c : checkpoints) eval_opts.checkpoints.emplace_back(c);
            const EvalReport rep = cmd_eval(cfg, run_dir, eval_opts);
            std::cout << results_text(rep.rows);
            bool any = false;
            for (const auto& [config, ids] : rep.outliers)
                for (const auto& id : ids) {
                    std::cout << "outlier: " << config << " " << id << "\n";
                    any = true;
                }
            if (!any) std::cout << "no DICE outliers\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
