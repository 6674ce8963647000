#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "hasa/commands.hpp"
#include "hasa/nifti.hpp"

using namespace hasa;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("hasa_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<std::string> small_set(const fs::path& root, int count = 5) {
    return {"paths.data_root=\"" + root.string() + "\"",
            "phantoms.count=" + std::to_string(count),
            "phantoms.shape=[24,24,16]",
            "phantoms.semi_axis_range=[3,5]",
            "phantoms.distractor_count=1",
            "phantoms.distractor_axis_range=[2,3]",
            "seed=5"};
}

std::string read_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

int run(const std::string& args, std::string* output = nullptr) {
    const fs::path out = fs::temp_directory_path() / "hasa_test_cli_output.txt";
    const std::string cmd = std::string(HASA_BIN) + " " + args + " > " + out.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    if (output) *output = read_bytes(out);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, OverridesReachNestedFields) {
    const RunConfig c = load_run_config("", {"student.epochs=5", "backend.corruption.dilation_radius=2.5",
                                             "tag=abc", "policies=[\"guess_sdm\"]", "sdm.band=6"});
    EXPECT_EQ(c.student.epochs, 5);
    EXPECT_EQ(c.student.preset, "desk");
    EXPECT_DOUBLE_EQ(c.corruption.dilation_radius, 2.5);
    EXPECT_EQ(c.tag, "abc");
    ASSERT_EQ(c.policies.size(), 1u);
    EXPECT_EQ(c.policies[0], ChannelPolicy::guess_sdm);
    EXPECT_DOUBLE_EQ(c.sdm.band, 6.0);
    EXPECT_THROW(load_run_config("", {"noequals"}), std::invalid_argument);
    EXPECT_THROW(load_run_config("", {"split=[0.5,0.5,0.5]"}), std::invalid_argument);
    EXPECT_THROW(load_run_config("/nonexistent/cfg.json"), std::runtime_error);
}

TEST(Config, SubSeedsInheritTopLevelSeed) {
    const RunConfig c = load_run_config("", {"seed=42", "augment.seed=7"});
    EXPECT_EQ(c.phantoms.seed, 42u);
    EXPECT_EQ(c.corruption.seed, 42u);
    EXPECT_EQ(c.jitter.seed, 42u);
    EXPECT_EQ(c.student.seed, 42u);
    EXPECT_EQ(c.augment.seed, 7u);
    const RunConfig back = run_config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Config, RunDirectoryHoldsResolvedConfig) {
    const auto root = temp_dir("rundir");
    const RunConfig c = load_run_config("", {"paths.output_dir=\"" + root.string() + "\"", "tag=t1"});
    const fs::path dir = prepare_run_dir(c, std::nullopt);
    EXPECT_EQ(dir.parent_path(), root);
    EXPECT_TRUE(dir.filename().string().ends_with("-t1"));
    const auto j = nlohmann::json::parse(read_bytes(dir / "config.json"));
    EXPECT_EQ(j.at("tag"), "t1");
}

TEST(Commands, PhantomsRejectZeroCount) {
    const auto root = temp_dir("zero");
    auto ov = small_set(root);
    ov.push_back("phantoms.count=0");
    EXPECT_THROW(cmd_phantoms(load_run_config("", ov)), std::invalid_argument);
    std::string out;
    EXPECT_EQ(run("phantoms -s phantoms.count=0 -s paths.data_root=\"" + root.string() + "\" --run-dir " +
                      (root / "run").string(),
                  &out),
              1);
    EXPECT_NE(out.find("error:"), std::string::npos);
}

TEST(Commands, RerunIsByteIdentical) {
    const auto a = temp_dir("rerun_a"), b = temp_dir("rerun_b");
    for (const auto& root : {a, b}) {
        auto ov = small_set(root);
        ov.push_back("backend.corruption.dilation_radius=1");
        ov.push_back("backend.corruption.blob_noise_count=2");
        const RunConfig c = load_run_config("", ov);
        cmd_phantoms(c);
        cmd_guess(c);
    }
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        const fs::path other = b / e.path().filename();
        ASSERT_TRUE(fs::exists(other)) << other;
        EXPECT_EQ(read_bytes(e.path()), read_bytes(other)) << e.path().filename();
        ++files;
    }
    EXPECT_GE(files, 5u * 7u);
}

TEST(Commands, GuessSdmStaysInUnitRange) {
    const auto root = temp_dir("sdm_range");
    const RunConfig c = load_run_config("", small_set(root, 3));
    cmd_phantoms(c);
    const Manifest m = cmd_guess(c);
    for (const auto& s : m.subjects) {
        const Volume3D v = load_volume(root / s.guess_sdm);
        const auto [lo, hi] = v.intensity_range();
        EXPECT_GE(lo, 0.f);
        EXPECT_LE(hi, 1.f);
        const LabelVolume raw = load_label(root / s.guess);
        EXPECT_EQ(raw.values(), load_label(root / s.label).values());  // identity corruption
    }
}

TEST(Commands, FileBackendReportsMissingSlice) {
    const auto root = temp_dir("file_backend");
    const auto exchange = root / "exchange";
    auto ov = small_set(root, 2);
    ov.push_back("backend.kind=file");
    ov.push_back("paths.exchange_dir=\"" + exchange.string() + "\"");
    const RunConfig c = load_run_config("", ov);
    cmd_phantoms(c);
    fs::create_directories(exchange / "ph000");
    std::ofstream(exchange / "ph000" / "confidences.json") << "{}";
    try {
        cmd_guess(c);
        FAIL() << "expected a missing-slice error";
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("ph000"), std::string::npos) << msg;
        EXPECT_NE(msg.find("slice z"), std::string::npos) << msg;
    }
}

TEST(Commands, TruthAsPredictionScoresPerfectly) {
    const auto root = temp_dir("truth_pred");
    const RunConfig c = load_run_config("", small_set(root, 5));
    cmd_phantoms(c);
    EvalOptions opt;
    opt.truth_as_prediction = true;
    opt.split = "all";
    const EvalReport rep = cmd_eval(c, root / "run", opt);
    ASSERT_EQ(rep.rows.size(), 1u);
    EXPECT_EQ(rep.rows[0].config, "ground_truth");
    EXPECT_DOUBLE_EQ(rep.rows[0].mean_dice, 1.0);
    EXPECT_DOUBLE_EQ(rep.rows[0].mean_vol_acc, 1.0);
    EXPECT_TRUE(fs::exists(root / "run" / "results.csv"));
    EXPECT_TRUE(rep.outliers.at("ground_truth").empty());
}

TEST(Commands, EvalWithoutCheckpointsFails) {
    const auto root = temp_dir("no_ckpt");
    const RunConfig c = load_run_config("", small_set(root, 5));
    cmd_phantoms(c);
    fs::create_directories(root / "run");
    EXPECT_THROW(cmd_eval(c, root / "run"), std::runtime_error);
}

TEST(Commands, TrainNeedsGuessesForGuessPolicies) {
    const auto root = temp_dir("no_guess");
    const RunConfig c = load_run_config("", small_set(root, 5));
    cmd_phantoms(c);
    EXPECT_THROW(cmd_train(c, root / "run", ChannelPolicy::guess_sdm), std::runtime_error);
}

TEST(Commands, PowerTableAndUsageErrors) {
    const auto rows = cmd_power(240, 10000, {1.96, 1.645}, 0.10, 2000, 0);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_NEAR(rows[0].eps_formula, 0.5523, 5e-5);
    EXPECT_NEAR(rows[0].accuracy_tenth, 1.0 - rows[0].eps_formula / 10.0, 1e-12);
    EXPECT_NE(power_table_text(rows).find("1.645"), std::string::npos);
    EXPECT_NE(power_table_csv(rows).find("eps"), std::string::npos);

    std::string out;
    EXPECT_EQ(run("power --cases 240 --controls 10000 --trials 1000", &out), 0);
    EXPECT_NE(out.find("0.55"), std::string::npos) << out;
    EXPECT_NE(run("power --controls 10000", &out), 0);
    EXPECT_NE(out.find("--cases"), std::string::npos) << out;
    EXPECT_NE(run("power --cases -3 --controls 10", &out), 0);
    EXPECT_NE(run("", &out), 0);
}
