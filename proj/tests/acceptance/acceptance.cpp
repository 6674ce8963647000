// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any fails. Usage: acceptance [work_dir]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>

#include "hasa/commands.hpp"
#include "hasa/distance.hpp"
#include "hasa/losses.hpp"
#include "hasa/metrics.hpp"
#include "hasa/nifti.hpp"
#include "hasa/power.hpp"
#include "hasa/sdm.hpp"
#include "oracles.hpp"

using namespace hasa;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Mask2D random_mask(int nx, int ny, std::mt19937& gen) {
    Mask2D m(nx, ny, uint8_t{0});
    switch (gen() % 3) {
        case 0: {  // scattered voxels
            const unsigned density = 2 + gen() % 30;
            for (auto& v : m.values()) v = (gen() % density) == 0;
            break;
        }
        case 1: {  // a few disks
            const int n = 1 + static_cast<int>(gen() % 4);
            for (int b = 0; b < n; ++b) {
                const double cx = gen() % nx, cy = gen() % ny, r = 1.0 + gen() % 12;
                for (int y = 0; y < ny; ++y)
                    for (int x = 0; x < nx; ++x)
                        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.at(x, y) = 1;
            }
            break;
        }
        default: {  // rectangles
            const int n = 1 + static_cast<int>(gen() % 3);
            for (int b = 0; b < n; ++b) {
                const int x0 = gen() % nx, y0 = gen() % ny;
                const int x1 = std::min(nx - 1, x0 + static_cast<int>(gen() % 20));
                const int y1 = std::min(ny - 1, y0 + static_cast<int>(gen() % 20));
                for (int y = y0; y <= y1; ++y)
                    for (int x = x0; x <= x1; ++x) m.at(x, y) = 1;
            }
        }
    }
    return m;
}

Outcome distance_oracle() {
    const auto t0 = Clock::now();
    std::mt19937 gen(1);
    std::size_t mismatches = 0, voxels = 0;
    for (int t = 0; t < 200; ++t) {
        const int nx = 1 + static_cast<int>(gen() % 64), ny = 1 + static_cast<int>(gen() % 64);
        const Mask2D m = random_mask(nx, ny, gen);
        const auto fast = squared_distance_to_seeds(m.values(), nx, ny);
        const auto slow = oracle::squared_distance(m.values(), nx, ny);
        for (std::size_t i = 0; i < fast.size(); ++i) mismatches += fast[i] != slow[i];
        voxels += fast.size();
    }
    const double secs = seconds_since(t0);
    return {mismatches == 0 && secs < 60.0,
            std::to_string(mismatches) + " mismatches over " + std::to_string(voxels) + " voxels, " +
                fmt("%.2f s", secs)};
}

Outcome sdm_contract() {
    std::mt19937 gen(2);
    std::size_t rim_bad = 0, clip_bad = 0, order_bad = 0, rim = 0;
    const float lo = static_cast<float>(oracle::logistic(-10.0)), hi = static_cast<float>(oracle::logistic(10.0));
    for (int t = 0; t < 100; ++t) {
        const int nx = 8 + static_cast<int>(gen() % 57), ny = 8 + static_cast<int>(gen() % 57);
        const Mask2D m = random_mask(nx, ny, gen);
        const Image2D s = soft_boundary(m);
        const auto b = oracle::boundary4(m.values(), nx, ny);
        std::size_t fg = 0;
        for (auto v : m.values()) fg += v;
        std::vector<double> sd;
        if (fg == 0) {
            sd.assign(m.size(), -1e9);
        } else if (fg == m.size()) {
            sd.assign(m.size(), 1e9);
        } else {
            sd = oracle::signed_distance(m.values(), nx, ny);
        }
        std::vector<std::pair<double, float>> pairs;
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (b[i] && fg != m.size()) {
                ++rim;
                rim_bad += std::abs(static_cast<double>(s[i]) - 0.5) > 1e-9;
            }
            if (sd[i] >= 10.0) clip_bad += s[i] != hi;
            if (sd[i] <= -10.0) clip_bad += s[i] != lo;
            pairs.emplace_back(sd[i], s[i]);
        }
        std::sort(pairs.begin(), pairs.end());
        for (std::size_t k = 1; k < pairs.size(); ++k) order_bad += pairs[k].second < pairs[k - 1].second;
    }
    return {rim_bad == 0 && clip_bad == 0 && order_bad == 0 && rim > 0,
            std::to_string(rim) + " boundary voxels (" + std::to_string(rim_bad) + " off 0.5), " +
                std::to_string(clip_bad) + " clip violations, " + std::to_string(order_bad) + " order violations"};
}

Outcome dynamic_loss_contract() {
    double worst_sum = 0.0, worst_diag = 0.0;
    for (double a = -1.0; a <= 2.0; a += 0.05)
        for (double b = -1.0; b <= 2.0; b += 0.05) {
            const auto v = dynamic_loss(a, b);
            worst_sum = std::max(worst_sum, std::abs(v.weight_dice + v.weight_boundary - 1.0));
        }
    for (double x = -1.0; x <= 2.0; x += 0.01) worst_diag = std::max(worst_diag, std::abs(dynamic_loss(x, x).value - x));
    const double at = dynamic_loss(0.5, 0.1).value;

    std::mt19937 gen(3);
    std::uniform_real_distribution<float> u(0.02f, 0.98f), d(-1.f, 1.f);
    double worst_rel = 0.0;
    for (int inst = 0; inst < 5; ++inst) {
        std::vector<float> prob(512), dist(512);
        std::vector<uint8_t> label(512);
        for (std::size_t i = 0; i < 512; ++i) {
            prob[i] = u(gen);
            dist[i] = d(gen);
            label[i] = (gen() % 3) == 0;
        }
        const auto ev = evaluate_dynamic_loss(prob, label, dist);
        auto f = [&](const std::vector<float>& p) { return evaluate_dynamic_loss(p, label, dist, {}, false).total; };
        for (std::size_t i = 0; i < 512; i += 7) {
            const double fd = oracle::central_difference(f, prob, i, 1e-3);
            worst_rel = std::max(worst_rel, std::abs(ev.grad[i] - fd) / std::abs(fd));
        }
    }
    const bool pass = worst_sum < 1e-12 && worst_diag < 1e-12 && std::abs(at - 0.30) < 1e-15 && worst_rel < 1e-3;
    return {pass, "weight-sum err " + fmt("%.1e", worst_sum) + ", diagonal err " + fmt("%.1e", worst_diag) +
                      ", value(0.5,0.1) = " + fmt("%.17g", at) + ", worst gradient rel err " +
                      fmt("%.2e", worst_rel)};
}

Outcome metrics_contract() {
    bool analytic = volume_accuracy(21000, 20000) == 0.95 && volume_accuracy(20000, 20000) == 1.0 &&
                    volume_accuracy(19000, 20000) == 0.95 && volume_accuracy(60000, 20000) == 0.0;
    LabelVolume a({4, 1, 1}, {}), b({4, 1, 1}, {});
    analytic = analytic && dice(a, b) == 1.0;
    a[0] = a[1] = 1;
    b[1] = b[2] = 1;
    analytic = analytic && dice(a, a) == 1.0 && dice(a, b) == 0.5;
    b[1] = 0;
    b[3] = 1;
    analytic = analytic && dice(a, b) == 0.0;

    std::mt19937 gen(4);
    std::size_t bad = 0;
    for (int t = 0; t < 100; ++t) {
        const Shape3 s{8 + static_cast<int>(gen() % 17), 8 + static_cast<int>(gen() % 17), 4 + static_cast<int>(gen() % 9)};
        LabelVolume p(s, {}), q(s, {});
        const unsigned dp = 2 + gen() % 5, dq = 2 + gen() % 5;
        for (auto& v : p.values()) v = (gen() % dp) == 0;
        for (auto& v : q.values()) v = (gen() % dq) == 0;
        const EdgeErrorMap m = edge_error_map(p, q);
        std::size_t xor_count = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            xor_count += p[i] != q[i];
            bad += (m.fp[i] || m.fn[i]) != (p[i] != q[i]);
            bad += m.fp[i] && m.fn[i];
        }
        bad += m.error_count() != xor_count;
    }
    return {analytic && bad == 0, std::string("analytic cases ") + (analytic ? "exact" : "WRONG") +
                                      ", partition violations over 100 pairs: " + std::to_string(bad)};
}

Outcome pipeline_identity(const fs::path& work) {
    const fs::path root = work / "identity";
    fs::remove_all(root);
    const RunConfig cfg = load_run_config("", {"paths.data_root=\"" + root.string() + "\"", "phantoms.count=6",
                                               "seed=11", "policies=[\"guess_raw\"]"});
    cmd_phantoms(cfg);
    const Manifest m = cmd_guess(cfg);
    std::size_t differing = 0, voxels = 0;
    for (const auto& s : m.subjects) {
        const LabelVolume truth = load_label(root / s.label);
        const LabelVolume guess = load_label(root / s.guess);
        const TrainingSample sample = load_sample(m, cfg, s.id, ChannelPolicy::guess_raw);
        for (std::size_t i = 0; i < truth.size(); ++i) {
            differing += truth[i] != guess[i];
            differing += static_cast<float>(truth[i]) != sample.channels[1][i];
        }
        voxels += truth.size();
    }
    return {differing == 0, std::to_string(m.subjects.size()) + " subjects, " + std::to_string(voxels) +
                                " voxels, " + std::to_string(differing) + " differences"};
}

Outcome power_reproduction() {
    const auto t0 = Clock::now();
    const double se = se_factor(240, 10000);
    const auto rows = cmd_power(240, 10000, {1.96, 1.645}, 0.10, 10000, 0);
    const double secs = seconds_since(t0);
    std::cout << power_table_text(rows);
    std::cout << "  reference accuracies: 94.47% (z=1.96), 93.41% (z=1.645); formula 1-eps gives "
              << fmt("%.2f%%", 100.0 * rows[0].accuracy_formula) << " / "
              << fmt("%.2f%%", 100.0 * rows[1].accuracy_formula) << ", 1-eps/10 gives "
              << fmt("%.2f%%", 100.0 * rows[0].accuracy_tenth) << " / " << fmt("%.2f%%", 100.0 * rows[1].accuracy_tenth)
              << "\n";
    const bool pass = std::abs(se - 0.0923) <= 5e-4 && std::abs(rows[0].mc_detection - 0.5) <= 0.05 &&
                      std::abs(rows[1].mc_detection - 0.5) <= 0.05 && secs < 60.0;
    return {pass, "se " + fmt("%.5f", se) + ", eps " + fmt("%.4f", rows[0].eps_formula) + ", MC detection " +
                      fmt("%.4f", rows[0].mc_detection) + " (z=1.96) / " + fmt("%.4f", rows[1].mc_detection) +
                      " (z=1.645), " + fmt("%.1f s", secs)};
}

struct DeskRun {
    std::map<std::string, std::vector<double>> vol_acc;  // policy -> per-seed mean
    std::map<std::string, std::vector<double>> dice;
    std::map<std::string, std::vector<std::size_t>> histogram;
    double seconds = 0.0;
    fs::path first_data_root, first_run_dir;
    RunConfig first_cfg;
};

std::vector<std::string> desk_overrides(const fs::path& root, uint64_t seed) {
    return {"seed=" + std::to_string(seed),
            "tag=desk" + std::to_string(seed),
            "paths.data_root=\"" + (root / "data").string() + "\"",
            "phantoms.count=40",
            "backend.kind=oracle",
            "backend.corruption.dilation_radius=2",
            "backend.corruption.blob_noise_count=3",
            "backend.corruption.drop_slice_prob=0.1",
            "policies=[\"t1_only\",\"guess_raw\",\"guess_sdm\"]",
            "student.preset=\"desk\"",
            "student.epochs=10"};
}

DeskRun desk_experiment(const fs::path& work) {
    DeskRun out;
    const auto t0 = Clock::now();
    for (uint64_t seed : {0, 1, 2}) {
        const fs::path root = work / ("desk_seed" + std::to_string(seed));
        fs::remove_all(root);
        const RunConfig cfg = load_run_config("", desk_overrides(root, seed));
        const fs::path run_dir = prepare_run_dir(cfg, root / "run");
        cmd_phantoms(cfg);
        cmd_guess(cfg);
        cmd_train(cfg, run_dir);
        const EvalReport rep = cmd_eval(cfg, run_dir);
        std::cout << "  seed " << seed << " (" << fmt("%.0f s", seconds_since(t0)) << " elapsed)\n"
                  << results_text(rep.rows);
        for (const auto& r : rep.rows) {
            out.vol_acc[r.config].push_back(r.mean_vol_acc);
            out.dice[r.config].push_back(r.mean_dice);
        }
        for (const auto& [config, h] : rep.histograms) {
            auto& acc = out.histogram[config];
            if (acc.size() < h.size()) acc.resize(h.size(), 0);
            for (std::size_t k = 0; k < h.size(); ++k) acc[k] += h[k];
        }
        if (seed == 0) {
            out.first_data_root = cfg.data_root;
            out.first_run_dir = run_dir;
            out.first_cfg = cfg;
        }
    }
    out.seconds = seconds_since(t0);
    return out;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

Outcome desk_ordering(const DeskRun& r) {
    const double t1 = mean(r.vol_acc.at("t1_only")), raw = mean(r.vol_acc.at("guess_raw")),
                 sdm = mean(r.vol_acc.at("guess_sdm"));
    const bool pass = t1 < raw && raw <= sdm && sdm >= 0.90 && r.seconds < 3600.0;
    return {pass, "mean Vol Acc over 3 seeds: t1_only " + fmt("%.4f", t1) + ", guess_raw " + fmt("%.4f", raw) +
                      ", guess_sdm " + fmt("%.4f", sdm) + "; DICE " + fmt("%.4f", mean(r.dice.at("t1_only"))) +
                      " / " + fmt("%.4f", mean(r.dice.at("guess_raw"))) + " / " +
                      fmt("%.4f", mean(r.dice.at("guess_sdm"))) + "; runtime " + fmt("%.1f min", r.seconds / 60.0)};
}

Outcome edge_concentration(const DeskRun& r) {
    const auto& h = r.histogram.at("guess_sdm");
    std::size_t total = 0, near = 0;
    for (std::size_t k = 0; k < h.size(); ++k) {
        total += h[k];
        if (k <= 2) near += h[k];
    }
    const double frac = total ? static_cast<double>(near) / static_cast<double>(total) : 1.0;
    return {frac >= 0.80, fmt("%.4f", frac) + " of " + std::to_string(total) +
                              " guess_sdm error voxels within 2 voxels of the truth boundary"};
}

Outcome determinism(const fs::path& work) {
    std::vector<std::string> problems;
    // data generation: byte-identical files
    std::vector<fs::path> roots;
    for (const char* name : {"det_a", "det_b"}) {
        const fs::path root = work / name;
        fs::remove_all(root);
        roots.push_back(root);
        const RunConfig cfg = load_run_config(
            "", {"seed=7", "paths.data_root=\"" + (root / "data").string() + "\"", "phantoms.count=6",
                 "phantoms.shape=[32,32,32]", "phantoms.semi_axis_range=[5,7]", "phantoms.distractor_axis_range=[3,5]",
                 "backend.corruption.dilation_radius=2", "backend.corruption.blob_noise_count=3",
                 "backend.corruption.drop_slice_prob=0.1", "policies=[\"guess_sdm\"]", "student.epochs=2",
                 "augment.copies=2"});
        const fs::path run_dir = prepare_run_dir(cfg, root / "run");
        cmd_phantoms(cfg);
        cmd_guess(cfg);
        cmd_train(cfg, run_dir);
        cmd_eval(cfg, run_dir);
    }
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(roots[0] / "data")) {
        ++files;
        if (read_bytes(e.path()) != read_bytes(roots[1] / "data" / e.path().filename()))
            problems.push_back("data/" + e.path().filename().string() + " differs");
    }
    for (const char* f : {"student_guess_sdm.ckpt", "history_guess_sdm.csv", "records.csv", "results.csv",
                          "edge_histogram.csv", "outliers.json"}) {
        ++files;
        if (read_bytes(roots[0] / "run" / f) != read_bytes(roots[1] / "run" / f)) problems.push_back(std::string(f) + " differs");
    }
    const auto pa = cmd_power(100, 1000, {1.96}, 0.1, 2000, 5), pb = cmd_power(100, 1000, {1.96}, 0.1, 2000, 5);
    if (power_table_csv(pa) != power_table_csv(pb)) problems.push_back("power output differs");
    std::string detail = std::to_string(files) + " files compared across two runs";
    for (const auto& p : problems) detail += "; " + p;
    return {problems.empty(), detail};
}

Outcome outlier_flagging(const DeskRun& r, const fs::path& work) {
    const auto flagged = flag_outliers({0.9, 0.91, 0.89, 0.2}, 3.0);
    const bool example = flagged.size() == 1 && flagged[0] == 3;

    // shift one test subject's label by 10 voxels and re-evaluate the trained guess_sdm student
    const fs::path root = work / "outlier";
    fs::remove_all(root);
    fs::create_directories(root);
    fs::copy(r.first_data_root, root / "data", fs::copy_options::recursive);
    RunConfig cfg = r.first_cfg;
    cfg.data_root = root / "data";
    cfg.metrics.edge_pngs = false;
    const Manifest m = load_manifest(cfg.data_root / "manifest.json");
    const std::string victim = m.test.front();
    const fs::path label_path = cfg.data_root / m.subject(victim).label;
    const LabelVolume label = load_label(label_path);
    LabelVolume shifted(label.shape(), label.spacing());
    shifted.set_orientation(label.orientation());
    const auto& s = label.shape();
    for (int z = 0; z < s.nz; ++z)
        for (int y = 0; y < s.ny; ++y)
            for (int x = 10; x < s.nx; ++x) shifted.at(x, y, z) = label.at(x - 10, y, z);
    save_volume(shifted, label_path);

    EvalOptions opt;
    opt.checkpoints = {r.first_run_dir / "student_guess_sdm.ckpt"};
    const EvalReport rep = cmd_eval(cfg, prepare_run_dir(cfg, root / "run"), opt);
    const auto& ids = rep.outliers.at("guess_sdm");
    const bool caught = std::find(ids.begin(), ids.end(), victim) != ids.end();
    std::string list;
    for (const auto& id : ids) list += (list.empty() ? "" : ",") + id;
    return {example && caught, std::string("MAD example ") + (example ? "flags index 3" : "WRONG") +
                                   "; shifted subject " + victim + (caught ? " flagged" : " NOT flagged") +
                                   " (flagged: " + list + ")"};
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "hasa_acceptance";
    fs::create_directories(work);
    std::cout << std::unitbuf;
    int failures = 0;
    const auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << id << "] " << name << ": " << o.detail << "\n";
        return o.pass;
    };

    report(1, "exact distance transform vs all-pairs oracle", distance_oracle);
    report(2, "soft boundary map contract", sdm_contract);
    report(3, "dynamic loss contract", dynamic_loss_contract);
    report(4, "DICE / Vol Acc / edge partition", metrics_contract);
    report(5, "pipeline identity (zero corruption, guess_raw)", [&] { return pipeline_identity(work); });
    report(6, "measurement-accuracy power analysis", power_reproduction);

    std::optional<DeskRun> desk;
    try {
        desk = desk_experiment(work);
    } catch (const std::exception& e) {
        std::cout << "desk experiment failed: " << e.what() << "\n";
    }
    const auto need_desk = [&](const std::function<Outcome(const DeskRun&)>& fn) {
        return [&desk, fn]() -> Outcome {
            if (!desk) return {false, "desk experiment did not complete"};
            return fn(*desk);
        };
    };
    report(7, "desk-scale policy ordering (40 phantoms, 3 seeds)", need_desk(desk_ordering));
    report(8, "edge-error concentration (guess_sdm)", need_desk(edge_concentration));
    report(9, "determinism across repeated runs", [&] { return determinism(work); });
    report(10, "outlier flagging", need_desk([&](const DeskRun& r) { return outlier_flagging(r, work); }));

    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << "\n";
    return failures == 0 ? 0 : 1;
}
