#include "hasa/commands.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "hasa/nifti.hpp"
#include "hasa/rng.hpp"

namespace hasa {

namespace fs = std::filesystem;

namespace {

std::string eligibility_name(BoxEligibility e) { return e == BoxEligibility::centroid ? "centroid" : "intersection"; }

BoxEligibility eligibility_from(const std::string& s) {
    if (s == "centroid") return BoxEligibility::centroid;
    if (s == "intersection") return BoxEligibility::intersection;
    throw std::invalid_argument("unknown box eligibility: " + s);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
    if (!f) throw std::runtime_error("failed writing " + path.string());
}

fs::path resolve(const fs::path& root, const std::string& file) {
    if (file.empty()) return {};
    const fs::path p(file);
    return p.is_absolute() ? p : root / p;
}

}  // namespace

void RunConfig::validate() const {
    if (tag.empty() || tag.find('/') != std::string::npos) throw std::invalid_argument("config: tag must be a plain name");
    phantoms.validate();
    corruption.validate();
    sdm.validate();
    augment.validate();
    student.validate();
    if (jitter.max_shift < 0) throw std::invalid_argument("config: jitter.max_shift must be >= 0");
    if (!(filters.attention_threshold > 0.0 && filters.attention_threshold < 1.0)) {
        throw std::invalid_argument("config: attention_threshold must be in (0,1)");
    }
    if (policies.empty()) throw std::invalid_argument("config: at least one channel policy is required");
    for (double f : split)
        if (f < 0.0) throw std::invalid_argument("config: split fractions must be >= 0");
    if (std::fabs(split[0] + split[1] + split[2] - 1.0) > 1e-9) {
        throw std::invalid_argument("config: split fractions must sum to 1");
    }
    if (!(metrics.outlier_k > 0.0)) throw std::invalid_argument("config: metrics.outlier_k must be > 0");
    if (backend != BackendKind::oracle && exchange_dir.empty()) {
        throw std::invalid_argument("config: backend " + to_string(backend) + " needs paths.exchange_dir");
    }
}

nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json policies = nlohmann::json::array();
    for (auto p : c.policies) policies.push_back(to_string(p));
    return {{"tag", c.tag},
            {"seed", c.seed},
            {"paths",
             {{"data_root", c.data_root.string()},
              {"exchange_dir", c.exchange_dir.string()},
              {"output_dir", c.output_dir.string()}}},
            {"phantoms", c.phantoms},
            {"backend",
             {{"kind", to_string(c.backend)},
              {"corruption", c.corruption},
              {"contour_filter", c.filters.contour_filter},
              {"box_eligibility", eligibility_name(c.filters.eligibility)},
              {"attention_threshold", c.filters.attention_threshold}}},
            {"jitter", {{"max_shift", c.jitter.max_shift}, {"seed", c.jitter.seed}}},
            {"sdm", {{"band", c.sdm.band}, {"steepness", c.sdm.steepness}, {"volumetric", c.sdm.volumetric}}},
            {"policies", policies},
            {"augment", c.augment},
            {"split", c.split},
            {"student", c.student},
            {"metrics",
             {{"outlier_k", c.metrics.outlier_k},
              {"pooled_vol_acc", c.metrics.pooled_vol_acc},
              {"edge_per_slice", c.metrics.edge_per_slice},
              {"edge_pngs", c.metrics.edge_pngs}}}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    try {
        c.tag = j.value("tag", c.tag);
        c.seed = j.value("seed", c.seed);
        const auto seeded = [&](const char* key) {
            nlohmann::json sub = j.contains(key) ? j.at(key) : nlohmann::json::object();
            if (!sub.contains("seed")) sub["seed"] = c.seed;
            return sub;
        };
        if (j.contains("paths")) {
            const auto& p = j.at("paths");
            c.data_root = p.value("data_root", c.data_root.string());
            c.exchange_dir = p.value("exchange_dir", c.exchange_dir.string());
            c.output_dir = p.value("output_dir", c.output_dir.string());
        }
        c.phantoms = seeded("phantoms").get<PhantomSetSpec>();
        if (j.contains("backend")) {
            const auto& b = j.at("backend");
            c.backend = backend_kind_from_string(b.value("kind", to_string(c.backend)));
            nlohmann::json corr = b.value("corruption", nlohmann::json::object());
            if (!corr.contains("seed")) corr["seed"] = c.seed;
            c.corruption = corr.get<CorruptionSpec>();
            c.filters.contour_filter = b.value("contour_filter", c.filters.contour_filter);
            c.filters.eligibility = eligibility_from(b.value("box_eligibility", eligibility_name(c.filters.eligibility)));
            c.filters.attention_threshold = b.value("attention_threshold", c.filters.attention_threshold);
        } else {
            c.corruption.seed = c.seed;
        }
        const auto jit = seeded("jitter");
        c.jitter.max_shift = jit.value("max_shift", c.jitter.max_shift);
        c.jitter.seed = jit.at("seed").get<uint64_t>();
        if (j.contains("sdm")) {
            const auto& s = j.at("sdm");
            c.sdm.band = s.value("band", c.sdm.band);
            c.sdm.steepness = s.value("steepness", c.sdm.steepness);
            c.sdm.volumetric = s.value("volumetric", c.sdm.volumetric);
        }
        if (j.contains("policies")) {
            c.policies.clear();
            for (const auto& p : j.at("policies")) c.policies.push_back(channel_policy_from_string(p.get<std::string>()));
        }
        c.augment = seeded("augment").get<AugmentSpec>();
        c.split = j.value("split", c.split);
        nlohmann::json st = seeded("student");
        if (!st.contains("preset")) st["preset"] = "desk";
        c.student = st.get<StudentConfig>();
        if (j.contains("metrics")) {
            const auto& m = j.at("metrics");
            c.metrics.outlier_k = m.value("outlier_k", c.metrics.outlier_k);
            c.metrics.pooled_vol_acc = m.value("pooled_vol_acc", c.metrics.pooled_vol_acc);
            c.metrics.edge_per_slice = m.value("edge_per_slice", c.metrics.edge_per_slice);
            c.metrics.edge_pngs = m.value("edge_pngs", c.metrics.edge_pngs);
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

void apply_overrides(nlohmann::json& j, const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0) throw std::invalid_argument("override must look like key.path=value: " + o);
        const std::string key = o.substr(0, eq), text = o.substr(eq + 1);
        nlohmann::json value;
        try {
            value = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error&) {
            value = text;
        }
        nlohmann::json* node = &j;
        std::size_t start = 0;
        while (true) {
            const auto dot = key.find('.', start);
            const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            if (part.empty()) throw std::invalid_argument("empty key segment in override: " + o);
            if (dot == std::string::npos) {
                (*node)[part] = value;
                break;
            }
            if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = nlohmann::json::object();
            node = &(*node)[part];
            start = dot + 1;
        }
    }
}

RunConfig load_run_config(const fs::path& path, const std::vector<std::string>& overrides) {
    nlohmann::json j = nlohmann::json::object();
    if (!path.empty()) {
        std::ifstream f(path);
        if (!f) throw std::runtime_error("config file not found: " + path.string());
        try {
            j = nlohmann::json::parse(f);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::invalid_argument("config " + path.string() + ": " + e.what());
        }
    }
    apply_overrides(j, overrides);
    return run_config_from_json(j);
}

fs::path prepare_run_dir(const RunConfig& cfg, const std::optional<fs::path>& explicit_dir) {
    fs::path dir;
    if (explicit_dir) {
        dir = *explicit_dir;
    } else {
        const std::time_t now = std::time(nullptr);
        std::tm tm{};
        localtime_r(&now, &tm);
        std::ostringstream name;
        name << std::put_time(&tm, "%Y%m%d-%H%M%S") << '-' << cfg.tag;
        dir = cfg.output_dir / name.str();
    }
    fs::create_directories(dir);
    write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
    return dir;
}

Manifest cmd_phantoms(const RunConfig& cfg) {
    if (cfg.phantoms.count < 1) throw std::invalid_argument("phantoms: count must be >= 1");
    std::error_code ec;
    fs::create_directories(cfg.data_root, ec);
    if (ec) throw std::runtime_error("cannot create data root " + cfg.data_root.string() + ": " + ec.message());
    std::vector<SubjectFiles> subjects;
    for (int i = 0; i < cfg.phantoms.count; ++i) {
        std::ostringstream id;
        id << "ph" << std::setw(3) << std::setfill('0') << i;
        const PhantomSpec spec = sample_phantom_spec(cfg.phantoms, i);
        const auto [t1, label] = generate_phantom(spec);
        const auto [t2, label2] = generate_phantom(companion_t2_spec(spec, cfg.phantoms.t2_contrast_gap));
        SubjectFiles s;
        s.id = id.str();
        s.t1 = s.id + "_t1.nii.gz";
        s.t2 = s.id + "_t2.nii.gz";
        s.label = s.id + "_label.nii.gz";
        save_volume(t1, cfg.data_root / s.t1);
        save_volume(t2, cfg.data_root / s.t2);
        save_volume(label, cfg.data_root / s.label);
        write_text(cfg.data_root / (s.id + "_spec.json"), nlohmann::json(spec).dump(2) + "\n");
        subjects.push_back(std::move(s));
    }
    write_text(cfg.data_root / "phantoms.json", nlohmann::json(cfg.phantoms).dump(2) + "\n");
    Manifest m = build_manifest(std::move(subjects), cfg.split, cfg.seed, cfg.augment, cfg.policies);
    save_manifest(m, cfg.data_root / "manifest.json");
    return m;
}

Manifest cmd_guess(const RunConfig& cfg) {
    Manifest m = load_manifest(cfg.data_root / "manifest.json");
    for (auto& s : m.subjects) {
        const Volume3D t1 = load_volume(resolve(cfg.data_root, s.t1));
        const LabelVolume prior = load_label(resolve(cfg.data_root, s.label));
        std::unique_ptr<GuessBackend> backend;
        switch (cfg.backend) {
            case BackendKind::oracle:
                backend = std::make_unique<OracleBackend>(prior, cfg.corruption, hash_string(s.id));
                break;
            case BackendKind::file: backend = std::make_unique<FileBackend>(cfg.exchange_dir, s.id); break;
            case BackendKind::attention: backend = std::make_unique<AttentionBackend>(cfg.exchange_dir, s.id); break;
        }
        const GuessVolumes g = build_guess_volume(t1, prior, *backend, cfg.jitter, cfg.sdm, cfg.filters,
                                                  hash_string(s.id));
        s.guess = s.id + "_guess.nii.gz";
        s.guess_sdm = s.id + "_guess_sdm.nii.gz";
        save_volume(g.raw, cfg.data_root / s.guess);
        save_volume(g.sdm, cfg.data_root / s.guess_sdm);
        write_prompts_jsonl(g.prompts, cfg.data_root / (s.id + "_prompts.jsonl"));
    }
    save_manifest(m, cfg.data_root / "manifest.json");
    return m;
}

TrainingSample load_sample(const Manifest& m, const RunConfig& cfg, const std::string& id, ChannelPolicy policy) {
    const SubjectFiles& s = m.subject(id);
    const Volume3D t1 = load_volume(resolve(cfg.data_root, s.t1));
    const LabelVolume label = load_label(resolve(cfg.data_root, s.label));
    std::optional<Volume3D> second;
    const auto need = [&](const std::string& file, const char* what) {
        if (file.empty()) {
            throw std::runtime_error("subject " + id + " has no " + what + " volume; run the " +
                                     (std::string(what) == "t2" ? "phantoms" : "guess") + " command first");
        }
        return resolve(cfg.data_root, file);
    };
    switch (policy) {
        case ChannelPolicy::t2: second = load_volume(need(s.t2, "t2")); break;
        case ChannelPolicy::guess_raw: second = to_volume(load_label(need(s.guess, "guess"))); break;
        case ChannelPolicy::guess_sdm: second = load_volume(need(s.guess_sdm, "guess_sdm")); break;
        case ChannelPolicy::blank:
        case ChannelPolicy::t1_only: break;
    }
    return assemble_sample(t1, second ? &*second : nullptr, label, policy, id);
}

std::vector<TrainResult> cmd_train(const RunConfig& cfg, const fs::path& run_dir,
                                   const std::optional<ChannelPolicy>& only, bool resume) {
    const Manifest m = load_manifest(cfg.data_root / "manifest.json");
    if (m.train.empty()) throw std::invalid_argument("train: the manifest's training split is empty");
    std::vector<ChannelPolicy> policies = only ? std::vector<ChannelPolicy>{*only} : cfg.policies;
    std::vector<TrainResult> out;
    for (ChannelPolicy policy : policies) {
        const std::string name = to_string(policy);
        std::vector<TrainingSample> base, val;
        for (const auto& id : m.train) base.push_back(load_sample(m, cfg, id, policy));
        for (const auto& id : m.val) val.push_back(load_sample(m, cfg, id, policy));
        const auto train_set = expand_augmented(base, cfg.augment);

        StudentConfig sc = cfg.student;
        sc.in_channels = channel_count(policy);
        UNet3D model = build_student(sc);
        TrainOptions opt;
        const fs::path ckpt = run_dir / ("student_" + name + ".ckpt");
        opt.checkpoint_path = ckpt;
        opt.history_path = run_dir / ("history_" + name + ".csv");
        opt.tag = name;
        if (resume) {
            if (!fs::exists(ckpt)) throw std::runtime_error("cannot resume: no checkpoint at " + ckpt.string());
            opt.resume_from = ckpt;
        }
        opt.on_epoch = [&](const EpochStats& e) {
            std::clog << "[" << name << "] epoch " << e.epoch << "/" << sc.epochs << std::fixed << std::setprecision(4)
                      << " loss " << e.train_loss << " dice " << e.train_dice << " | val loss " << e.val_loss
                      << " dice " << e.val_dice << " vol_acc " << e.val_vol_acc << std::endl;
        };
        TrainingHistory h = train(model, train_set, val, sc, opt);
        out.push_back({policy, ckpt, std::move(h)});
    }
    return out;
}

EvalReport cmd_eval(const RunConfig& cfg, const fs::path& run_dir, const EvalOptions& options) {
    const Manifest m = load_manifest(cfg.data_root / "manifest.json");
    std::vector<std::string> ids;
    if (options.split == "train") ids = m.train;
    else if (options.split == "val") ids = m.val;
    else if (options.split == "test") ids = m.test;
    else if (options.split == "all") for (const auto& s : m.subjects) ids.push_back(s.id);
    else throw std::invalid_argument("eval: unknown split " + options.split);
    if (ids.empty()) throw std::invalid_argument("eval: split " + options.split + " is empty");

    std::vector<fs::path> checkpoints = options.checkpoints;
    if (checkpoints.empty() && !options.truth_as_prediction) {
        for (const auto& e : fs::directory_iterator(run_dir)) {
            const auto n = e.path().filename().string();
            if (n.starts_with("student_") && e.path().extension() == ".ckpt") checkpoints.push_back(e.path());
        }
        std::sort(checkpoints.begin(), checkpoints.end());
        if (checkpoints.empty()) throw std::runtime_error("eval: no checkpoints in " + run_dir.string());
    }

    EvalReport report;
    const fs::path edge_dir = run_dir / "edges";
    if (cfg.metrics.edge_pngs) fs::create_directories(edge_dir);

    const auto record = [&](const std::string& config, const std::string& id, const LabelVolume& pred,
                            const LabelVolume& truth, const Volume3D& image) {
        EvalRecord r;
        r.subject_id = id;
        r.config = config;
        r.dice = dice(pred, truth);
        r.pred_volume_voxels = pred.foreground_count();
        r.true_volume_voxels = truth.foreground_count();
        r.vol_acc = r.true_volume_voxels > 0 ? volume_accuracy(pred, truth) : (r.pred_volume_voxels == 0 ? 1.0 : 0.0);
        const EdgeErrorMap em = edge_error_map(pred, truth, cfg.metrics.edge_per_slice);
        r.edge_fp_count = em.fp.foreground_count();
        r.edge_fn_count = em.fn.foreground_count();
        auto& h = report.histograms[config];
        if (h.size() < em.histogram.size()) h.resize(em.histogram.size(), 0);
        for (std::size_t k = 0; k < em.histogram.size(); ++k) h[k] += em.histogram[k];
        if (cfg.metrics.edge_pngs) {
            int best_z = truth.shape().nz / 2;
            std::size_t best = 0;
            for (int z = 0; z < truth.shape().nz; ++z) {
                std::size_t n = 0;
                const auto fp = em.fp.slice_span(z), fn = em.fn.slice_span(z);
                for (std::size_t i = 0; i < fp.size(); ++i) n += fp[i] + fn[i];
                if (n > best) {
                    best = n;
                    best_z = z;
                }
            }
            write_edge_overlay(edge_dir / (config + "_" + id + ".png"), image, em, best_z);
        }
        report.records.push_back(r);
    };

    if (options.truth_as_prediction) {
        for (const auto& id : ids) {
            const auto& s = m.subject(id);
            const LabelVolume truth = load_label(resolve(cfg.data_root, s.label));
            record("ground_truth", id, truth, truth, load_volume(resolve(cfg.data_root, s.t1)));
        }
    }
    for (const auto& path : checkpoints) {
        const Checkpoint ck = load_checkpoint(path);
        ChannelPolicy policy;
        try {
            policy = channel_policy_from_string(ck.tag);
        } catch (const std::invalid_argument&) {
            throw std::runtime_error("checkpoint " + path.string() + " does not name a channel policy");
        }
        UNet3D net = restore_student(ck);
        for (const auto& id : ids) {
            const TrainingSample sample = load_sample(m, cfg, id, policy);
            const Prediction pred = predict(net, sample.channels, 2 * ck.config.patch_size);
            record(ck.tag, id, pred.mask, sample.label, sample.channels.front());
        }
    }

    report.rows = results_table(report.records, cfg.metrics.pooled_vol_acc);
    std::ostringstream out_txt;
    nlohmann::json out_json = nlohmann::json::object();
    for (const auto& row : report.rows) {
        std::vector<double> scores;
        std::vector<const EvalRecord*> recs;
        for (const auto& r : report.records)
            if (r.config == row.config) {
                scores.push_back(r.dice);
                recs.push_back(&r);
            }
        auto& flagged = report.outliers[row.config];
        if (scores.size() >= 4) {
            for (auto i : flag_outliers(scores, cfg.metrics.outlier_k)) flagged.push_back(recs[i]->subject_id);
        }
        out_json[row.config] = flagged;
        for (const auto& id : flagged) {
            for (const auto* r : recs)
                if (r->subject_id == id)
                    out_txt << row.config << ' ' << id << " dice " << std::fixed << std::setprecision(4) << r->dice
                            << '\n';
        }
    }
    std::ostringstream hist;
    hist << "config,distance,count\n";
    for (const auto& [config, h] : report.histograms)
        for (std::size_t k = 0; k < h.size(); ++k) hist << config << ',' << k << ',' << h[k] << '\n';

    write_text(run_dir / "results.csv", results_csv(report.rows));
    write_text(run_dir / "results.txt", results_text(report.rows));
    write_text(run_dir / "records.csv", records_csv(report.records));
    write_text(run_dir / "edge_histogram.csv", hist.str());
    write_text(run_dir / "outliers.json", out_json.dump(2) + "\n");
    write_text(run_dir / "outliers.txt", out_txt.str());
    return report;
}

std::vector<PowerRow> cmd_power(long n_cases, long n_controls, const std::vector<double>& zs, double effect,
                                long trials, uint64_t seed) {
    if (zs.empty()) throw std::invalid_argument("power: at least one z value is required");
    std::vector<PowerRow> rows;
    for (double z : zs) {
        PowerRow r;
        r.spec.n_cases = n_cases;
        r.spec.n_controls = n_controls;
        r.spec.z = z;
        r.spec.effect = effect;
        r.spec.trials = trials;
        r.spec.validate();
        r.se = se_factor(n_cases, n_controls);
        r.eps_formula = required_epsilon(r.spec);
        r.accuracy_formula = 1.0 - r.eps_formula;
        r.accuracy_tenth = 1.0 - r.eps_formula / 10.0;
        r.spec.eps = r.eps_formula;
        r.mc_detection = monte_carlo_power(r.spec, seed);
        rows.push_back(r);
    }
    return rows;
}

std::string power_table_text(const std::vector<PowerRow>& rows) {
    std::ostringstream os;
    os << std::setw(8) << "cases" << std::setw(10) << "controls" << std::setw(8) << "z" << std::setw(8) << "effect"
       << std::setw(11) << "se_factor" << std::setw(12) << "eps_formula" << std::setw(14) << "acc_formula"
       << std::setw(14) << "acc(eps/10)" << std::setw(9) << "trials" << std::setw(14) << "mc_detection" << '\n';
    for (const auto& r : rows) {
        os << std::setw(8) << r.spec.n_cases << std::setw(10) << r.spec.n_controls << std::fixed << std::setprecision(3)
           << std::setw(8) << r.spec.z << std::setw(8) << r.spec.effect << std::setprecision(4) << std::setw(11)
           << r.se << std::setw(12) << r.eps_formula << std::setprecision(2) << std::setw(13)
           << 100.0 * r.accuracy_formula << '%' << std::setw(13) << 100.0 * r.accuracy_tenth << '%' << std::setw(9)
           << r.spec.trials << std::setprecision(4) << std::setw(14) << r.mc_detection << '\n';
    }
    return os.str();
}

std::string power_table_csv(const std::vector<PowerRow>& rows) {
    std::ostringstream os;
    os << "n_cases,n_controls,z,effect,se_factor,eps_formula,accuracy_formula,accuracy_eps_over_10,trials,"
          "mc_detection\n";
    os << std::setprecision(6) << std::fixed;
    for (const auto& r : rows)
        os << r.spec.n_cases << ',' << r.spec.n_controls << ',' << r.spec.z << ',' << r.spec.effect << ',' << r.se
           << ',' << r.eps_formula << ',' << r.accuracy_formula << ',' << r.accuracy_tenth << ',' << r.spec.trials
           << ',' << r.mc_detection << '\n';
    return os.str();
}

}  // namespace hasa
