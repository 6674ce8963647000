#include "hasa/student.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "hasa/metrics.hpp"
#include "hasa/rng.hpp"
#include "hasa/sdm.hpp"

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace hasa {

StudentConfig StudentConfig::default_preset() { return StudentConfig{}; }

StudentConfig StudentConfig::desk_preset() {
    StudentConfig c;
    c.preset = "desk";
    c.depth = 2;
    c.base_filters = 4;
    c.param_budget = 100'000;
    c.patch_size = 32;
    return c;
}

StudentConfig StudentConfig::from_preset(const std::string& name) {
    if (name == "default") return default_preset();
    if (name == "desk") return desk_preset();
    throw std::invalid_argument("unknown student preset: " + name);
}

UNetArchitecture StudentConfig::architecture() const {
    UNetArchitecture a;
    a.in_channels = in_channels;
    a.depth = depth;
    a.base_filters = base_filters;
    return a;
}

void StudentConfig::validate() const {
    if (in_channels != 1 && in_channels != 2) throw std::invalid_argument("student: in_channels must be 1 or 2");
    if (depth < 1 || depth > 6) throw std::invalid_argument("student: depth must be in [1,6]");
    if (base_filters < 1) throw std::invalid_argument("student: base_filters must be >= 1");
    const int m = 1 << depth;
    if (patch_size < m || patch_size % m != 0) {
        throw std::invalid_argument("student: patch_size " + std::to_string(patch_size) +
                                    " is not a positive multiple of 2^depth = " + std::to_string(m));
    }
    if (epochs < 0) throw std::invalid_argument("student: epochs must be >= 0");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("student: learning_rate must be > 0");
    if (batch_size < 1) throw std::invalid_argument("student: batch_size must be >= 1");
    if (patches_per_sample < 1) throw std::invalid_argument("student: patches_per_sample must be >= 1");
    if (foreground_fraction < 0.0 || foreground_fraction > 1.0) {
        throw std::invalid_argument("student: foreground_fraction must be in [0,1]");
    }
    if (!(loss_band > 0.0)) throw std::invalid_argument("student: loss_band must be > 0");
    if (!(loss.temperature > 0.0)) throw std::invalid_argument("student: loss temperature must be > 0");
}

nlohmann::json StudentConfig::resume_key() const {
    nlohmann::json j = *this;
    j.erase("epochs");
    j.erase("preset");
    j.erase("param_budget");
    return j;
}

void to_json(nlohmann::json& j, const StudentConfig& c) {
    j = {{"preset", c.preset},
         {"in_channels", c.in_channels},
         {"depth", c.depth},
         {"base_filters", c.base_filters},
         {"param_budget", c.param_budget},
         {"patch_size", c.patch_size},
         {"epochs", c.epochs},
         {"learning_rate", c.learning_rate},
         {"batch_size", c.batch_size},
         {"patches_per_sample", c.patches_per_sample},
         {"foreground_fraction", c.foreground_fraction},
         {"loss_band", c.loss_band},
         {"loss",
          {{"offset", c.loss.offset}, {"temperature", c.loss.temperature}, {"hard_switch", c.loss.hard_switch}}},
         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, StudentConfig& c) {
    c = StudentConfig::from_preset(j.value("preset", std::string("default")));
    c.in_channels = j.value("in_channels", c.in_channels);
    c.depth = j.value("depth", c.depth);
    c.base_filters = j.value("base_filters", c.base_filters);
    c.param_budget = j.value("param_budget", c.param_budget);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.patches_per_sample = j.value("patches_per_sample", c.patches_per_sample);
    c.foreground_fraction = j.value("foreground_fraction", c.foreground_fraction);
    c.loss_band = j.value("loss_band", c.loss_band);
    if (j.contains("loss")) {
        const auto& l = j.at("loss");
        c.loss.offset = l.value("offset", c.loss.offset);
        c.loss.temperature = l.value("temperature", c.loss.temperature);
        c.loss.hard_switch = l.value("hard_switch", c.loss.hard_switch);
    }
    c.seed = j.value("seed", c.seed);
}

UNet3D build_student(const StudentConfig& config) {
    config.validate();
    const auto arch = config.architecture();
    const std::size_t n = unet_parameter_count(arch);
    if (config.param_budget > 0 && (n * 2 < config.param_budget || n > 2 * config.param_budget)) {
        throw std::invalid_argument("student: " + std::to_string(n) + " parameters is not within 2x of the budget " +
                                    std::to_string(config.param_budget));
    }
    return UNet3D(arch, mix64(config.seed ^ 0x73747564ULL));
}

std::string history_csv(const TrainingHistory& h) {
    std::ostringstream os;
    os.precision(8);
    os << "epoch,train_loss,train_dice,train_vol_acc,val_loss,val_dice,val_vol_acc\n";
    for (const auto& e : h.epochs)
        os << e.epoch << ',' << e.train_loss << ',' << e.train_dice << ',' << e.train_vol_acc << ',' << e.val_loss << ','
           << e.val_dice << ',' << e.val_vol_acc << '\n';
    return os.str();
}

void write_history_csv(const TrainingHistory& h, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write history: " + path.string());
    f << history_csv(h);
}

void AdamState::apply(std::span<float> params, std::span<const float> grads, double lr) {
    if (m.size() != params.size()) {
        m.assign(params.size(), 0.0f);
        v.assign(params.size(), 0.0f);
        step = 0;
    }
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    const auto b1 = static_cast<float>(beta1), b2 = static_cast<float>(beta2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const float g = grads[i];
        m[i] = b1 * m[i] + (1.0f - b1) * g;
        v[i] = b2 * v[i] + (1.0f - b2) * g * g;
        const double mh = m[i] / c1;
        const double vh = v[i] / c2;
        params[i] -= static_cast<float>(lr * mh / (std::sqrt(vh) + eps));
    }
}

namespace {

constexpr char kMagic[8] = {'H', 'A', 'S', 'A', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

nlohmann::json history_json(const TrainingHistory& h) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : h.epochs)
        rows.push_back({e.epoch, e.train_loss, e.train_dice, e.train_vol_acc, e.val_loss, e.val_dice, e.val_vol_acc});
    return {{"epochs", rows}, {"best_epoch", h.best_epoch}, {"best_val_dice", h.best_val_dice}};
}

TrainingHistory history_from_json(const nlohmann::json& j) {
    TrainingHistory h;
    for (const auto& r : j.at("epochs")) {
        h.epochs.push_back({r.at(0).get<int>(), r.at(1).get<double>(), r.at(2).get<double>(), r.at(3).get<double>(),
                            r.at(4).get<double>(), r.at(5).get<double>(), r.at(6).get<double>()});
    }
    h.best_epoch = j.value("best_epoch", -1);
    h.best_val_dice = j.value("best_val_dice", 0.0);
    return h;
}

void write_floats(std::ofstream& f, const std::vector<float>& v) {
    f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

std::vector<float> read_floats(std::ifstream& f, std::size_t n, const std::filesystem::path& path) {
    std::vector<float> v(n);
    f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!f) throw std::runtime_error("truncated checkpoint: " + path.string());
    return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    nlohmann::json meta = {{"config", ck.config},
                           {"epochs_done", ck.epochs_done},
                           {"history", history_json(ck.history)},
                           {"parameters", ck.weights.size()},
                           {"has_last", !ck.last_weights.empty()},
                           {"has_adam", ck.adam.has_value()},
                           {"tag", ck.tag}};
    if (ck.adam) {
        meta["adam"] = {{"step", ck.adam->step},
                        {"beta1", ck.adam->beta1},
                        {"beta2", ck.adam->beta2},
                        {"eps", ck.adam->eps}};
    }
    const std::string text = meta.dump();
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write checkpoint: " + path.string());
        f.write(kMagic, sizeof kMagic);
        f.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
        const uint64_t len = text.size();
        f.write(reinterpret_cast<const char*>(&len), sizeof len);
        f.write(text.data(), static_cast<std::streamsize>(text.size()));
        write_floats(f, ck.weights);
        if (!ck.last_weights.empty()) write_floats(f, ck.last_weights);
        if (ck.adam) {
            write_floats(f, ck.adam->m);
            write_floats(f, ck.adam->v);
        }
        if (!f) throw std::runtime_error("failed writing checkpoint: " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint not found: " + path.string());
    char magic[8];
    uint32_t version = 0;
    uint64_t len = 0;
    f.read(magic, sizeof magic);
    f.read(reinterpret_cast<char*>(&version), sizeof version);
    f.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!f || std::memcmp(magic, kMagic, sizeof magic) != 0) throw std::runtime_error("not a checkpoint: " + path.string());
    if (version != kVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) + ": " + path.string());
    }
    if (len > (std::size_t{1} << 30)) throw std::runtime_error("corrupt checkpoint header: " + path.string());
    std::string text(len, '\0');
    f.read(text.data(), static_cast<std::streamsize>(len));
    if (!f) throw std::runtime_error("truncated checkpoint: " + path.string());
    const auto meta = nlohmann::json::parse(text);

    Checkpoint ck;
    ck.config = meta.at("config").get<StudentConfig>();
    ck.epochs_done = meta.value("epochs_done", 0);
    ck.tag = meta.value("tag", std::string());
    ck.history = history_from_json(meta.at("history"));
    const auto n = meta.at("parameters").get<std::size_t>();
    if (n != unet_parameter_count(ck.config.architecture())) {
        throw std::runtime_error("checkpoint parameter count does not match its config: " + path.string());
    }
    ck.weights = read_floats(f, n, path);
    if (meta.value("has_last", false)) ck.last_weights = read_floats(f, n, path);
    if (meta.value("has_adam", false)) {
        AdamState a;
        const auto& am = meta.at("adam");
        a.step = am.at("step").get<long>();
        a.beta1 = am.at("beta1").get<double>();
        a.beta2 = am.at("beta2").get<double>();
        a.eps = am.at("eps").get<double>();
        a.m = read_floats(f, n, path);
        a.v = read_floats(f, n, path);
        ck.adam = std::move(a);
    }
    return ck;
}

UNet3D restore_student(const Checkpoint& ck) {
    UNet3D net(ck.config.architecture(), 0);
    if (ck.weights.size() != net.parameter_count()) throw std::runtime_error("checkpoint weights do not fit the network");
    std::copy(ck.weights.begin(), ck.weights.end(), net.parameters().begin());
    return net;
}

namespace {

// Saturated sigmoids push gradients into the subnormal range, where x86
// arithmetic is two orders of magnitude slower; flush them to zero instead.
class FlushDenormals {
public:
    FlushDenormals() {
#if defined(__SSE__)
        saved_ = _mm_getcsr();
        _mm_setcsr(saved_ | 0x8040);  // FTZ | DAZ
#endif
    }
    ~FlushDenormals() {
#if defined(__SSE__)
        _mm_setcsr(saved_);
#endif
    }
    FlushDenormals(const FlushDenormals&) = delete;
    FlushDenormals& operator=(const FlushDenormals&) = delete;

private:
    unsigned saved_ = 0;
};

struct PreparedSample {
    const TrainingSample* sample;
    Volume3D distance;
    std::vector<std::size_t> foreground;
};

float sigmoid(float x) { return static_cast<float>(logistic(static_cast<double>(x))); }

/// Crop of `size` voxels per axis starting at origin; outside the volume is zero.
void crop(const TrainingSample& s, const Volume3D& distance, std::array<int, 3> origin, std::array<int, 3> size,
          Tensor& input, std::vector<uint8_t>& label, std::vector<float>& dist) {
    const auto& sh = s.label.shape();
    const int nc = static_cast<int>(s.channels.size());
    input = Tensor(nc, size[2], size[1], size[0]);
    const std::size_t n = static_cast<std::size_t>(size[0]) * size[1] * size[2];
    label.assign(n, 0);
    // outside the volume counts as far background
    dist.assign(n, -1.0f);
    std::size_t i = 0;
    for (int z = 0; z < size[2]; ++z)
        for (int y = 0; y < size[1]; ++y)
            for (int x = 0; x < size[0]; ++x, ++i) {
                const int gx = origin[0] + x, gy = origin[1] + y, gz = origin[2] + z;
                if (gx < 0 || gy < 0 || gz < 0 || gx >= sh.nx || gy >= sh.ny || gz >= sh.nz) continue;
                const std::size_t gi = s.label.index(gx, gy, gz);
                for (int c = 0; c < nc; ++c) input.channel(c)[i] = s.channels[static_cast<std::size_t>(c)][gi];
                label[i] = s.label[gi];
                dist[i] = distance[gi];
            }
}

int padded(int n, int m) { return (n + m - 1) / m * m; }

void check_channels(const TrainingSample& s, int in_channels) {
    if (static_cast<int>(s.channels.size()) != in_channels) {
        throw std::invalid_argument("sample " + s.subject_id + " has " + std::to_string(s.channels.size()) +
                                    " channels, the student expects " + std::to_string(in_channels));
    }
    for (const auto& c : s.channels)
        if (c.shape() != s.label.shape()) throw std::invalid_argument("sample " + s.subject_id + ": channel/label shape mismatch");
}

}  // namespace

Prediction predict(UNet3D& model, const std::vector<Volume3D>& channels, int patch, int overlap) {
    const FlushDenormals ftz;
    const auto& arch = model.architecture();
    if (static_cast<int>(channels.size()) != arch.in_channels) {
        throw std::invalid_argument("predict: got " + std::to_string(channels.size()) + " channels, model expects " +
                                    std::to_string(arch.in_channels));
    }
    const Shape3 sh = channels.front().shape();
    for (const auto& c : channels)
        if (c.shape() != sh) throw std::invalid_argument("predict: channels differ in shape");
    const int m = 1 << arch.depth;
    if (patch > 0 && patch % m != 0) {
        throw std::invalid_argument("predict: patch must be a multiple of " + std::to_string(m));
    }
    const std::array<int, 3> dims{padded(sh.nx, m), padded(sh.ny, m), padded(sh.nz, m)};
    std::array<int, 3> win{};
    std::array<std::vector<int>, 3> starts;
    for (std::size_t a = 0; a < 3; ++a) {
        win[a] = patch > 0 ? std::min(patch, dims[a]) : dims[a];
        const int stride = std::max(1, win[a] - std::max(0, overlap));
        for (int s = 0;; s += stride) {
            if (s + win[a] >= dims[a]) {
                starts[a].push_back(dims[a] - win[a]);
                break;
            }
            starts[a].push_back(s);
        }
    }

    std::vector<double> sum(sh.voxels(), 0.0);
    std::vector<uint16_t> count(sh.voxels(), 0);
    TrainingSample view;
    view.channels = channels;
    view.label = LabelVolume(sh, channels.front().spacing());
    const Volume3D no_distance(sh, channels.front().spacing(), 0.0f);
    Tensor input;
    std::vector<uint8_t> lab;
    std::vector<float> dist;
    for (int z0 : starts[2])
        for (int y0 : starts[1])
            for (int x0 : starts[0]) {
                crop(view, no_distance, {x0, y0, z0}, win, input, lab, dist);
                const Tensor logits = model.forward(input);
                std::size_t i = 0;
                for (int z = 0; z < win[2]; ++z)
                    for (int y = 0; y < win[1]; ++y)
                        for (int x = 0; x < win[0]; ++x, ++i) {
                            const int gx = x0 + x, gy = y0 + y, gz = z0 + z;
                            if (gx >= sh.nx || gy >= sh.ny || gz >= sh.nz) continue;
                            const std::size_t gi = view.label.index(gx, gy, gz);
                            sum[gi] += sigmoid(logits.data[i]);
                            ++count[gi];
                        }
            }

    Prediction out{Volume3D(sh, channels.front().spacing()), LabelVolume(sh, channels.front().spacing())};
    out.prob.set_orientation(channels.front().orientation());
    out.mask.set_orientation(channels.front().orientation());
    for (std::size_t i = 0; i < sum.size(); ++i) {
        out.prob[i] = static_cast<float>(sum[i] / count[i]);
        out.mask[i] = out.prob[i] >= 0.5f ? 1 : 0;
    }
    return out;
}

TrainingHistory train(UNet3D& model, const std::vector<TrainingSample>& train_set,
                      const std::vector<TrainingSample>& val_set, const StudentConfig& config,
                      const TrainOptions& options) {
    config.validate();
    const FlushDenormals ftz;
    if (train_set.empty()) throw std::invalid_argument("train: the training split is empty");
    if (model.architecture().in_channels != config.in_channels || model.architecture().depth != config.depth ||
        model.architecture().base_filters != config.base_filters) {
        throw std::invalid_argument("train: model architecture does not match the config");
    }
    for (const auto& s : train_set) check_channels(s, config.in_channels);
    for (const auto& s : val_set) check_channels(s, config.in_channels);

    std::vector<PreparedSample> prepared;
    prepared.reserve(train_set.size());
    for (const auto& s : train_set) {
        PreparedSample p{&s, normalized_label_distance(s.label, config.loss_band), {}};
        for (std::size_t i = 0; i < s.label.size(); ++i)
            if (s.label[i]) p.foreground.push_back(i);
        prepared.push_back(std::move(p));
    }
    std::vector<Volume3D> val_distance;
    for (const auto& s : val_set) val_distance.push_back(normalized_label_distance(s.label, config.loss_band));

    TrainingHistory history;
    AdamState adam;
    int first_epoch = 0;
    std::vector<float> best(model.parameters().begin(), model.parameters().end());
    if (options.resume_from) {
        const Checkpoint ck = load_checkpoint(*options.resume_from);
        if (ck.config.resume_key() != config.resume_key()) {
            throw std::runtime_error("cannot resume from " + options.resume_from->string() +
                                     ": checkpoint config differs (checkpoint " + ck.config.resume_key().dump() +
                                     ", requested " + config.resume_key().dump() + ")");
        }
        if (ck.last_weights.empty() || !ck.adam) {
            throw std::runtime_error("cannot resume from " + options.resume_from->string() + ": no optimizer state");
        }
        std::copy(ck.last_weights.begin(), ck.last_weights.end(), model.parameters().begin());
        best = ck.weights;
        adam = *ck.adam;
        history = ck.history;
        first_epoch = ck.epochs_done;
    }

    const int m = 1 << config.depth;
    std::vector<float> prob;
    std::vector<uint8_t> label;
    std::vector<float> dist;
    Tensor input;
    for (int epoch = first_epoch; epoch < config.epochs; ++epoch) {
        Rng rng = make_rng(config.seed, {0x747261696eULL, static_cast<uint64_t>(epoch)});
        std::vector<std::size_t> order;
        for (int r = 0; r < config.patches_per_sample; ++r)
            for (std::size_t i = 0; i < prepared.size(); ++i) order.push_back(i);
        std::shuffle(order.begin(), order.end(), rng);

        EpochStats stats;
        stats.epoch = epoch + 1;
        std::size_t vol_acc_n = 0;
        int in_batch = 0;
        model.zero_grad();
        for (std::size_t step = 0; step < order.size(); ++step) {
            const auto& p = prepared[order[step]];
            const auto& sh = p.sample->label.shape();
            const std::array<int, 3> dims{sh.nx, sh.ny, sh.nz};
            std::array<int, 3> size{}, origin{};
            const bool centred = !p.foreground.empty() && uniform_real(rng, 0.0, 1.0) < config.foreground_fraction;
            std::size_t centre = 0;
            if (centred) centre = p.foreground[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(p.foreground.size()) - 1))];
            const std::array<int, 3> c{static_cast<int>(centre % static_cast<std::size_t>(sh.nx)),
                                       static_cast<int>((centre / static_cast<std::size_t>(sh.nx)) % static_cast<std::size_t>(sh.ny)),
                                       static_cast<int>(centre / sh.slice_voxels())};
            for (std::size_t a = 0; a < 3; ++a) {
                size[a] = std::min(config.patch_size, padded(dims[a], m));
                const int hi = std::max(0, dims[a] - size[a]);
                origin[a] = centred ? std::clamp(c[a] - size[a] / 2, 0, hi) : uniform_int(rng, 0, hi);
            }
            crop(*p.sample, p.distance, origin, size, input, label, dist);
            const Tensor logits = model.forward(input);
            prob.resize(logits.data.size());
            for (std::size_t i = 0; i < prob.size(); ++i) prob[i] = sigmoid(logits.data[i]);
            const auto eval = evaluate_dynamic_loss(prob, label, dist, config.loss, true);
            if (!std::isfinite(eval.total)) {
                throw std::runtime_error("training diverged: non-finite loss at epoch " + std::to_string(epoch + 1) +
                                         ", step " + std::to_string(step) + " (sample " + p.sample->subject_id +
                                         ", dice term " + std::to_string(eval.dice) + ", boundary term " +
                                         std::to_string(eval.boundary) + ")");
            }
            Tensor d_logits(1, logits.d, logits.h, logits.w);
            for (std::size_t i = 0; i < prob.size(); ++i)
                d_logits.data[i] = static_cast<float>(eval.grad[i] * prob[i] * (1.0 - prob[i]) / config.batch_size);
            model.backward(d_logits);
            if (++in_batch == config.batch_size || step + 1 == order.size()) {
                adam.apply(model.parameters(), model.gradients(), config.learning_rate);
                model.zero_grad();
                in_batch = 0;
            }

            std::vector<uint8_t> hard(prob.size());
            std::size_t n_pred = 0, n_true = 0;
            for (std::size_t i = 0; i < prob.size(); ++i) {
                hard[i] = prob[i] >= 0.5f;
                n_pred += hard[i];
                n_true += label[i];
            }
            stats.train_loss += eval.total;
            stats.train_dice += dice(std::span<const uint8_t>(hard), std::span<const uint8_t>(label));
            if (n_true > 0) {
                stats.train_vol_acc += volume_accuracy(n_pred, n_true);
                ++vol_acc_n;
            }
        }
        const double n_steps = static_cast<double>(order.size());
        stats.train_loss /= n_steps;
        stats.train_dice /= n_steps;
        stats.train_vol_acc = vol_acc_n ? stats.train_vol_acc / static_cast<double>(vol_acc_n) : 0.0;

        if (!val_set.empty()) {
            std::size_t va_n = 0;
            for (std::size_t k = 0; k < val_set.size(); ++k) {
                const auto pred = predict(model, val_set[k].channels);
                const auto ev = evaluate_dynamic_loss(pred.prob.values(), val_set[k].label.values(),
                                                      val_distance[k].values(), config.loss, false);
                stats.val_loss += ev.total;
                stats.val_dice += dice(pred.mask, val_set[k].label);
                if (val_set[k].label.foreground_count() > 0) {
                    stats.val_vol_acc += volume_accuracy(pred.mask, val_set[k].label);
                    ++va_n;
                }
            }
            const double nv = static_cast<double>(val_set.size());
            stats.val_loss /= nv;
            stats.val_dice /= nv;
            stats.val_vol_acc = va_n ? stats.val_vol_acc / static_cast<double>(va_n) : 0.0;
        }
        history.epochs.push_back(stats);
        const bool improved = val_set.empty() || history.best_epoch < 0 || stats.val_dice > history.best_val_dice;
        if (improved) {
            history.best_epoch = stats.epoch;
            history.best_val_dice = stats.val_dice;
            best.assign(model.parameters().begin(), model.parameters().end());
        }
        if (options.on_epoch) options.on_epoch(stats);
        if (options.checkpoint_path) {
            Checkpoint ck;
            ck.config = config;
            ck.weights = best;
            ck.last_weights.assign(model.parameters().begin(), model.parameters().end());
            ck.adam = adam;
            ck.history = history;
            ck.epochs_done = epoch + 1;
            ck.tag = options.tag;
            save_checkpoint(ck, *options.checkpoint_path);
        }
        if (options.history_path) write_history_csv(history, *options.history_path);
    }
    std::copy(best.begin(), best.end(), model.parameters().begin());
    return history;
}

}  // namespace hasa
