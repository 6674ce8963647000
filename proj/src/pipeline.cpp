#include "hasa/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

#include "hasa/rng.hpp"

namespace hasa {

std::string to_string(ChannelPolicy p) {
    switch (p) {
        case ChannelPolicy::guess_sdm: return "guess_sdm";
        case ChannelPolicy::guess_raw: return "guess_raw";
        case ChannelPolicy::t2: return "t2";
        case ChannelPolicy::blank: return "blank";
        case ChannelPolicy::t1_only: return "t1_only";
    }
    return "unknown";
}

ChannelPolicy channel_policy_from_string(const std::string& s) {
    for (auto p : {ChannelPolicy::guess_sdm, ChannelPolicy::guess_raw, ChannelPolicy::t2, ChannelPolicy::blank,
                   ChannelPolicy::t1_only}) {
        if (to_string(p) == s) return p;
    }
    throw std::invalid_argument("unknown channel policy: " + s);
}

int channel_count(ChannelPolicy p) { return p == ChannelPolicy::t1_only ? 1 : 2; }

GuessVolumes build_guess_volume(const Volume3D& t1, const LabelVolume& prior, const GuessBackend& backend,
                                const JitterSpec& jitter, const SdmSpec& sdm, const GuessFilters& filters,
                                uint64_t stream_id) {
    if (t1.shape() != prior.shape()) {
        throw std::invalid_argument("build_guess_volume: t1 " + to_string(t1.shape()) + " and prior " +
                                    to_string(prior.shape()) + " differ in shape");
    }
    if (!prior.is_binary()) throw std::invalid_argument("build_guess_volume: prior is not binary");
    const auto& shape = t1.shape();

    GuessVolumes out;
    if (is_prompted(backend.kind())) {
        out.prompts = extract_prompts(prior, jitter, stream_id);
    } else {
        out.prompts.assign(static_cast<std::size_t>(shape.nz), std::nullopt);
    }

    std::vector<Mask2D> slices;
    slices.reserve(static_cast<std::size_t>(shape.nz));
    for (int z = 0; z < shape.nz; ++z) {
        const auto& prompt = out.prompts[static_cast<std::size_t>(z)];
        BackendOutput result = backend.generate(extract_slice(t1, z), prompt, z);
        Mask2D mask;
        if (auto* cands = std::get_if<std::vector<GuessCandidate>>(&result)) {
            mask = cands->empty() ? Mask2D(shape.nx, shape.ny, 0) : select_candidate(*cands).mask;
        } else {
            mask = attention_to_guess(std::get<AttentionMap>(result), filters.attention_threshold);
        }
        if (filters.contour_filter && prompt) mask = largest_contour_filter(mask, prompt->box, filters.eligibility);
        slices.push_back(std::move(mask));
    }
    out.raw = stack_slices(slices, t1.spacing());
    out.raw.set_orientation(t1.orientation());
    out.sdm = sdm_volume(out.raw, sdm);
    out.sdm.set_orientation(t1.orientation());
    return out;
}

TrainingSample assemble_sample(const Volume3D& t1, const Volume3D* second, const LabelVolume& label,
                               ChannelPolicy policy, std::string subject_id) {
    if (t1.shape() != label.shape()) throw std::invalid_argument("assemble_sample: t1 and label differ in shape");
    TrainingSample s;
    s.subject_id = std::move(subject_id);
    s.label = label;
    s.channels.push_back(normalize_intensity(t1));
    switch (policy) {
        case ChannelPolicy::t1_only: break;
        case ChannelPolicy::blank: s.channels.emplace_back(t1.shape(), t1.spacing(), 0.0f); break;
        case ChannelPolicy::t2:
        case ChannelPolicy::guess_raw:
        case ChannelPolicy::guess_sdm: {
            if (!second) {
                throw std::invalid_argument("assemble_sample: policy " + to_string(policy) +
                                            " needs a second volume");
            }
            if (second->shape() != t1.shape()) {
                throw std::invalid_argument("assemble_sample: second channel differs in shape");
            }
            if (policy == ChannelPolicy::t2) {
                s.channels.push_back(normalize_intensity(*second));
            } else {
                const auto [lo, hi] = second->intensity_range();
                if (lo < 0.0f || hi > 1.0f) {
                    throw std::invalid_argument("assemble_sample: guess channel outside [0,1]");
                }
                s.channels.push_back(*second);
            }
            break;
        }
    }
    return s;
}

void AugmentSpec::validate() const {
    if (copies < 1) throw std::invalid_argument("augment: copies must be >= 1");
    if (!(gamma_range[0] > 0.0) || gamma_range[0] > gamma_range[1]) {
        throw std::invalid_argument("augment: gamma_range must be positive and ordered");
    }
    if (scale_range[0] <= 0.0 || scale_range[0] > scale_range[1]) {
        throw std::invalid_argument("augment: scale_range must be positive and ordered");
    }
    if (noise_std_max < 0.0 || rotate_max_deg < 0.0 || translate_max < 0.0) {
        throw std::invalid_argument("augment: noise, rotation and translation limits must be >= 0");
    }
}

void to_json(nlohmann::json& j, const AugmentSpec& s) {
    j = {{"copies", s.copies},
         {"gamma_range", s.gamma_range},
         {"noise_std_max", s.noise_std_max},
         {"rotate_max_deg", s.rotate_max_deg},
         {"scale_range", s.scale_range},
         {"translate_max", s.translate_max},
         {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, AugmentSpec& s) {
    s = AugmentSpec{};
    s.copies = j.value("copies", s.copies);
    s.gamma_range = j.value("gamma_range", s.gamma_range);
    s.noise_std_max = j.value("noise_std_max", s.noise_std_max);
    s.rotate_max_deg = j.value("rotate_max_deg", s.rotate_max_deg);
    s.scale_range = j.value("scale_range", s.scale_range);
    s.translate_max = j.value("translate_max", s.translate_max);
    s.seed = j.value("seed", s.seed);
    s.validate();
}

std::array<double, 3> AffineMap::source(double x, double y, double z) const {
    const double p[3] = {x - center[0], y - center[1], z - center[2]};
    std::array<double, 3> s{};
    for (int r = 0; r < 3; ++r) {
        s[static_cast<std::size_t>(r)] = linear[static_cast<std::size_t>(3 * r)] * p[0] +
                                         linear[static_cast<std::size_t>(3 * r + 1)] * p[1] +
                                         linear[static_cast<std::size_t>(3 * r + 2)] * p[2] +
                                         center[static_cast<std::size_t>(r)] + shift[static_cast<std::size_t>(r)];
    }
    return s;
}

namespace {

using Mat3 = std::array<double, 9>;

Mat3 matmul(const Mat3& a, const Mat3& b) {
    Mat3 c{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += a[static_cast<std::size_t>(3 * i + k)] * b[static_cast<std::size_t>(3 * k + j)];
            c[static_cast<std::size_t>(3 * i + j)] = s;
        }
    return c;
}

Mat3 rotation(int axis, double rad) {
    const double c = std::cos(rad), s = std::sin(rad);
    switch (axis) {
        case 0: return {1, 0, 0, 0, c, -s, 0, s, c};
        case 1: return {c, 0, s, 0, 1, 0, -s, 0, c};
        default: return {c, -s, 0, s, c, 0, 0, 0, 1};
    }
}

float sample_trilinear(const Volume3D& v, double x, double y, double z) {
    const auto& s = v.shape();
    x = std::clamp(x, 0.0, static_cast<double>(s.nx - 1));
    y = std::clamp(y, 0.0, static_cast<double>(s.ny - 1));
    z = std::clamp(z, 0.0, static_cast<double>(s.nz - 1));
    const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y)),
              z0 = static_cast<int>(std::floor(z));
    const int x1 = std::min(x0 + 1, s.nx - 1), y1 = std::min(y0 + 1, s.ny - 1), z1 = std::min(z0 + 1, s.nz - 1);
    const double fx = x - x0, fy = y - y0, fz = z - z0;
    auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
    const double c00 = lerp(v.at(x0, y0, z0), v.at(x1, y0, z0), fx);
    const double c10 = lerp(v.at(x0, y1, z0), v.at(x1, y1, z0), fx);
    const double c01 = lerp(v.at(x0, y0, z1), v.at(x1, y0, z1), fx);
    const double c11 = lerp(v.at(x0, y1, z1), v.at(x1, y1, z1), fx);
    return static_cast<float>(lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz));
}

uint8_t sample_nearest(const LabelVolume& v, double x, double y, double z) {
    const auto& s = v.shape();
    const int xi = std::clamp(static_cast<int>(std::lround(x)), 0, s.nx - 1);
    const int yi = std::clamp(static_cast<int>(std::lround(y)), 0, s.ny - 1);
    const int zi = std::clamp(static_cast<int>(std::lround(z)), 0, s.nz - 1);
    return v.at(xi, yi, zi);
}

}  // namespace

AugmentParams draw_augment_params(const AugmentSpec& spec, const Shape3& shape, const std::string& subject_id,
                                  int copy) {
    spec.validate();
    Rng rng = make_rng(spec.seed, {hash_string(subject_id), static_cast<uint64_t>(copy)});
    AugmentParams p;
    const double max_rad = spec.rotate_max_deg * std::numbers::pi / 180.0;
    Mat3 m{1, 0, 0, 0, 1, 0, 0, 0, 1};
    for (int axis = 0; axis < 3; ++axis) m = matmul(m, rotation(axis, uniform_real(rng, -max_rad, max_rad)));
    Mat3 scale{};
    for (int a = 0; a < 3; ++a) scale[static_cast<std::size_t>(4 * a)] = uniform_real(rng, spec.scale_range[0], spec.scale_range[1]);
    p.affine.linear = matmul(m, scale);
    for (auto& t : p.affine.shift) t = uniform_real(rng, -spec.translate_max, spec.translate_max);
    p.affine.center = {(shape.nx - 1) / 2.0, (shape.ny - 1) / 2.0, (shape.nz - 1) / 2.0};
    p.gamma = uniform_real(rng, spec.gamma_range[0], spec.gamma_range[1]);
    p.noise_std = uniform_real(rng, 0.0, spec.noise_std_max);
    p.noise_seed = rng();
    return p;
}

TrainingSample apply_augment(const TrainingSample& sample, const AugmentParams& params, const std::string& tag) {
    const auto& shape = sample.label.shape();
    for (const auto& c : sample.channels) {
        if (c.shape() != shape) throw std::invalid_argument("augment: channel and label differ in shape");
    }
    TrainingSample out;
    out.subject_id = sample.subject_id;
    out.augmentation_tag = tag;
    out.label = LabelVolume(shape, sample.label.spacing());
    for (const auto& c : sample.channels) out.channels.emplace_back(shape, c.spacing());

    for (int z = 0; z < shape.nz; ++z)
        for (int y = 0; y < shape.ny; ++y)
            for (int x = 0; x < shape.nx; ++x) {
                const auto src = params.affine.source(x, y, z);
                const std::size_t i = out.label.index(x, y, z);
                out.label[i] = sample_nearest(sample.label, src[0], src[1], src[2]);
                for (std::size_t c = 0; c < sample.channels.size(); ++c)
                    out.channels[c][i] = sample_trilinear(sample.channels[c], src[0], src[1], src[2]);
            }

    auto& c0 = out.channels.front().values();
    Rng rng(params.noise_seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (auto& v : c0) {
        double x = std::clamp(static_cast<double>(v), 0.0, 1.0);
        if (params.gamma != 1.0) x = std::pow(x, params.gamma);
        if (params.noise_std > 0.0) x += params.noise_std * noise(rng);
        v = static_cast<float>(std::clamp(x, 0.0, 1.0));
    }
    return out;
}

TrainingSample augment(const TrainingSample& sample, const AugmentSpec& spec, int copy) {
    const auto params = draw_augment_params(spec, sample.label.shape(), sample.subject_id, copy);
    return apply_augment(sample, params, "aug" + std::to_string(copy));
}

std::vector<TrainingSample> expand_augmented(const std::vector<TrainingSample>& samples, const AugmentSpec& spec) {
    spec.validate();
    std::vector<TrainingSample> out;
    out.reserve(samples.size() * static_cast<std::size_t>(spec.copies));
    for (const auto& s : samples) {
        out.push_back(s);
        for (int c = 1; c < spec.copies; ++c) out.push_back(augment(s, spec, c));
    }
    return out;
}

const SubjectFiles& Manifest::subject(const std::string& id) const {
    for (const auto& s : subjects)
        if (s.id == id) return s;
    throw std::out_of_range("manifest has no subject " + id);
}

Manifest build_manifest(std::vector<SubjectFiles> subjects, std::array<double, 3> fractions, uint64_t seed,
                        const AugmentSpec& augment, std::vector<ChannelPolicy> policies) {
    if (subjects.empty()) throw std::invalid_argument("build_manifest: empty subject list");
    for (double f : fractions)
        if (f < 0.0) throw std::invalid_argument("build_manifest: negative split fraction");
    if (std::fabs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
        throw std::invalid_argument("build_manifest: split fractions must sum to 1");
    }
    Manifest m;
    m.fractions = fractions;
    m.seed = seed;
    m.augment = augment;
    m.policies = std::move(policies);
    m.subjects = std::move(subjects);

    std::vector<std::string> ids;
    for (const auto& s : m.subjects) ids.push_back(s.id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
        throw std::invalid_argument("build_manifest: duplicate subject id");
    }
    Rng rng = make_rng(seed, {0x73706c6974ULL});
    std::shuffle(ids.begin(), ids.end(), rng);

    const auto n = static_cast<long>(ids.size());
    const long n_train = std::min(n, std::lround(fractions[0] * static_cast<double>(n)));
    const long n_val = std::min(n - n_train, std::lround(fractions[1] * static_cast<double>(n)));
    m.train.assign(ids.begin(), ids.begin() + n_train);
    m.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
    m.test.assign(ids.begin() + n_train + n_val, ids.end());
    return m;
}

nlohmann::json to_json(const Manifest& m) {
    nlohmann::json subjects = nlohmann::json::array();
    for (const auto& s : m.subjects) {
        subjects.push_back({{"id", s.id},
                            {"t1", s.t1},
                            {"t2", s.t2},
                            {"label", s.label},
                            {"guess", s.guess},
                            {"guess_sdm", s.guess_sdm}});
    }
    nlohmann::json policies = nlohmann::json::array();
    for (auto p : m.policies) policies.push_back(to_string(p));
    return {{"subjects", subjects}, {"train", m.train},         {"val", m.val},   {"test", m.test},
            {"fractions", m.fractions}, {"policies", policies}, {"augment", m.augment}, {"seed", m.seed}};
}

Manifest manifest_from_json(const nlohmann::json& j) {
    Manifest m;
    for (const auto& s : j.at("subjects")) {
        m.subjects.push_back({s.at("id").get<std::string>(), s.value("t1", ""), s.value("t2", ""),
                              s.value("label", ""), s.value("guess", ""), s.value("guess_sdm", "")});
    }
    m.train = j.value("train", std::vector<std::string>{});
    m.val = j.value("val", std::vector<std::string>{});
    m.test = j.value("test", std::vector<std::string>{});
    m.fractions = j.value("fractions", m.fractions);
    for (const auto& p : j.value("policies", nlohmann::json::array())) {
        m.policies.push_back(channel_policy_from_string(p.get<std::string>()));
    }
    if (j.contains("augment")) m.augment = j.at("augment").get<AugmentSpec>();
    m.seed = j.value("seed", m.seed);
    return m;
}

void save_manifest(const Manifest& m, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write manifest: " + path.string());
    f << to_json(m).dump(2) << "\n";
    if (!f) throw std::runtime_error("failed writing manifest: " + path.string());
}

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read manifest: " + path.string());
    try {
        return manifest_from_json(nlohmann::json::parse(f));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed manifest " + path.string() + ": " + e.what());
    }
}

}  // namespace hasa
