#include "hasa/backends.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "hasa/morphology.hpp"
#include "hasa/png_io.hpp"

namespace hasa {

std::string to_string(BackendKind k) {
    switch (k) {
        case BackendKind::oracle: return "oracle";
        case BackendKind::file: return "file";
        case BackendKind::attention: return "attention";
    }
    return "unknown";
}

BackendKind backend_kind_from_string(const std::string& s) {
    if (s == "oracle") return BackendKind::oracle;
    if (s == "file") return BackendKind::file;
    if (s == "attention") return BackendKind::attention;
    throw std::invalid_argument("unknown backend kind '" + s + "'");
}

bool is_prompted(BackendKind k) { return k != BackendKind::attention; }

void CorruptionSpec::validate() const {
    if (dilation_radius < 0.0) throw std::invalid_argument("CorruptionSpec: dilation_radius must be >= 0");
    if (blob_noise_count < 0) throw std::invalid_argument("CorruptionSpec: blob_noise_count must be >= 0");
    if (blob_radius < 0.0) throw std::invalid_argument("CorruptionSpec: blob_radius must be >= 0");
    if (drop_slice_prob < 0.0 || drop_slice_prob > 1.0) {
        throw std::invalid_argument("CorruptionSpec: drop_slice_prob must be in [0,1]");
    }
}

void to_json(nlohmann::json& j, const CorruptionSpec& s) {
    j = nlohmann::json{{"dilation_radius", s.dilation_radius},
                       {"blob_noise_count", s.blob_noise_count},
                       {"blob_radius", s.blob_radius},
                       {"drop_slice_prob", s.drop_slice_prob},
                       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, CorruptionSpec& s) {
    s = CorruptionSpec{};
    s.dilation_radius = j.value("dilation_radius", s.dilation_radius);
    s.blob_noise_count = j.value("blob_noise_count", s.blob_noise_count);
    s.blob_radius = j.value("blob_radius", s.blob_radius);
    s.drop_slice_prob = j.value("drop_slice_prob", s.drop_slice_prob);
    s.seed = j.value("seed", s.seed);
    s.validate();
}

Mask2D corrupt_mask(const Mask2D& truth, const CorruptionSpec& spec, Rng& rng) {
    require_binary(truth, "corrupt_mask");
    spec.validate();
    Mask2D out = dilate_disk(truth, spec.dilation_radius);
    const double r2 = spec.blob_radius * spec.blob_radius;
    const int reach = static_cast<int>(std::floor(spec.blob_radius));
    for (int b = 0; b < spec.blob_noise_count; ++b) {
        const int cx = uniform_int(rng, 0, truth.nx() - 1);
        const int cy = uniform_int(rng, 0, truth.ny() - 1);
        for (int dy = -reach; dy <= reach; ++dy)
            for (int dx = -reach; dx <= reach; ++dx)
                if (dx * dx + dy * dy <= r2 && out.in_bounds(cx + dx, cy + dy)) out.at(cx + dx, cy + dy) = 1;
    }
    if (spec.drop_slice_prob > 0.0 && std::bernoulli_distribution(spec.drop_slice_prob)(rng)) {
        std::fill(out.values().begin(), out.values().end(), uint8_t{0});
    }
    return out;
}

const GuessCandidate& select_candidate(std::span<const GuessCandidate> candidates) {
    if (candidates.empty()) throw std::invalid_argument("select_candidate: empty candidate list");
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i)
        if (candidates[i].confidence > candidates[best].confidence) best = i;
    return candidates[best];
}

Mask2D largest_contour_filter(const Mask2D& mask, const BoundingBox& box, BoxEligibility rule) {
    const auto cc = label_components(mask);
    if (cc.components.empty()) return mask;

    auto eligible = [&](const Component& c) {
        if (rule == BoxEligibility::centroid) return box.contains(c.centroid_x, c.centroid_y);
        if (c.x_max < box.x_min || c.x_min > box.x_max || c.y_max < box.y_min || c.y_min > box.y_max) return false;
        for (int y = std::max(c.y_min, box.y_min); y <= std::min(c.y_max, box.y_max); ++y)
            for (int x = std::max(c.x_min, box.x_min); x <= std::min(c.x_max, box.x_max); ++x)
                if (cc.labels.at(x, y) == c.label) return true;
        return false;
    };
    const Component* keep = nullptr;
    for (const auto& c : cc.components)
        if (eligible(c) && (!keep || c.area > keep->area)) keep = &c;
    if (!keep) {
        for (const auto& c : cc.components)
            if (!keep || c.area > keep->area) keep = &c;
    }
    Mask2D out(mask.nx(), mask.ny(), uint8_t{0});
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = cc.labels[i] == keep->label ? 1 : 0;
    return out;
}

Mask2D attention_to_guess(const AttentionMap& map, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw std::invalid_argument("attention_to_guess: threshold must be in (0,1)");
    }
    Mask2D out(map.values.nx(), map.values.ny(), uint8_t{0});
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = map.values[i] >= threshold ? 1 : 0;
    return out;
}

namespace {

std::vector<GuessCandidate> empty_candidate(const Image2D& slice) {
    return {GuessCandidate{Mask2D(slice.nx(), slice.ny(), uint8_t{0}), 0.0}};
}

}  // namespace

OracleBackend::OracleBackend(LabelVolume truth, CorruptionSpec spec, uint64_t stream_id)
    : truth_(std::move(truth)), spec_(spec), stream_id_(stream_id) {
    spec_.validate();
    if (!truth_.is_binary()) throw std::invalid_argument("OracleBackend: truth is not binary");
}

BackendOutput OracleBackend::generate(const Image2D& slice, const std::optional<SlicePrompt>& prompt, int z) const {
    if (slice.nx() != truth_.shape().nx || slice.ny() != truth_.shape().ny) {
        throw std::invalid_argument("OracleBackend: slice shape does not match the truth volume");
    }
    if (!prompt) return empty_candidate(slice);
    Rng rng = make_rng(spec_.seed, {0x6f7261636c65ULL, stream_id_, static_cast<uint64_t>(z)});
    return std::vector<GuessCandidate>{GuessCandidate{corrupt_mask(extract_slice(truth_, z), spec_, rng), 1.0}};
}

std::filesystem::path candidate_path(const std::filesystem::path& root, const std::string& volume_id, int z, int j) {
    return root / volume_id / ("z" + std::to_string(z) + "_cand" + std::to_string(j) + ".png");
}

std::filesystem::path attention_path(const std::filesystem::path& root, const std::string& volume_id, int z) {
    return root / volume_id / ("z" + std::to_string(z) + "_attention.png");
}

FileBackend::FileBackend(std::filesystem::path root, std::string volume_id)
    : dir_(std::move(root)), volume_id_(std::move(volume_id)) {
    const auto conf = dir_ / volume_id_ / "confidences.json";
    std::ifstream in(conf);
    if (!in) throw std::runtime_error("mask-exchange: missing " + conf.string());
    const auto j = nlohmann::json::parse(in);
    for (const auto& [key, value] : j.items()) {
        auto scores = value.get<std::vector<double>>();
        for (double c : scores)
            if (!(c >= 0.0 && c <= 1.0)) throw std::runtime_error("mask-exchange: confidence outside [0,1] in " + conf.string());
        confidences_[std::stoi(key)] = std::move(scores);
    }
}

BackendOutput FileBackend::generate(const Image2D& slice, const std::optional<SlicePrompt>& prompt, int z) const {
    if (!prompt) return empty_candidate(slice);
    auto it = confidences_.find(z);
    if (it == confidences_.end() || it->second.empty()) {
        throw std::runtime_error("mask-exchange: no candidates for volume '" + volume_id_ + "' slice z" +
                                 std::to_string(z));
    }
    std::vector<GuessCandidate> out;
    for (std::size_t j = 0; j < it->second.size(); ++j) {
        const auto path = candidate_path(dir_, volume_id_, z, static_cast<int>(j));
        if (!std::filesystem::exists(path)) {
            throw std::runtime_error("mask-exchange: missing candidate file for volume '" + volume_id_ + "' slice z" +
                                     std::to_string(z) + ": " + path.string());
        }
        const auto png = read_png_gray(path);
        if (png.pixels.nx() != slice.nx() || png.pixels.ny() != slice.ny()) {
            throw std::runtime_error("mask-exchange: candidate shape mismatch in " + path.string());
        }
        const uint16_t half = png.bit_depth == 16 ? 32768 : 128;
        Mask2D m(slice.nx(), slice.ny(), uint8_t{0});
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = png.pixels[i] >= half ? 1 : 0;
        out.push_back(GuessCandidate{std::move(m), it->second[j]});
    }
    return out;
}

AttentionBackend::AttentionBackend(std::filesystem::path root, std::string volume_id)
    : dir_(std::move(root)), volume_id_(std::move(volume_id)) {}

BackendOutput AttentionBackend::generate(const Image2D& slice, const std::optional<SlicePrompt>&, int z) const {
    const auto path = attention_path(dir_, volume_id_, z);
    if (!std::filesystem::exists(path)) {
        throw std::runtime_error("mask-exchange: missing attention map for volume '" + volume_id_ + "' slice z" +
                                 std::to_string(z) + ": " + path.string());
    }
    const auto png = read_png_gray(path);
    if (png.pixels.nx() != slice.nx() || png.pixels.ny() != slice.ny()) {
        throw std::runtime_error("mask-exchange: attention shape mismatch in " + path.string());
    }
    auto [lo, hi] = std::minmax_element(png.pixels.values().begin(), png.pixels.values().end());
    AttentionMap map{Image2D(slice.nx(), slice.ny(), 0.0f)};
    if (*hi > *lo) {
        const double span = static_cast<double>(*hi) - static_cast<double>(*lo);
        for (std::size_t i = 0; i < map.values.size(); ++i)
            map.values[i] = static_cast<float>((png.pixels[i] - *lo) / span);
    }
    return map;
}

void write_exchange_candidates(const std::filesystem::path& root, const std::string& volume_id, int z,
                               std::span<const GuessCandidate> candidates) {
    const auto dir = root / volume_id;
    std::filesystem::create_directories(dir);
    const auto conf_path = dir / "confidences.json";
    nlohmann::json conf = nlohmann::json::object();
    if (std::filesystem::exists(conf_path)) {
        std::ifstream in(conf_path);
        conf = nlohmann::json::parse(in);
    }
    std::vector<double> scores;
    for (std::size_t j = 0; j < candidates.size(); ++j) {
        Grid2D<uint8_t> img(candidates[j].mask.nx(), candidates[j].mask.ny(), 0);
        for (std::size_t i = 0; i < img.size(); ++i) img[i] = candidates[j].mask[i] ? 255 : 0;
        write_png_gray8(candidate_path(root, volume_id, z, static_cast<int>(j)), img);
        scores.push_back(candidates[j].confidence);
    }
    conf[std::to_string(z)] = scores;
    std::ofstream out(conf_path);
    out << conf.dump(2) << '\n';
}

}  // namespace hasa
