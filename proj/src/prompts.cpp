#include "hasa/prompts.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "hasa/distance.hpp"
#include "hasa/morphology.hpp"
#include "hasa/sdm.hpp"

namespace hasa {

std::string to_string(PointLabel l) {
    switch (l) {
        case PointLabel::positive: return "positive";
        case PointLabel::negative: return "negative";
        case PointLabel::dont_care: return "dont_care";
    }
    return "unknown";
}

PointLabel point_label_from_string(const std::string& s) {
    if (s == "positive") return PointLabel::positive;
    if (s == "negative") return PointLabel::negative;
    if (s == "dont_care") return PointLabel::dont_care;
    throw std::invalid_argument("unknown prompt point label '" + s + "'");
}

std::optional<BoundingBox> foreground_bounds(const Mask2D& m) {
    std::optional<BoundingBox> box;
    for (int y = 0; y < m.ny(); ++y) {
        for (int x = 0; x < m.nx(); ++x) {
            if (!m.at(x, y)) continue;
            if (!box) {
                box = BoundingBox{x, y, x, y};
                continue;
            }
            box->x_min = std::min(box->x_min, x);
            box->x_max = std::max(box->x_max, x);
            box->y_min = std::min(box->y_min, y);
            box->y_max = std::max(box->y_max, y);
        }
    }
    return box;
}

namespace {

std::vector<std::size_t> where(const Mask2D& m) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < m.size(); ++i)
        if (m[i]) idx.push_back(i);
    return idx;
}

PromptPoint pick(const std::vector<std::size_t>& pool, const Mask2D& shape, PointLabel label, Rng& rng) {
    const auto i = pool[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(pool.size()) - 1))];
    return PromptPoint{static_cast<int>(i % static_cast<std::size_t>(shape.nx())),
                       static_cast<int>(i / static_cast<std::size_t>(shape.nx())), label};
}

}  // namespace

std::array<PromptPoint, kPromptPoints> sample_points(const Mask2D& prior, Rng& rng, const PointPolicy& policy) {
    require_binary(prior, "sample_points");
    if (policy.positives < 0 || policy.negatives < 0 || policy.dont_care < 0 ||
        policy.positives + policy.negatives + policy.dont_care != static_cast<int>(kPromptPoints)) {
        throw std::invalid_argument("sample_points: point split must total five");
    }
    const auto fg = where(prior);
    if (fg.empty()) throw std::invalid_argument("sample_points: slice has no foreground");
    if (fg.size() == prior.size()) throw std::invalid_argument("sample_points: no background");

    auto positives = where(erode_disk(prior, policy.erosion_radius));
    if (positives.empty()) positives = fg;

    const auto d2 = squared_distance_to_seeds(prior.values(), prior.nx(), prior.ny());
    const double min2 = policy.negative_min_distance * policy.negative_min_distance;
    std::vector<std::size_t> negatives;
    std::vector<std::size_t> background;
    for (std::size_t i = 0; i < prior.size(); ++i) {
        if (prior[i]) continue;
        background.push_back(i);
        if (d2[i] > min2) negatives.push_back(i);
    }
    if (negatives.empty()) negatives = background;

    const Image2D sd = signed_distance(prior);
    std::vector<std::size_t> band;
    for (std::size_t i = 0; i < prior.size(); ++i)
        if (std::abs(sd[i]) <= policy.dont_care_band) band.push_back(i);

    std::array<PromptPoint, kPromptPoints> pts{};
    std::size_t k = 0;
    for (int i = 0; i < policy.positives; ++i) pts[k++] = pick(positives, prior, PointLabel::positive, rng);
    for (int i = 0; i < policy.negatives; ++i) pts[k++] = pick(negatives, prior, PointLabel::negative, rng);
    for (int i = 0; i < policy.dont_care; ++i) pts[k++] = pick(band, prior, PointLabel::dont_care, rng);
    return pts;
}

std::optional<SlicePrompt> extract_prompt(const Mask2D& prior, int z, const JitterSpec& jitter, Rng& rng,
                                          const PointPolicy& policy) {
    require_binary(prior, "extract_prompt");
    if (jitter.max_shift < 0) throw std::invalid_argument("extract_prompt: max_shift must be >= 0");
    auto tight = foreground_bounds(prior);
    if (!tight) return std::nullopt;

    auto shift = [&](int v, int hi) {
        const int s = jitter.max_shift > 0 ? uniform_int(rng, -jitter.max_shift, jitter.max_shift) : 0;
        return std::clamp(v + s, 0, hi);
    };
    SlicePrompt p;
    p.z = z;
    int x0 = shift(tight->x_min, prior.nx() - 1);
    int y0 = shift(tight->y_min, prior.ny() - 1);
    int x1 = shift(tight->x_max, prior.nx() - 1);
    int y1 = shift(tight->y_max, prior.ny() - 1);
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    p.box = BoundingBox{x0, y0, x1, y1};
    p.points = sample_points(prior, rng, policy);
    return p;
}

std::vector<std::optional<SlicePrompt>> extract_prompts(const LabelVolume& prior, const JitterSpec& jitter,
                                                        uint64_t stream_id, const PointPolicy& policy) {
    std::vector<std::optional<SlicePrompt>> out;
    out.reserve(static_cast<std::size_t>(prior.shape().nz));
    for (int z = 0; z < prior.shape().nz; ++z) {
        Rng rng = make_rng(jitter.seed, {0x70726f6d7074ULL, stream_id, static_cast<uint64_t>(z)});
        out.push_back(extract_prompt(extract_slice(prior, z), z, jitter, rng, policy));
    }
    return out;
}

nlohmann::json to_json(const SlicePrompt& p) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& pt : p.points) pts.push_back({{"x", pt.x}, {"y", pt.y}, {"label", to_string(pt.label)}});
    return {{"z", p.z}, {"box", {p.box.x_min, p.box.y_min, p.box.x_max, p.box.y_max}}, {"points", pts}};
}

SlicePrompt prompt_from_json(const nlohmann::json& j) {
    SlicePrompt p;
    p.z = j.at("z").get<int>();
    const auto box = j.at("box").get<std::array<int, 4>>();
    p.box = BoundingBox{box[0], box[1], box[2], box[3]};
    const auto& pts = j.at("points");
    if (!pts.is_array() || pts.size() != kPromptPoints) {
        throw std::invalid_argument("prompt for slice " + std::to_string(p.z) + " must have exactly five points");
    }
    for (std::size_t i = 0; i < kPromptPoints; ++i) {
        p.points[i] = PromptPoint{pts[i].at("x").get<int>(), pts[i].at("y").get<int>(),
                                  point_label_from_string(pts[i].at("label").get<std::string>())};
    }
    return p;
}

void write_prompts_jsonl(const std::vector<std::optional<SlicePrompt>>& prompts, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write prompts file " + path.string());
    for (const auto& p : prompts)
        if (p) out << to_json(*p).dump() << '\n';
    if (!out) throw std::runtime_error("write error in " + path.string());
}

std::vector<SlicePrompt> read_prompts_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read prompts file " + path.string());
    std::vector<SlicePrompt> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(prompt_from_json(nlohmann::json::parse(line)));
    }
    return out;
}

}  // namespace hasa
