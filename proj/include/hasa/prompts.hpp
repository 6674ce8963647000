#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hasa/rng.hpp"
#include "hasa/volume.hpp"

namespace hasa {

struct BoundingBox {
    int x_min = 0;
    int y_min = 0;
    int x_max = 0;
    int y_max = 0;

    bool contains(double x, double y) const { return x >= x_min && x <= x_max && y >= y_min && y <= y_max; }
    bool operator==(const BoundingBox&) const = default;
};

enum class PointLabel { positive, negative, dont_care };

std::string to_string(PointLabel l);
PointLabel point_label_from_string(const std::string& s);

struct PromptPoint {
    int x = 0;
    int y = 0;
    PointLabel label = PointLabel::positive;
    bool operator==(const PromptPoint&) const = default;
};

inline constexpr std::size_t kPromptPoints = 5;

struct SlicePrompt {
    int z = 0;
    BoundingBox box;
    std::array<PromptPoint, kPromptPoints> points{};
    bool operator==(const SlicePrompt&) const = default;
};

struct JitterSpec {
    int max_shift = 3;
    uint64_t seed = 0;
};

/// Split of the five points and the geometric radii used to place them.
struct PointPolicy {
    int positives = 2;
    int negatives = 2;
    int dont_care = 1;
    double erosion_radius = 1.0;
    double negative_min_distance = 3.0;  // strictly greater than this
    double dont_care_band = 2.0;         // |signed distance| <= this
};

/// Tight foreground bounds of a slice, or nullopt when it is empty.
std::optional<BoundingBox> foreground_bounds(const Mask2D& m);

/// Samples the five labeled points. Throws when the slice has no background.
std::array<PromptPoint, kPromptPoints> sample_points(const Mask2D& prior, Rng& rng, const PointPolicy& policy = {});

/// Prompt for one axial slice of a prior segmentation; nullopt for an empty slice.
/// Each box edge is shifted by an independent uniform integer in
/// [-max_shift, max_shift], clipped to the slice and re-ordered.
std::optional<SlicePrompt> extract_prompt(const Mask2D& prior, int z, const JitterSpec& jitter, Rng& rng,
                                          const PointPolicy& policy = {});

/// Prompts for every slice of a prior volume. Slice z uses its own stream
/// derived from (jitter.seed, stream_id, z), so results do not depend on order.
std::vector<std::optional<SlicePrompt>> extract_prompts(const LabelVolume& prior, const JitterSpec& jitter,
                                                        uint64_t stream_id = 0, const PointPolicy& policy = {});

nlohmann::json to_json(const SlicePrompt& p);
SlicePrompt prompt_from_json(const nlohmann::json& j);

/// One JSON object per line for every present prompt, in slice order.
void write_prompts_jsonl(const std::vector<std::optional<SlicePrompt>>& prompts, const std::filesystem::path& path);
std::vector<SlicePrompt> read_prompts_jsonl(const std::filesystem::path& path);

}  // namespace hasa
