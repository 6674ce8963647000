#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hasa/volume.hpp"

namespace hasa {

struct Ellipsoid {
    std::array<double, 3> center{0.0, 0.0, 0.0};
    std::array<double, 3> semi_axes{1.0, 1.0, 1.0};

    /// Voxel-centre rule: (x,y,z) is inside when sum(((p - c) / a)^2) <= 1.
    bool contains(int x, int y, int z) const;
    bool fits_in(const Shape3& shape) const;
};

/// One synthetic subject. Foreground intensity mean = bg_mean + contrast_gap,
/// so a small or negative gap gives overlapping intensity distributions.
/// Distractors are unlabeled structures drawn from the foreground intensity
/// distribution ("nearby regions" with the same contrast).
struct PhantomSpec {
    Shape3 shape{48, 48, 48};
    Spacing3 spacing{};
    Ellipsoid structure{{24.0, 24.0, 24.0}, {10.0, 12.0, 8.0}};
    std::vector<Ellipsoid> distractors;
    double fg_std = 0.1;
    double bg_mean = 0.4;
    double bg_std = 0.1;
    double contrast_gap = 0.05;
    uint64_t seed = 0;

    double fg_mean() const { return bg_mean + contrast_gap; }
    void validate() const;
};

/// Returns (image, label). Deterministic given spec.seed.
std::pair<Volume3D, LabelVolume> generate_phantom(const PhantomSpec& spec);

/// Ranges for drawing a population of phantoms.
struct PhantomSetSpec {
    int count = 40;
    Shape3 shape{48, 48, 48};
    std::array<double, 2> semi_axis_range{6.0, 10.0};
    int distractor_count = 2;
    std::array<double, 2> distractor_axis_range{5.0, 9.0};
    double min_separation = 3.0;  // voxels between target and distractor surfaces
    int margin = 2;               // voxels between any structure and the volume edge
    double fg_std = 0.1;
    double bg_mean = 0.4;
    double bg_std = 0.1;
    double contrast_gap = 0.05;
    // T2-like companion contrast
    double t2_contrast_gap = -0.08;
    uint64_t seed = 0;

    void validate() const;
};

/// Draws the phantom parameters of subject `index`; deterministic in (set.seed, index).
PhantomSpec sample_phantom_spec(const PhantomSetSpec& set, int index);

/// T2-like companion of a phantom: same geometry, own contrast gap and noise.
PhantomSpec companion_t2_spec(const PhantomSpec& t1, double contrast_gap);

void to_json(nlohmann::json& j, const Ellipsoid& e);
void from_json(const nlohmann::json& j, Ellipsoid& e);
void to_json(nlohmann::json& j, const PhantomSpec& s);
void from_json(const nlohmann::json& j, PhantomSpec& s);
void to_json(nlohmann::json& j, const PhantomSetSpec& s);
void from_json(const nlohmann::json& j, PhantomSetSpec& s);

}  // namespace hasa
