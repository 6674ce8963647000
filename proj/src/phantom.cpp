#include "hasa/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hasa/rng.hpp"

namespace hasa {

bool Ellipsoid::contains(int x, int y, int z) const {
    const double dx = (x - center[0]) / semi_axes[0];
    const double dy = (y - center[1]) / semi_axes[1];
    const double dz = (z - center[2]) / semi_axes[2];
    return dx * dx + dy * dy + dz * dz <= 1.0;
}

bool Ellipsoid::fits_in(const Shape3& shape) const {
    const std::array<int, 3> n{shape.nx, shape.ny, shape.nz};
    for (int a = 0; a < 3; ++a) {
        if (!(semi_axes[a] > 0.0)) return false;
        if (center[a] - semi_axes[a] < 0.0 || center[a] + semi_axes[a] > n[a] - 1) return false;
    }
    return true;
}

void PhantomSpec::validate() const {
    Grid3D<float>::validate_geometry(shape, spacing);
    if (!structure.fits_in(shape)) {
        throw std::invalid_argument("phantom: ellipsoid exceeds volume bounds " + to_string(shape));
    }
    for (const auto& d : distractors) {
        if (!d.fits_in(shape)) throw std::invalid_argument("phantom: distractor exceeds volume bounds");
    }
    if (fg_std < 0.0 || bg_std < 0.0) throw std::invalid_argument("phantom: std values must be >= 0");
}

std::pair<Volume3D, LabelVolume> generate_phantom(const PhantomSpec& spec) {
    spec.validate();
    Volume3D image(spec.shape, spec.spacing, 0.0f);
    LabelVolume label(spec.shape, spec.spacing, uint8_t{0});
    Rng rng = make_rng(spec.seed, {0x7068616e746f6dULL});
    std::normal_distribution<double> unit(0.0, 1.0);
    const double fg_mean = spec.fg_mean();
    for (int z = 0; z < spec.shape.nz; ++z)
        for (int y = 0; y < spec.shape.ny; ++y)
            for (int x = 0; x < spec.shape.nx; ++x) {
                const bool target = spec.structure.contains(x, y, z);
                bool bright = target;
                for (const auto& d : spec.distractors) bright = bright || d.contains(x, y, z);
                const double noise = unit(rng);
                const double value = bright ? fg_mean + spec.fg_std * noise : spec.bg_mean + spec.bg_std * noise;
                const auto i = image.index(x, y, z);
                image[i] = static_cast<float>(value);
                label[i] = target ? 1 : 0;
            }
    return {std::move(image), std::move(label)};
}

void PhantomSetSpec::validate() const {
    if (count < 1) throw std::invalid_argument("phantom set: count must be >= 1");
    Grid3D<float>::validate_geometry(shape, Spacing3{});
    if (!(semi_axis_range[0] > 0.0) || semi_axis_range[1] < semi_axis_range[0]) {
        throw std::invalid_argument("phantom set: invalid semi_axis_range");
    }
    if (distractor_count < 0) throw std::invalid_argument("phantom set: distractor_count must be >= 0");
    if (distractor_count > 0 && (!(distractor_axis_range[0] > 0.0) || distractor_axis_range[1] < distractor_axis_range[0])) {
        throw std::invalid_argument("phantom set: invalid distractor_axis_range");
    }
    const int smallest = std::min({shape.nx, shape.ny, shape.nz});
    if (2.0 * (semi_axis_range[1] + margin) > smallest - 1) {
        throw std::invalid_argument("phantom set: ellipsoid exceeds volume bounds");
    }
    if (fg_std < 0.0 || bg_std < 0.0) throw std::invalid_argument("phantom set: std values must be >= 0");
}

namespace {

Ellipsoid random_ellipsoid(Rng& rng, const Shape3& shape, std::array<double, 2> axis_range, int margin) {
    Ellipsoid e;
    const std::array<int, 3> n{shape.nx, shape.ny, shape.nz};
    for (int a = 0; a < 3; ++a) {
        const double axis = std::round(uniform_real(rng, axis_range[0], axis_range[1]) * 4.0) / 4.0;
        e.semi_axes[a] = axis;
        const double lo = axis + margin;
        const double hi = n[a] - 1 - axis - margin;
        e.center[a] = hi > lo ? std::round(uniform_real(rng, lo, hi) * 2.0) / 2.0 : 0.5 * (n[a] - 1);
    }
    return e;
}

double max_axis(const Ellipsoid& e) { return *std::max_element(e.semi_axes.begin(), e.semi_axes.end()); }

bool separated(const Ellipsoid& a, const Ellipsoid& b, double gap) {
    double d2 = 0.0;
    for (int k = 0; k < 3; ++k) d2 += (a.center[k] - b.center[k]) * (a.center[k] - b.center[k]);
    return std::sqrt(d2) >= max_axis(a) + max_axis(b) + gap;
}

}  // namespace

PhantomSpec sample_phantom_spec(const PhantomSetSpec& set, int index) {
    set.validate();
    Rng rng = make_rng(set.seed, {0x736574ULL, static_cast<uint64_t>(index)});
    PhantomSpec spec;
    spec.shape = set.shape;
    spec.structure = random_ellipsoid(rng, set.shape, set.semi_axis_range, set.margin);
    for (int k = 0; k < set.distractor_count; ++k) {
        for (int attempt = 0; attempt < 200; ++attempt) {
            Ellipsoid d = random_ellipsoid(rng, set.shape, set.distractor_axis_range, set.margin);
            bool ok = separated(d, spec.structure, set.min_separation);
            for (const auto& other : spec.distractors) ok = ok && separated(d, other, set.min_separation);
            if (ok) {
                spec.distractors.push_back(d);
                break;
            }
        }
    }
    spec.fg_std = set.fg_std;
    spec.bg_mean = set.bg_mean;
    spec.bg_std = set.bg_std;
    spec.contrast_gap = set.contrast_gap;
    spec.seed = mix64(set.seed ^ mix64(static_cast<uint64_t>(index) + 1));
    return spec;
}

PhantomSpec companion_t2_spec(const PhantomSpec& t1, double contrast_gap) {
    PhantomSpec t2 = t1;
    t2.contrast_gap = contrast_gap;
    t2.seed = mix64(t1.seed ^ 0x7432ULL);
    return t2;
}

void to_json(nlohmann::json& j, const Ellipsoid& e) {
    j = nlohmann::json{{"center", e.center}, {"semi_axes", e.semi_axes}};
}

void from_json(const nlohmann::json& j, Ellipsoid& e) {
    j.at("center").get_to(e.center);
    j.at("semi_axes").get_to(e.semi_axes);
}

void to_json(nlohmann::json& j, const PhantomSpec& s) {
    j = nlohmann::json{{"shape", {s.shape.nx, s.shape.ny, s.shape.nz}},
                       {"spacing", {s.spacing.sx, s.spacing.sy, s.spacing.sz}},
                       {"structure", s.structure},
                       {"distractors", s.distractors},
                       {"fg_intensity_mean", s.fg_mean()},
                       {"fg_intensity_std", s.fg_std},
                       {"bg_intensity_mean", s.bg_mean},
                       {"bg_intensity_std", s.bg_std},
                       {"contrast_gap", s.contrast_gap},
                       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, PhantomSpec& s) {
    s = PhantomSpec{};
    if (j.contains("shape")) {
        auto a = j.at("shape").get<std::array<int, 3>>();
        s.shape = Shape3{a[0], a[1], a[2]};
    }
    if (j.contains("spacing")) {
        auto a = j.at("spacing").get<std::array<double, 3>>();
        s.spacing = Spacing3{a[0], a[1], a[2]};
    }
    if (j.contains("structure")) j.at("structure").get_to(s.structure);
    if (j.contains("distractors")) j.at("distractors").get_to(s.distractors);
    s.fg_std = j.value("fg_intensity_std", s.fg_std);
    s.bg_mean = j.value("bg_intensity_mean", s.bg_mean);
    s.bg_std = j.value("bg_intensity_std", s.bg_std);
    if (j.contains("contrast_gap")) {
        s.contrast_gap = j.at("contrast_gap").get<double>();
    } else if (j.contains("fg_intensity_mean")) {
        s.contrast_gap = j.at("fg_intensity_mean").get<double>() - s.bg_mean;
    }
    s.seed = j.value("seed", s.seed);
}

void to_json(nlohmann::json& j, const PhantomSetSpec& s) {
    j = nlohmann::json{{"count", s.count},
                       {"shape", {s.shape.nx, s.shape.ny, s.shape.nz}},
                       {"semi_axis_range", s.semi_axis_range},
                       {"distractor_count", s.distractor_count},
                       {"distractor_axis_range", s.distractor_axis_range},
                       {"min_separation", s.min_separation},
                       {"margin", s.margin},
                       {"fg_intensity_std", s.fg_std},
                       {"bg_intensity_mean", s.bg_mean},
                       {"bg_intensity_std", s.bg_std},
                       {"contrast_gap", s.contrast_gap},
                       {"t2_contrast_gap", s.t2_contrast_gap},
                       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, PhantomSetSpec& s) {
    s = PhantomSetSpec{};
    s.count = j.value("count", s.count);
    if (j.contains("shape")) {
        auto a = j.at("shape").get<std::array<int, 3>>();
        s.shape = Shape3{a[0], a[1], a[2]};
    }
    if (j.contains("semi_axis_range")) j.at("semi_axis_range").get_to(s.semi_axis_range);
    s.distractor_count = j.value("distractor_count", s.distractor_count);
    if (j.contains("distractor_axis_range")) j.at("distractor_axis_range").get_to(s.distractor_axis_range);
    s.min_separation = j.value("min_separation", s.min_separation);
    s.margin = j.value("margin", s.margin);
    s.fg_std = j.value("fg_intensity_std", s.fg_std);
    s.bg_mean = j.value("bg_intensity_mean", s.bg_mean);
    s.bg_std = j.value("bg_intensity_std", s.bg_std);
    s.contrast_gap = j.value("contrast_gap", s.contrast_gap);
    s.t2_contrast_gap = j.value("t2_contrast_gap", s.t2_contrast_gap);
    s.seed = j.value("seed", s.seed);
}

}  // namespace hasa
