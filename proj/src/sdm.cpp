#include "hasa/sdm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "hasa/distance.hpp"
#include "hasa/morphology.hpp"

namespace hasa {

void SdmSpec::validate() const {
    if (!(band > 0.0)) throw std::invalid_argument("SdmSpec: band must be > 0");
    if (!(steepness > 0.0)) throw std::invalid_argument("SdmSpec: steepness must be > 0");
}

double logistic(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Image2D signed_distance(const Mask2D& mask, double band) {
    require_binary(mask, "signed_distance");
    const auto fg = count_foreground(mask);
    if (fg == 0) return Image2D(mask.nx(), mask.ny(), static_cast<float>(-band));
    const Mask2D boundary = boundary_voxels(mask);
    if (count_foreground(boundary) == 0) return Image2D(mask.nx(), mask.ny(), static_cast<float>(band));

    const auto d2 = squared_distance_to_seeds(boundary.values(), mask.nx(), mask.ny());
    Image2D out(mask.nx(), mask.ny(), 0.0f);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double d = std::sqrt(d2[i]);
        out[i] = static_cast<float>(mask[i] ? d : -d);
    }
    return out;
}

Volume3D signed_distance_3d(const LabelVolume& mask, double band) {
    if (!mask.is_binary()) throw std::invalid_argument("signed_distance_3d: mask is not binary");
    const auto& s = mask.shape();
    Volume3D out(s, mask.spacing(), 0.0f);
    out.set_orientation(mask.orientation());
    if (mask.foreground_count() == 0) {
        std::fill(out.values().begin(), out.values().end(), static_cast<float>(-band));
        return out;
    }
    std::vector<uint8_t> boundary(mask.size(), 0);
    bool any = false;
    static constexpr std::array<std::array<int, 3>, 6> kN6{
        {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
    for (int z = 0; z < s.nz; ++z)
        for (int y = 0; y < s.ny; ++y)
            for (int x = 0; x < s.nx; ++x) {
                if (!mask.at(x, y, z)) continue;
                for (const auto& d : kN6) {
                    const int qx = x + d[0], qy = y + d[1], qz = z + d[2];
                    if (mask.in_bounds(qx, qy, qz) && !mask.at(qx, qy, qz)) {
                        boundary[mask.index(x, y, z)] = 1;
                        any = true;
                        break;
                    }
                }
            }
    if (!any) {
        std::fill(out.values().begin(), out.values().end(), static_cast<float>(band));
        return out;
    }
    const auto d2 = squared_distance_to_seeds(boundary, s.nx, s.ny, s.nz);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double d = std::sqrt(d2[i]);
        out[i] = static_cast<float>(mask[i] ? d : -d);
    }
    return out;
}

namespace {

float squash(double d, const SdmSpec& spec) {
    return static_cast<float>(logistic(spec.steepness * std::clamp(d, -spec.band, spec.band)));
}

}  // namespace

Image2D soft_boundary(const Mask2D& mask, const SdmSpec& spec) {
    spec.validate();
    Image2D d = signed_distance(mask, spec.band);
    for (auto& v : d.values()) v = squash(v, spec);
    return d;
}

Volume3D sdm_volume(const LabelVolume& guess, const SdmSpec& spec) {
    spec.validate();
    if (!guess.is_binary()) throw std::invalid_argument("sdm_volume: guess is not binary");
    if (spec.volumetric) {
        Volume3D d = signed_distance_3d(guess, spec.band);
        for (auto& v : d.values()) v = squash(v, spec);
        return d;
    }
    Volume3D out(guess.shape(), guess.spacing(), 0.0f);
    out.set_orientation(guess.orientation());
    for (int z = 0; z < guess.shape().nz; ++z) {
        const Image2D s = soft_boundary(extract_slice(guess, z), spec);
        std::copy(s.values().begin(), s.values().end(), out.slice_span(z).begin());
    }
    return out;
}

Volume3D normalized_label_distance(const LabelVolume& label, double band) {
    if (!(band > 0.0)) throw std::invalid_argument("normalized_label_distance: band must be > 0");
    Volume3D out(label.shape(), label.spacing(), 0.0f);
    for (int z = 0; z < label.shape().nz; ++z) {
        const Image2D d = signed_distance(extract_slice(label, z), band);
        auto dst = out.slice_span(z);
        for (std::size_t i = 0; i < d.size(); ++i) {
            dst[i] = static_cast<float>(std::clamp(static_cast<double>(d[i]), -band, band) / band);
        }
    }
    return out;
}

}  // namespace hasa
