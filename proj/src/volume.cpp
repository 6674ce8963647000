#include "hasa/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace hasa {

std::string to_string(const Shape3& s) {
    return "(" + std::to_string(s.nx) + "," + std::to_string(s.ny) + "," + std::to_string(s.nz) + ")";
}

std::size_t count_foreground(const Mask2D& m) {
    return static_cast<std::size_t>(std::count(m.values().begin(), m.values().end(), uint8_t{1}));
}

bool is_binary(const Mask2D& m) {
    return std::all_of(m.values().begin(), m.values().end(), [](uint8_t v) { return v <= 1; });
}

void require_binary(const Mask2D& m, const char* what) {
    if (!is_binary(m)) {
        throw std::invalid_argument(std::string(what) + ": mask is not binary");
    }
}

std::pair<float, float> Volume3D::intensity_range() const {
    auto [lo, hi] = std::minmax_element(data_.begin(), data_.end());
    return {*lo, *hi};
}

void Volume3D::require_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("volume contains non-finite values");
        }
    }
}

std::size_t LabelVolume::foreground_count() const {
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), uint8_t{1}));
}

bool LabelVolume::is_binary() const {
    return std::all_of(data_.begin(), data_.end(), [](uint8_t v) { return v <= 1; });
}

namespace {

void check_z(const Shape3& s, int z) {
    if (z < 0 || z >= s.nz) {
        throw std::out_of_range("slice index " + std::to_string(z) + " outside [0," + std::to_string(s.nz) + ")");
    }
}

template <typename Slice, typename Vol>
Vol stack_impl(std::span<const Slice> slices, Spacing3 spacing) {
    if (slices.empty()) {
        throw std::invalid_argument("stack_slices: empty slice list");
    }
    const int nx = slices.front().nx();
    const int ny = slices.front().ny();
    Vol out(Shape3{nx, ny, static_cast<int>(slices.size())}, spacing);
    for (std::size_t k = 0; k < slices.size(); ++k) {
        if (slices[k].nx() != nx || slices[k].ny() != ny) {
            throw std::invalid_argument("stack_slices: slice " + std::to_string(k) + " has shape (" +
                                        std::to_string(slices[k].nx()) + "," + std::to_string(slices[k].ny()) +
                                        "), expected (" + std::to_string(nx) + "," + std::to_string(ny) + ")");
        }
        auto dst = out.slice_span(static_cast<int>(k));
        std::copy(slices[k].values().begin(), slices[k].values().end(), dst.begin());
    }
    return out;
}

}  // namespace

Image2D extract_slice(const Volume3D& v, int z) {
    check_z(v.shape(), z);
    auto src = v.slice_span(z);
    return Image2D(v.shape().nx, v.shape().ny, std::vector<float>(src.begin(), src.end()));
}

Mask2D extract_slice(const LabelVolume& v, int z) {
    check_z(v.shape(), z);
    auto src = v.slice_span(z);
    return Mask2D(v.shape().nx, v.shape().ny, std::vector<uint8_t>(src.begin(), src.end()));
}

Volume3D stack_slices(std::span<const Image2D> slices, Spacing3 spacing) {
    return stack_impl<Image2D, Volume3D>(slices, spacing);
}

LabelVolume stack_slices(std::span<const Mask2D> slices, Spacing3 spacing) {
    return stack_impl<Mask2D, LabelVolume>(slices, spacing);
}

Volume3D normalize_intensity(const Volume3D& v) {
    Volume3D out(v.shape(), v.spacing(), 0.0f);
    out.set_orientation(v.orientation());
    auto [lo, hi] = v.intensity_range();
    if (!(hi > lo)) {
        return out;
    }
    const double scale = 1.0 / (static_cast<double>(hi) - static_cast<double>(lo));
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = static_cast<float>((static_cast<double>(v[i]) - lo) * scale);
    }
    return out;
}

Volume3D to_volume(const LabelVolume& l) {
    Volume3D out(l.shape(), l.spacing(), 0.0f);
    out.set_orientation(l.orientation());
    for (std::size_t i = 0; i < l.size(); ++i) {
        out[i] = static_cast<float>(l[i]);
    }
    return out;
}

}  // namespace hasa
