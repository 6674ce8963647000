#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hasa {

struct Shape3 {
    int nx = 1;
    int ny = 1;
    int nz = 1;

    std::size_t voxels() const {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
    }
    std::size_t slice_voxels() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
    bool operator==(const Shape3&) const = default;
};

struct Spacing3 {
    double sx = 1.0;
    double sy = 1.0;
    double sz = 1.0;

    double voxel_volume() const { return sx * sy * sz; }
    bool operator==(const Spacing3&) const = default;
};

std::string to_string(const Shape3& s);

/// Orientation fields carried through NIfTI I/O without interpretation.
struct Orientation {
    int16_t qform_code = 0;
    int16_t sform_code = 0;
    float qfac = 1.0f;
    std::array<float, 3> quatern{0.f, 0.f, 0.f};
    std::array<float, 3> qoffset{0.f, 0.f, 0.f};
    std::array<float, 4> srow_x{0.f, 0.f, 0.f, 0.f};
    std::array<float, 4> srow_y{0.f, 0.f, 0.f, 0.f};
    std::array<float, 4> srow_z{0.f, 0.f, 0.f, 0.f};

    bool operator==(const Orientation&) const = default;
};

/// Dense 2D grid, x fastest.
template <typename T>
class Grid2D {
public:
    Grid2D() = default;
    Grid2D(int nx, int ny, T fill = T{}) : nx_(nx), ny_(ny) {
        if (nx < 1 || ny < 1) {
            throw std::invalid_argument("Grid2D: dimensions must be >= 1");
        }
        data_.assign(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny), fill);
    }
    Grid2D(int nx, int ny, std::vector<T> data) : nx_(nx), ny_(ny), data_(std::move(data)) {
        if (nx < 1 || ny < 1 || data_.size() != static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny)) {
            throw std::invalid_argument("Grid2D: data size does not match dimensions");
        }
    }

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    std::size_t size() const { return data_.size(); }
    bool same_shape(const Grid2D& o) const { return nx_ == o.nx_ && ny_ == o.ny_; }
    template <typename U>
    bool same_shape(const Grid2D<U>& o) const { return nx_ == o.nx() && ny_ == o.ny(); }

    bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < nx_ && y < ny_; }
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(nx_) + static_cast<std::size_t>(x);
    }
    T& at(int x, int y) { return data_[index(x, y)]; }
    const T& at(int x, int y) const { return data_[index(x, y)]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }

    bool operator==(const Grid2D&) const = default;

private:
    int nx_ = 0;
    int ny_ = 0;
    std::vector<T> data_;
};

using Image2D = Grid2D<float>;
/// Binary 2D mask; every value is 0 or 1.
using Mask2D = Grid2D<uint8_t>;

std::size_t count_foreground(const Mask2D& m);
bool is_binary(const Mask2D& m);
void require_binary(const Mask2D& m, const char* what);

/// Common storage for 3D grids. x is the fastest axis, z the slowest (NIfTI order).
template <typename T>
class Grid3D {
public:
    Grid3D() = default;
    Grid3D(Shape3 shape, Spacing3 spacing, T fill = T{}) : shape_(shape), spacing_(spacing) {
        validate_geometry(shape, spacing);
        data_.assign(shape.voxels(), fill);
    }
    Grid3D(Shape3 shape, Spacing3 spacing, std::vector<T> data)
        : shape_(shape), spacing_(spacing), data_(std::move(data)) {
        validate_geometry(shape, spacing);
        if (data_.size() != shape.voxels()) {
            throw std::invalid_argument("volume data size " + std::to_string(data_.size()) +
                                        " does not match shape " + to_string(shape));
        }
    }

    const Shape3& shape() const { return shape_; }
    const Spacing3& spacing() const { return spacing_; }
    void set_spacing(Spacing3 s) {
        validate_geometry(shape_, s);
        spacing_ = s;
    }
    const Orientation& orientation() const { return orientation_; }
    void set_orientation(const Orientation& o) { orientation_ = o; }

    std::size_t size() const { return data_.size(); }
    std::size_t index(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * static_cast<std::size_t>(shape_.ny) + static_cast<std::size_t>(y)) *
                   static_cast<std::size_t>(shape_.nx) +
               static_cast<std::size_t>(x);
    }
    bool in_bounds(int x, int y, int z) const {
        return x >= 0 && y >= 0 && z >= 0 && x < shape_.nx && y < shape_.ny && z < shape_.nz;
    }
    T& at(int x, int y, int z) { return data_[index(x, y, z)]; }
    const T& at(int x, int y, int z) const { return data_[index(x, y, z)]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }
    std::span<const T> slice_span(int z) const {
        return std::span<const T>(data_).subspan(static_cast<std::size_t>(z) * shape_.slice_voxels(),
                                                 shape_.slice_voxels());
    }
    std::span<T> slice_span(int z) {
        return std::span<T>(data_).subspan(static_cast<std::size_t>(z) * shape_.slice_voxels(), shape_.slice_voxels());
    }

    bool operator==(const Grid3D&) const = default;

    static void validate_geometry(const Shape3& shape, const Spacing3& spacing) {
        if (shape.nx < 1 || shape.ny < 1 || shape.nz < 1) {
            throw std::invalid_argument("volume shape components must be >= 1, got " + to_string(shape));
        }
        if (!(spacing.sx > 0.0) || !(spacing.sy > 0.0) || !(spacing.sz > 0.0)) {
            throw std::invalid_argument("volume spacing components must be > 0");
        }
    }

protected:
    Shape3 shape_{};
    Spacing3 spacing_{};
    Orientation orientation_{};
    std::vector<T> data_;
};

/// Real-valued scalar volume (T1, T2, soft guesses, probabilities).
class Volume3D : public Grid3D<float> {
public:
    using Grid3D<float>::Grid3D;

    /// (min, max) of the data.
    std::pair<float, float> intensity_range() const;
    /// Throws when any value is NaN or infinite.
    void require_finite() const;
};

/// Binary label volume; every value is exactly 0 or 1.
class LabelVolume : public Grid3D<uint8_t> {
public:
    using Grid3D<uint8_t>::Grid3D;

    std::size_t foreground_count() const;
    bool is_binary() const;
};

/// Axial plane at z.
Image2D extract_slice(const Volume3D& v, int z);
Mask2D extract_slice(const LabelVolume& v, int z);

/// Stacks equally-shaped axial slices into a volume with nz = slices.size().
Volume3D stack_slices(std::span<const Image2D> slices, Spacing3 spacing);
LabelVolume stack_slices(std::span<const Mask2D> slices, Spacing3 spacing);

/// Rescales to [0,1] by (x - min) / (max - min); a constant volume maps to all zeros.
Volume3D normalize_intensity(const Volume3D& v);

/// Binary label -> float volume (0.0 / 1.0).
Volume3D to_volume(const LabelVolume& l);

}  // namespace hasa
