#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace hasa {

/// Sentinel squared distance for grids without any seed voxel.
inline constexpr double kNoSeed = std::numeric_limits<double>::infinity();

/// Exact squared Euclidean distance from every voxel to the nearest nonzero
/// seed, computed with separable lower-envelope passes (one per axis).
/// Grid layout is x fastest; pass nz = 1 for 2D. Voxels are unit-spaced.
std::vector<double> squared_distance_to_seeds(std::span<const uint8_t> seeds, int nx, int ny, int nz = 1);

}  // namespace hasa
