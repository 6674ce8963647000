#pragma once

#include "hasa/volume.hpp"

namespace hasa {

/// Clipped sigmoid smoothing parameters.
struct SdmSpec {
    double band = 10.0;      // clip half-width in voxels
    double steepness = 1.0;  // logistic slope per voxel
    bool volumetric = false; // 3D distance instead of per-slice 2D

    void validate() const;
};

/// Exact signed Euclidean distance to the mask boundary: positive inside,
/// negative outside, zero on boundary voxels (foreground voxels with an
/// in-slice 4-neighbour in the background).
///
/// Masks without a boundary get a constant: -band when empty, +band when the
/// foreground fills the slice.
Image2D signed_distance(const Mask2D& mask, double band = 10.0);

/// 3D counterpart of signed_distance (boundary = foreground voxels with a
/// 6-neighbour in the background). Unit voxel spacing.
Volume3D signed_distance_3d(const LabelVolume& mask, double band = 10.0);

/// logistic(steepness * clip(signed_distance, -band, band)).
Image2D soft_boundary(const Mask2D& mask, const SdmSpec& spec = {});

/// Applies soft_boundary slice by slice (or in 3D when spec.volumetric).
Volume3D sdm_volume(const LabelVolume& guess, const SdmSpec& spec = {});

/// Per-slice signed distance of a label, clipped to +-band and divided by band,
/// so every value lies in [-1, 1]. Target for the boundary loss.
Volume3D normalized_label_distance(const LabelVolume& label, double band = 10.0);

double logistic(double x);

}  // namespace hasa
