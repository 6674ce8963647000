#pragma once

#include <vector>

#include "hasa/volume.hpp"

namespace hasa {

/// Dilation by a Euclidean disk: every voxel within `radius` of the foreground.
Mask2D dilate_disk(const Mask2D& m, double radius);
/// Erosion by a Euclidean disk: voxels whose whole disk of `radius` lies in the
/// foreground. Out-of-slice neighbours count as background.
Mask2D erode_disk(const Mask2D& m, double radius);

/// Foreground voxels with at least one in-slice 4-neighbour in the background.
Mask2D boundary_voxels(const Mask2D& m);

struct Component {
    int label = 0;  // 1-based
    std::size_t area = 0;
    double centroid_x = 0.0;
    double centroid_y = 0.0;
    int x_min = 0, y_min = 0, x_max = 0, y_max = 0;
};

struct ComponentLabeling {
    Grid2D<int> labels;  // 0 = background, otherwise 1-based component id
    std::vector<Component> components;
};

/// 8-connected component labeling, components numbered in raster-scan order of first voxel.
ComponentLabeling label_components(const Mask2D& m);

/// Number of 6-connected foreground components of a 3D label.
std::size_t count_components_3d(const LabelVolume& v);

}  // namespace hasa
