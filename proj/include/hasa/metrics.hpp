#pragma once

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "hasa/volume.hpp"

namespace hasa {

/// 2|A∩B| / (|A|+|B|); 1 when both are empty.
double dice(const LabelVolume& a, const LabelVolume& b);
double dice(std::span<const uint8_t> a, std::span<const uint8_t> b);

/// max(0, 1 - |V_pred - V_true| / V_true) with volumes in mm^3.
double volume_accuracy(const LabelVolume& pred, const LabelVolume& truth);
double volume_accuracy(std::size_t pred_voxels, std::size_t true_voxels);

struct EdgeErrorMap {
    LabelVolume fp;  // pred and not truth
    LabelVolume fn;  // truth and not pred
    /// histogram[k] counts error voxels with ceil(distance to the truth boundary) == k.
    std::vector<std::size_t> histogram;

    std::size_t error_count() const;
    /// Fraction of error voxels at distance <= d voxels (1 when there are none).
    double fraction_within(double d) const;
};

/// False positive / false negative maps of pred against truth, and how far
/// each error voxel lies from the truth boundary. Distances are 3D by default;
/// per_slice measures within each axial slice instead.
EdgeErrorMap edge_error_map(const LabelVolume& pred, const LabelVolume& truth, bool per_slice = false);

/// Overlay of one axial slice: grayscale background, magenta false
/// positives, green false negatives.
void write_edge_overlay(const std::filesystem::path& path, const Volume3D& image, const EdgeErrorMap& map, int z);

/// Indices i with |s_i - median| / MAD > k. With MAD = 0 every score that
/// differs from the median is flagged. Needs at least 4 scores.
std::vector<std::size_t> flag_outliers(const std::vector<double>& scores, double k);

double median(std::vector<double> v);

struct EvalRecord {
    std::string subject_id;
    std::string config;  // e.g. channel policy
    double dice = 0.0;
    double vol_acc = 0.0;
    std::size_t pred_volume_voxels = 0;
    std::size_t true_volume_voxels = 0;
    std::size_t edge_fp_count = 0;
    std::size_t edge_fn_count = 0;
};

struct ResultRow {
    std::string config;
    std::size_t subjects = 0;
    double mean_dice = 0.0;
    double mean_vol_acc = 0.0;
    double std_dice = 0.0;
    double std_vol_acc = 0.0;
};

/// One row per config, in order of first appearance. With pooled_vol_acc the
/// volume accuracy compares summed volumes instead of averaging subjects.
std::vector<ResultRow> results_table(const std::vector<EvalRecord>& records, bool pooled_vol_acc = false);

std::string results_csv(const std::vector<ResultRow>& rows);
std::string results_text(const std::vector<ResultRow>& rows);
std::string records_csv(const std::vector<EvalRecord>& records);

}  // namespace hasa
