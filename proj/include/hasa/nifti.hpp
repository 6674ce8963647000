#pragma once

#include <filesystem>

#include "hasa/volume.hpp"

namespace hasa {

/// Raised for unreadable, truncated or malformed NIfTI files.
class NiftiError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reads a single-file NIfTI-1 volume (.nii, or gzip-compressed .nii.gz).
/// Any scalar datatype is accepted; scl_slope/scl_inter are applied.
Volume3D load_volume(const std::filesystem::path& path);

/// Like load_volume, but the data must be exactly {0,1}.
LabelVolume load_label(const std::filesystem::path& path);

/// Writes float32 data. A ".gz" suffix selects gzip compression.
void save_volume(const Volume3D& v, const std::filesystem::path& path);
/// Writes uint8 data.
void save_volume(const LabelVolume& v, const std::filesystem::path& path);

}  // namespace hasa
