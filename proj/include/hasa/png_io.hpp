#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hasa/volume.hpp"

namespace hasa {

/// Grayscale PNG contents; row y of the image is y, column x is x.
struct GrayImage {
    Grid2D<uint16_t> pixels;
    int bit_depth = 8;  // 8 or 16
};

/// Reads any PNG as grayscale (colour is converted, alpha dropped).
GrayImage read_png_gray(const std::filesystem::path& path);

void write_png_gray8(const std::filesystem::path& path, const Grid2D<uint8_t>& img);
void write_png_gray16(const std::filesystem::path& path, const Grid2D<uint16_t>& img);
/// Interleaved RGB, 3 * nx * ny bytes.
void write_png_rgb(const std::filesystem::path& path, int nx, int ny, const std::vector<uint8_t>& rgb);

}  // namespace hasa
