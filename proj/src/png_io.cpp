#include "hasa/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace hasa {

namespace {

using FilePtr = std::unique_ptr<FILE, int (*)(FILE*)>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    return FilePtr(std::fopen(path.string().c_str(), mode), &std::fclose);
}

[[noreturn]] void png_fail(const std::string& what, const std::filesystem::path& path) {
    throw std::runtime_error("PNG " + what + ": " + path.string());
}

void write_png(const std::filesystem::path& path, int nx, int ny, int color_type, int bit_depth,
               const std::vector<png_bytep>& rows) {
    auto f = open_file(path, "wb");
    if (!f) png_fail("cannot open for writing", path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) png_fail("cannot allocate writer", path);
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        png_fail("write error", path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(nx), static_cast<png_uint_32>(ny), bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png);  // rows are host-order uint16
    png_write_image(png, const_cast<png_bytepp>(rows.data()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

GrayImage read_png_gray(const std::filesystem::path& path) {
    auto f = open_file(path, "rb");
    if (!f) png_fail("file not found", path);
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) png_fail("bad signature", path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) png_fail("cannot allocate reader", path);
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        png_fail("decode error", path);
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE) {
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
    if (depth == 16) png_set_swap(png);
    png_read_update_info(png, info);

    const int nx = static_cast<int>(png_get_image_width(png, info));
    const int ny = static_cast<int>(png_get_image_height(png, info));
    depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<unsigned char> buf(rowbytes * static_cast<std::size_t>(ny));
    std::vector<png_bytep> rows(static_cast<std::size_t>(ny));
    for (int y = 0; y < ny; ++y) rows[static_cast<std::size_t>(y)] = buf.data() + rowbytes * static_cast<std::size_t>(y);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    GrayImage out{Grid2D<uint16_t>(nx, ny, 0), depth == 16 ? 16 : 8};
    for (int y = 0; y < ny; ++y) {
        const unsigned char* row = rows[static_cast<std::size_t>(y)];
        for (int x = 0; x < nx; ++x) {
            if (depth == 16) {
                uint16_t v;
                std::memcpy(&v, row + 2 * x, 2);
                out.pixels.at(x, y) = v;
            } else {
                out.pixels.at(x, y) = row[x];
            }
        }
    }
    return out;
}

void write_png_gray8(const std::filesystem::path& path, const Grid2D<uint8_t>& img) {
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.ny()));
    for (int y = 0; y < img.ny(); ++y)
        rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(&img.values()[img.index(0, y)]);
    write_png(path, img.nx(), img.ny(), PNG_COLOR_TYPE_GRAY, 8, rows);
}

void write_png_gray16(const std::filesystem::path& path, const Grid2D<uint16_t>& img) {
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.ny()));
    for (int y = 0; y < img.ny(); ++y)
        rows[static_cast<std::size_t>(y)] =
            reinterpret_cast<png_bytep>(const_cast<uint16_t*>(&img.values()[img.index(0, y)]));
    write_png(path, img.nx(), img.ny(), PNG_COLOR_TYPE_GRAY, 16, rows);
}

void write_png_rgb(const std::filesystem::path& path, int nx, int ny, const std::vector<uint8_t>& rgb) {
    if (rgb.size() != static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * 3) {
        throw std::invalid_argument("write_png_rgb: buffer size mismatch");
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(ny));
    for (int y = 0; y < ny; ++y)
        rows[static_cast<std::size_t>(y)] =
            const_cast<png_bytep>(rgb.data() + static_cast<std::size_t>(y) * static_cast<std::size_t>(nx) * 3);
    write_png(path, nx, ny, PNG_COLOR_TYPE_RGB, 8, rows);
}

}  // namespace hasa
