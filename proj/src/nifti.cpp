#include "hasa/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <type_traits>

namespace hasa {

namespace {

#pragma pack(push, 1)
struct Nifti1Header {
    int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    int32_t extents;
    int16_t session_error;
    char regular;
    char dim_info;
    int16_t dim[8];
    float intent_p1;
    float intent_p2;
    float intent_p3;
    int16_t intent_code;
    int16_t datatype;
    int16_t bitpix;
    int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max;
    float cal_min;
    float slice_duration;
    float toffset;
    int32_t glmax;
    int32_t glmin;
    char descrip[80];
    char aux_file[24];
    int16_t qform_code;
    int16_t sform_code;
    float quatern_b;
    float quatern_c;
    float quatern_d;
    float qoffset_x;
    float qoffset_y;
    float qoffset_z;
    float srow_x[4];
    float srow_y[4];
    float srow_z[4];
    char intent_name[16];
    char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

enum DataType : int16_t {
    kUInt8 = 2,
    kInt16 = 4,
    kInt32 = 8,
    kFloat32 = 16,
    kFloat64 = 64,
    kInt8 = 256,
    kUInt16 = 512,
    kUInt32 = 768,
};

template <typename T>
void byteswap_inplace(T& v) {
    auto* p = reinterpret_cast<unsigned char*>(&v);
    std::reverse(p, p + sizeof(T));
}

void swap_header(Nifti1Header& h) {
    byteswap_inplace(h.sizeof_hdr);
    byteswap_inplace(h.extents);
    byteswap_inplace(h.session_error);
    for (auto& d : h.dim) byteswap_inplace(d);
    byteswap_inplace(h.intent_p1);
    byteswap_inplace(h.intent_p2);
    byteswap_inplace(h.intent_p3);
    byteswap_inplace(h.intent_code);
    byteswap_inplace(h.datatype);
    byteswap_inplace(h.bitpix);
    byteswap_inplace(h.slice_start);
    for (auto& p : h.pixdim) byteswap_inplace(p);
    byteswap_inplace(h.vox_offset);
    byteswap_inplace(h.scl_slope);
    byteswap_inplace(h.scl_inter);
    byteswap_inplace(h.slice_end);
    byteswap_inplace(h.cal_max);
    byteswap_inplace(h.cal_min);
    byteswap_inplace(h.slice_duration);
    byteswap_inplace(h.toffset);
    byteswap_inplace(h.glmax);
    byteswap_inplace(h.glmin);
    byteswap_inplace(h.qform_code);
    byteswap_inplace(h.sform_code);
    byteswap_inplace(h.quatern_b);
    byteswap_inplace(h.quatern_c);
    byteswap_inplace(h.quatern_d);
    byteswap_inplace(h.qoffset_x);
    byteswap_inplace(h.qoffset_y);
    byteswap_inplace(h.qoffset_z);
    for (auto& s : h.srow_x) byteswap_inplace(s);
    for (auto& s : h.srow_y) byteswap_inplace(s);
    for (auto& s : h.srow_z) byteswap_inplace(s);
}

struct GzCloser {
    void operator()(gzFile f) const {
        if (f) gzclose(f);
    }
};
using GzHandle = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

// gzread is transparent for uncompressed input, so one reader serves both suffixes.
std::vector<unsigned char> read_all(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw NiftiError("NIfTI file not found: " + path.string());
    }
    GzHandle f(gzopen(path.string().c_str(), "rb"));
    if (!f) {
        throw NiftiError("cannot open NIfTI file: " + path.string());
    }
    std::vector<unsigned char> buf;
    std::vector<unsigned char> chunk(1 << 20);
    for (;;) {
        int n = gzread(f.get(), chunk.data(), static_cast<unsigned>(chunk.size()));
        if (n < 0) {
            throw NiftiError("read error in " + path.string());
        }
        if (n == 0) break;
        buf.insert(buf.end(), chunk.begin(), chunk.begin() + n);
    }
    return buf;
}

bool has_gz_suffix(const std::filesystem::path& path) {
    return path.extension() == ".gz";
}

void write_all(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
    if (has_gz_suffix(path)) {
        GzHandle f(gzopen(path.string().c_str(), "wb6"));
        if (!f) {
            throw NiftiError("cannot write NIfTI file: " + path.string());
        }
        std::size_t off = 0;
        while (off < bytes.size()) {
            unsigned n = static_cast<unsigned>(std::min<std::size_t>(bytes.size() - off, 1u << 24));
            if (gzwrite(f.get(), bytes.data() + off, n) != static_cast<int>(n)) {
                throw NiftiError("write error in " + path.string());
            }
            off += n;
        }
        if (gzclose(f.release()) != Z_OK) {
            throw NiftiError("write error in " + path.string());
        }
        return;
    }
    std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.string().c_str(), "wb"), &std::fclose);
    if (!f) {
        throw NiftiError("cannot write NIfTI file: " + path.string());
    }
    if (std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size()) {
        throw NiftiError("write error in " + path.string());
    }
}

struct Decoded {
    Shape3 shape;
    Spacing3 spacing;
    Orientation orientation;
    std::vector<double> values;
};

template <typename T>
void decode_values(const unsigned char* src, std::size_t n, bool swap, double slope, double inter,
                   std::vector<double>& out) {
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        T v;
        std::memcpy(&v, src + i * sizeof(T), sizeof(T));
        if (swap) byteswap_inplace(v);
        out[i] = static_cast<double>(v) * slope + inter;
    }
}

Decoded decode(const std::filesystem::path& path) {
    const auto bytes = read_all(path);
    if (bytes.size() < sizeof(Nifti1Header)) {
        throw NiftiError("malformed NIfTI header (file too short): " + path.string());
    }
    Nifti1Header h;
    std::memcpy(&h, bytes.data(), sizeof h);
    bool swap = false;
    if (h.sizeof_hdr != 348) {
        swap_header(h);
        swap = true;
        if (h.sizeof_hdr != 348) {
            throw NiftiError("malformed NIfTI header (sizeof_hdr != 348): " + path.string());
        }
    }
    if (std::memcmp(h.magic, "n+1", 4) != 0) {
        throw NiftiError("not a single-file NIfTI-1 volume (magic mismatch): " + path.string());
    }
    const int ndim = h.dim[0];
    if (ndim < 1 || ndim > 7) {
        throw NiftiError("malformed NIfTI header (dim[0] = " + std::to_string(ndim) + "): " + path.string());
    }
    for (int d = 4; d <= ndim; ++d) {
        if (h.dim[d] != 1) {
            throw NiftiError("only 3D volumes are supported: " + path.string());
        }
    }
    Decoded out;
    out.shape.nx = h.dim[1];
    out.shape.ny = ndim >= 2 ? h.dim[2] : 1;
    out.shape.nz = ndim >= 3 ? h.dim[3] : 1;
    if (out.shape.nx < 1 || out.shape.ny < 1 || out.shape.nz < 1) {
        throw NiftiError("malformed NIfTI header (non-positive dimension): " + path.string());
    }
    auto pix = [&](int i) { return (i <= ndim && h.pixdim[i] > 0.0f) ? static_cast<double>(h.pixdim[i]) : 1.0; };
    out.spacing = Spacing3{pix(1), pix(2), pix(3)};
    out.orientation.qform_code = h.qform_code;
    out.orientation.sform_code = h.sform_code;
    out.orientation.qfac = h.pixdim[0] < 0.0f ? -1.0f : 1.0f;
    out.orientation.quatern = {h.quatern_b, h.quatern_c, h.quatern_d};
    out.orientation.qoffset = {h.qoffset_x, h.qoffset_y, h.qoffset_z};
    std::copy(std::begin(h.srow_x), std::end(h.srow_x), out.orientation.srow_x.begin());
    std::copy(std::begin(h.srow_y), std::end(h.srow_y), out.orientation.srow_y.begin());
    std::copy(std::begin(h.srow_z), std::end(h.srow_z), out.orientation.srow_z.begin());

    const std::size_t n = out.shape.voxels();
    const auto offset = static_cast<std::size_t>(h.vox_offset);
    if (offset < sizeof(Nifti1Header)) {
        throw NiftiError("malformed NIfTI header (vox_offset): " + path.string());
    }
    const double slope = (h.scl_slope == 0.0f || !std::isfinite(h.scl_slope)) ? 1.0 : h.scl_slope;
    const double inter = (h.scl_slope == 0.0f || !std::isfinite(h.scl_inter)) ? 0.0 : h.scl_inter;
    std::size_t elem = 0;
    switch (h.datatype) {
        case kUInt8:
        case kInt8: elem = 1; break;
        case kInt16:
        case kUInt16: elem = 2; break;
        case kInt32:
        case kUInt32:
        case kFloat32: elem = 4; break;
        case kFloat64: elem = 8; break;
        default:
            throw NiftiError("unsupported NIfTI datatype " + std::to_string(h.datatype) + ": " + path.string());
    }
    if (bytes.size() < offset + n * elem) {
        throw NiftiError("truncated NIfTI data: " + path.string());
    }
    const unsigned char* src = bytes.data() + offset;
    switch (h.datatype) {
        case kUInt8: decode_values<uint8_t>(src, n, swap, slope, inter, out.values); break;
        case kInt8: decode_values<int8_t>(src, n, swap, slope, inter, out.values); break;
        case kInt16: decode_values<int16_t>(src, n, swap, slope, inter, out.values); break;
        case kUInt16: decode_values<uint16_t>(src, n, swap, slope, inter, out.values); break;
        case kInt32: decode_values<int32_t>(src, n, swap, slope, inter, out.values); break;
        case kUInt32: decode_values<uint32_t>(src, n, swap, slope, inter, out.values); break;
        case kFloat32: decode_values<float>(src, n, swap, slope, inter, out.values); break;
        case kFloat64: decode_values<double>(src, n, swap, slope, inter, out.values); break;
        default: break;
    }
    return out;
}

Nifti1Header make_header(const Shape3& shape, const Spacing3& spacing, const Orientation& o, int16_t datatype,
                         int16_t bitpix) {
    Nifti1Header h{};
    h.sizeof_hdr = 348;
    h.regular = 'r';
    h.dim[0] = 3;
    h.dim[1] = static_cast<int16_t>(shape.nx);
    h.dim[2] = static_cast<int16_t>(shape.ny);
    h.dim[3] = static_cast<int16_t>(shape.nz);
    for (int d = 4; d < 8; ++d) h.dim[d] = 1;
    h.datatype = datatype;
    h.bitpix = bitpix;
    h.pixdim[0] = o.qfac;
    h.pixdim[1] = static_cast<float>(spacing.sx);
    h.pixdim[2] = static_cast<float>(spacing.sy);
    h.pixdim[3] = static_cast<float>(spacing.sz);
    for (int d = 4; d < 8; ++d) h.pixdim[d] = 1.0f;
    h.vox_offset = 352.0f;
    h.scl_slope = 1.0f;
    h.scl_inter = 0.0f;
    h.xyzt_units = 2 | 8;  // mm, s
    h.qform_code = o.qform_code;
    h.sform_code = o.sform_code;
    h.quatern_b = o.quatern[0];
    h.quatern_c = o.quatern[1];
    h.quatern_d = o.quatern[2];
    h.qoffset_x = o.qoffset[0];
    h.qoffset_y = o.qoffset[1];
    h.qoffset_z = o.qoffset[2];
    std::copy(o.srow_x.begin(), o.srow_x.end(), h.srow_x);
    std::copy(o.srow_y.begin(), o.srow_y.end(), h.srow_y);
    std::copy(o.srow_z.begin(), o.srow_z.end(), h.srow_z);
    std::memcpy(h.magic, "n+1", 4);
    return h;
}

template <typename Vol>
void write_volume(const Vol& v, const std::filesystem::path& path, int16_t datatype) {
    if (v.shape().nx > 32767 || v.shape().ny > 32767 || v.shape().nz > 32767) {
        throw NiftiError("volume too large for NIfTI-1 dims: " + to_string(v.shape()));
    }
    using T = typename std::remove_cvref_t<decltype(v.values())>::value_type;
    const auto h = make_header(v.shape(), v.spacing(), v.orientation(), datatype,
                               static_cast<int16_t>(sizeof(T) * 8));
    std::vector<unsigned char> bytes(352 + v.size() * sizeof(T), 0);
    std::memcpy(bytes.data(), &h, sizeof h);
    std::memcpy(bytes.data() + 352, v.values().data(), v.size() * sizeof(T));
    write_all(path, bytes);
}

}  // namespace

Volume3D load_volume(const std::filesystem::path& path) {
    auto d = decode(path);
    std::vector<float> data(d.values.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = static_cast<float>(d.values[i]);
        if (!std::isfinite(data[i])) {
            throw NiftiError("non-finite voxel value in " + path.string());
        }
    }
    Volume3D v(d.shape, d.spacing, std::move(data));
    v.set_orientation(d.orientation);
    return v;
}

LabelVolume load_label(const std::filesystem::path& path) {
    auto d = decode(path);
    std::vector<uint8_t> data(d.values.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double x = d.values[i];
        if (x == 0.0) {
            data[i] = 0;
        } else if (x == 1.0) {
            data[i] = 1;
        } else {
            throw NiftiError("non-binary label: value " + std::to_string(x) + " in " + path.string());
        }
    }
    LabelVolume v(d.shape, d.spacing, std::move(data));
    v.set_orientation(d.orientation);
    return v;
}

void save_volume(const Volume3D& v, const std::filesystem::path& path) {
    write_volume(v, path, kFloat32);
}

void save_volume(const LabelVolume& v, const std::filesystem::path& path) {
    if (!v.is_binary()) {
        throw std::invalid_argument("save_volume: label volume is not binary");
    }
    write_volume(v, path, kUInt8);
}

}  // namespace hasa
