#include "hasa/distance.hpp"

#include <stdexcept>

namespace hasa {

namespace {

// 1D lower envelope of parabolas f(q) + (p - q)^2 over finite sites.
// `line` is read and overwritten in place; scratch buffers are reused across calls.
void envelope_pass(double* line, int n, std::size_t stride, std::vector<double>& f, std::vector<int>& v,
                   std::vector<double>& z) {
    f.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) f[static_cast<std::size_t>(i)] = line[static_cast<std::size_t>(i) * stride];

    v.resize(static_cast<std::size_t>(n));
    z.resize(static_cast<std::size_t>(n) + 1);
    int k = -1;
    for (int q = 0; q < n; ++q) {
        const double fq = f[static_cast<std::size_t>(q)];
        if (fq == kNoSeed) continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kNoSeed;
            z[1] = kNoSeed;
            continue;
        }
        double s = 0.0;
        for (;;) {
            const int r = v[static_cast<std::size_t>(k)];
            const double fr = f[static_cast<std::size_t>(r)];
            s = ((fq + static_cast<double>(q) * q) - (fr + static_cast<double>(r) * r)) / (2.0 * (q - r));
            if (s <= z[static_cast<std::size_t>(k)] && k > 0) {
                --k;
                continue;
            }
            if (s <= z[static_cast<std::size_t>(k)]) {
                // k == 0 and the new parabola dominates everywhere.
                k = -1;
            }
            break;
        }
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        z[static_cast<std::size_t>(k)] = k == 0 ? -kNoSeed : s;
        z[static_cast<std::size_t>(k) + 1] = kNoSeed;
    }
    if (k < 0) return;  // no finite site: the line stays at kNoSeed

    int j = 0;
    for (int p = 0; p < n; ++p) {
        while (z[static_cast<std::size_t>(j) + 1] < p) ++j;
        const int r = v[static_cast<std::size_t>(j)];
        const double d = static_cast<double>(p - r);
        line[static_cast<std::size_t>(p) * stride] = f[static_cast<std::size_t>(r)] + d * d;
    }
}

}  // namespace

std::vector<double> squared_distance_to_seeds(std::span<const uint8_t> seeds, int nx, int ny, int nz) {
    if (nx < 1 || ny < 1 || nz < 1) {
        throw std::invalid_argument("squared_distance_to_seeds: dimensions must be >= 1");
    }
    const std::size_t sx = 1;
    const std::size_t sy = static_cast<std::size_t>(nx);
    const std::size_t sz = static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
    if (seeds.size() != sz * static_cast<std::size_t>(nz)) {
        throw std::invalid_argument("squared_distance_to_seeds: seed buffer size mismatch");
    }
    std::vector<double> d(seeds.size());
    for (std::size_t i = 0; i < seeds.size(); ++i) d[i] = seeds[i] ? 0.0 : kNoSeed;

    std::vector<double> f;
    std::vector<int> v;
    std::vector<double> z;
    for (int iz = 0; iz < nz; ++iz)
        for (int iy = 0; iy < ny; ++iy) envelope_pass(d.data() + iz * sz + iy * sy, nx, sx, f, v, z);
    if (ny > 1) {
        for (int iz = 0; iz < nz; ++iz)
            for (int ix = 0; ix < nx; ++ix) envelope_pass(d.data() + iz * sz + ix * sx, ny, sy, f, v, z);
    }
    if (nz > 1) {
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix) envelope_pass(d.data() + iy * sy + ix * sx, nz, sz, f, v, z);
    }
    return d;
}

}  // namespace hasa
