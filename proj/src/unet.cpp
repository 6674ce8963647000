#include "hasa/unet.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>

#include "hasa/rng.hpp"

namespace hasa {

struct UNet3D::Conv3 {
    int cin = 0;
    int cout = 0;
    int k = 3;
    bool activate = true;
    std::size_t w_off = 0;
    std::size_t b_off = 0;
    // forward cache
    int d = 0, h = 0, w = 0;
    std::vector<float> padded;
    std::vector<float> out;
};

struct UNet3D::UpConv {
    int cin = 0;
    int cout = 0;
    std::size_t w_off = 0;
    std::size_t b_off = 0;
    Tensor input;
};

struct UNet3D::Pool {
    int d = 0, h = 0, w = 0;  // input size
    int c = 0;
    std::vector<uint8_t> argmax;
};

namespace {

struct PaddedGeometry {
    int pad, pd, ph, pw;
    std::size_t np;
    std::size_t start;
    std::size_t length;
    std::vector<std::ptrdiff_t> offsets;

    PaddedGeometry(int k, int d, int h, int w) {
        pad = k / 2;
        pd = d + 2 * pad;
        ph = h + 2 * pad;
        pw = w + 2 * pad;
        np = static_cast<std::size_t>(pd) * ph * pw;
        start = index(0, 0, 0);
        length = index(d - 1, h - 1, w - 1) + 1 - start;
        for (int dz = 0; dz < k; ++dz)
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx)
                    offsets.push_back(static_cast<std::ptrdiff_t>(dz - pad) * ph * pw +
                                      static_cast<std::ptrdiff_t>(dy - pad) * pw + (dx - pad));
    }
    // flat index of interior voxel (z,y,x)
    std::size_t index(int z, int y, int x) const {
        return (static_cast<std::size_t>(z + pad) * ph + static_cast<std::size_t>(y + pad)) * pw +
               static_cast<std::size_t>(x + pad);
    }
};

std::size_t chunk_columns(std::size_t rows, std::size_t length) {
    const std::size_t target = (std::size_t{1} << 18) / std::max<std::size_t>(rows, 1);
    return std::clamp<std::size_t>(target, 256, std::max<std::size_t>(length, 1));
}

void fill_columns(const std::vector<float>& padded, const PaddedGeometry& g, int cin, std::size_t j0, std::size_t n,
                  float* col) {
    const std::size_t kk = g.offsets.size();
    for (std::size_t ki = 0; ki < kk; ++ki) {
        for (int c = 0; c < cin; ++c) {
            const float* src = padded.data() + static_cast<std::size_t>(c) * g.np +
                               static_cast<std::size_t>(static_cast<std::ptrdiff_t>(g.start + j0) + g.offsets[ki]);
            std::memcpy(col + (ki * static_cast<std::size_t>(cin) + static_cast<std::size_t>(c)) * n, src,
                        n * sizeof(float));
        }
    }
}

void he_init(std::span<float> w, double fan_in, double gain2, Rng& rng) {
    std::normal_distribution<double> nd(0.0, std::sqrt(gain2 / fan_in));
    for (auto& v : w) v = static_cast<float>(nd(rng));
}

void conv_forward(UNet3D::Conv3& L, const float* params, const Tensor& in, Tensor& out, float slope) {
    if (in.c != L.cin) throw std::invalid_argument("conv: channel mismatch");
    L.d = in.d;
    L.h = in.h;
    L.w = in.w;
    const PaddedGeometry g(L.k, in.d, in.h, in.w);
    L.padded.assign(static_cast<std::size_t>(L.cin) * g.np, 0.0f);
    for (int c = 0; c < L.cin; ++c)
        for (int z = 0; z < in.d; ++z)
            for (int y = 0; y < in.h; ++y)
                std::memcpy(L.padded.data() + static_cast<std::size_t>(c) * g.np + g.index(z, y, 0),
                            in.channel(c) + (static_cast<std::size_t>(z) * in.h + y) * in.w, in.w * sizeof(float));

    const std::size_t K = g.offsets.size() * static_cast<std::size_t>(L.cin);
    const std::size_t n_chunk = chunk_columns(K, g.length);
    std::vector<float> buf(static_cast<std::size_t>(L.cout) * g.length);
    std::vector<float> col(K * n_chunk);
    const float* W = params + L.w_off;
    for (std::size_t j0 = 0; j0 < g.length; j0 += n_chunk) {
        const std::size_t n = std::min(n_chunk, g.length - j0);
        fill_columns(L.padded, g, L.cin, j0, n, col.data());
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, L.cout, static_cast<int>(n), static_cast<int>(K), 1.0f,
                    W, static_cast<int>(K), col.data(), static_cast<int>(n), 0.0f, buf.data() + j0,
                    static_cast<int>(g.length));
    }

    out = Tensor(L.cout, in.d, in.h, in.w);
    const float* bias = params + L.b_off;
    for (int co = 0; co < L.cout; ++co) {
        const float b = bias[co];
        float* dst = out.channel(co);
        for (int z = 0; z < in.d; ++z)
            for (int y = 0; y < in.h; ++y) {
                const float* src = buf.data() + static_cast<std::size_t>(co) * g.length + (g.index(z, y, 0) - g.start);
                float* row = dst + (static_cast<std::size_t>(z) * in.h + y) * in.w;
                for (int x = 0; x < in.w; ++x) {
                    const float v = src[x] + b;
                    row[x] = (L.activate && v < 0.0f) ? v * slope : v;
                }
            }
    }
    if (L.activate) L.out = out.data;
}

Tensor conv_backward(UNet3D::Conv3& L, const float* params, float* grads, Tensor g_out, bool need_dx, float slope) {
    if (L.activate) {
        for (std::size_t i = 0; i < g_out.data.size(); ++i)
            if (!(L.out[i] > 0.0f)) g_out.data[i] *= slope;
    }
    const PaddedGeometry g(L.k, L.d, L.h, L.w);
    float* db = grads + L.b_off;
    for (int co = 0; co < L.cout; ++co) {
        double acc = 0.0;
        const float* src = g_out.channel(co);
        for (std::size_t i = 0; i < g_out.spatial(); ++i) acc += src[i];
        db[co] += static_cast<float>(acc);
    }
    std::vector<float> dbuf(static_cast<std::size_t>(L.cout) * g.length, 0.0f);
    for (int co = 0; co < L.cout; ++co)
        for (int z = 0; z < L.d; ++z)
            for (int y = 0; y < L.h; ++y)
                std::memcpy(dbuf.data() + static_cast<std::size_t>(co) * g.length + (g.index(z, y, 0) - g.start),
                            g_out.channel(co) + (static_cast<std::size_t>(z) * L.h + y) * L.w, L.w * sizeof(float));

    const std::size_t K = g.offsets.size() * static_cast<std::size_t>(L.cin);
    const std::size_t n_chunk = chunk_columns(K, g.length);
    std::vector<float> col(K * n_chunk);
    std::vector<float> dcol;
    std::vector<float> dpad;
    if (need_dx) {
        dcol.resize(K * n_chunk);
        dpad.assign(static_cast<std::size_t>(L.cin) * g.np, 0.0f);
    }
    const float* W = params + L.w_off;
    float* dW = grads + L.w_off;
    for (std::size_t j0 = 0; j0 < g.length; j0 += n_chunk) {
        const std::size_t n = std::min(n_chunk, g.length - j0);
        fill_columns(L.padded, g, L.cin, j0, n, col.data());
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, L.cout, static_cast<int>(K), static_cast<int>(n), 1.0f,
                    dbuf.data() + j0, static_cast<int>(g.length), col.data(), static_cast<int>(n), 1.0f, dW,
                    static_cast<int>(K));
        if (!need_dx) continue;
        cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(K), static_cast<int>(n), L.cout, 1.0f, W,
                    static_cast<int>(K), dbuf.data() + j0, static_cast<int>(g.length), 0.0f, dcol.data(),
                    static_cast<int>(n));
        for (std::size_t ki = 0; ki < g.offsets.size(); ++ki)
            for (int c = 0; c < L.cin; ++c) {
                float* dst = dpad.data() + static_cast<std::size_t>(c) * g.np +
                             static_cast<std::size_t>(static_cast<std::ptrdiff_t>(g.start + j0) + g.offsets[ki]);
                const float* src = dcol.data() + (ki * static_cast<std::size_t>(L.cin) + static_cast<std::size_t>(c)) * n;
                for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
            }
    }
    if (!need_dx) return {};
    Tensor dx(L.cin, L.d, L.h, L.w);
    for (int c = 0; c < L.cin; ++c)
        for (int z = 0; z < L.d; ++z)
            for (int y = 0; y < L.h; ++y)
                std::memcpy(dx.channel(c) + (static_cast<std::size_t>(z) * L.h + y) * L.w,
                            dpad.data() + static_cast<std::size_t>(c) * g.np + g.index(z, y, 0), L.w * sizeof(float));
    return dx;
}

Tensor pool_forward(UNet3D::Pool& P, const Tensor& in) {
    if (in.d % 2 || in.h % 2 || in.w % 2) throw std::invalid_argument("max pool: odd spatial size");
    P.c = in.c;
    P.d = in.d;
    P.h = in.h;
    P.w = in.w;
    Tensor out(in.c, in.d / 2, in.h / 2, in.w / 2);
    P.argmax.assign(out.data.size(), 0);
    std::size_t o = 0;
    for (int c = 0; c < in.c; ++c) {
        const float* src = in.channel(c);
        for (int z = 0; z < out.d; ++z)
            for (int y = 0; y < out.h; ++y)
                for (int x = 0; x < out.w; ++x, ++o) {
                    float best = -INFINITY;
                    uint8_t arg = 0;
                    for (int a = 0; a < 8; ++a) {
                        const int zz = 2 * z + (a >> 2), yy = 2 * y + ((a >> 1) & 1), xx = 2 * x + (a & 1);
                        const float v = src[(static_cast<std::size_t>(zz) * in.h + yy) * in.w + xx];
                        if (v > best) {
                            best = v;
                            arg = static_cast<uint8_t>(a);
                        }
                    }
                    out.data[o] = best;
                    P.argmax[o] = arg;
                }
    }
    return out;
}

Tensor pool_backward(const UNet3D::Pool& P, const Tensor& g) {
    Tensor dx(P.c, P.d, P.h, P.w);
    std::size_t o = 0;
    for (int c = 0; c < P.c; ++c) {
        float* dst = dx.channel(c);
        for (int z = 0; z < g.d; ++z)
            for (int y = 0; y < g.h; ++y)
                for (int x = 0; x < g.w; ++x, ++o) {
                    const int a = P.argmax[o];
                    const int zz = 2 * z + (a >> 2), yy = 2 * y + ((a >> 1) & 1), xx = 2 * x + (a & 1);
                    dst[(static_cast<std::size_t>(zz) * P.h + yy) * P.w + xx] += g.data[o];
                }
    }
    return dx;
}

Tensor up_forward(UNet3D::UpConv& U, const float* params, const Tensor& in) {
    U.input = in;
    const int N = static_cast<int>(in.spatial());
    const int rows = 8 * U.cout;
    std::vector<float> t(static_cast<std::size_t>(rows) * N);
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, rows, N, U.cin, 1.0f, params + U.w_off, U.cin,
                in.data.data(), N, 0.0f, t.data(), N);
    Tensor out(U.cout, 2 * in.d, 2 * in.h, 2 * in.w);
    const float* bias = params + U.b_off;
    for (int a = 0; a < 8; ++a) {
        const int az = a >> 2, ay = (a >> 1) & 1, ax = a & 1;
        for (int co = 0; co < U.cout; ++co) {
            const float* src = t.data() + static_cast<std::size_t>(a * U.cout + co) * N;
            float* dst = out.channel(co);
            std::size_t n = 0;
            for (int z = 0; z < in.d; ++z)
                for (int y = 0; y < in.h; ++y)
                    for (int x = 0; x < in.w; ++x, ++n)
                        dst[(static_cast<std::size_t>(2 * z + az) * out.h + (2 * y + ay)) * out.w + (2 * x + ax)] =
                            src[n] + bias[co];
        }
    }
    return out;
}

Tensor up_backward(UNet3D::UpConv& U, const float* params, float* grads, const Tensor& g) {
    const Tensor& in = U.input;
    const int N = static_cast<int>(in.spatial());
    const int rows = 8 * U.cout;
    std::vector<float> G(static_cast<std::size_t>(rows) * N);
    float* db = grads + U.b_off;
    for (int a = 0; a < 8; ++a) {
        const int az = a >> 2, ay = (a >> 1) & 1, ax = a & 1;
        for (int co = 0; co < U.cout; ++co) {
            float* dst = G.data() + static_cast<std::size_t>(a * U.cout + co) * N;
            const float* src = g.channel(co);
            std::size_t n = 0;
            double acc = 0.0;
            for (int z = 0; z < in.d; ++z)
                for (int y = 0; y < in.h; ++y)
                    for (int x = 0; x < in.w; ++x, ++n) {
                        dst[n] = src[(static_cast<std::size_t>(2 * z + az) * g.h + (2 * y + ay)) * g.w + (2 * x + ax)];
                        acc += dst[n];
                    }
            db[co] += static_cast<float>(acc);
        }
    }
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, rows, U.cin, N, 1.0f, G.data(), N, in.data.data(), N, 1.0f,
                grads + U.w_off, U.cin);
    Tensor dx(in.c, in.d, in.h, in.w);
    cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, U.cin, N, rows, 1.0f, params + U.w_off, U.cin, G.data(), N,
                0.0f, dx.data.data(), N);
    return dx;
}

Tensor concat(const Tensor& a, const Tensor& b) {
    Tensor out(a.c + b.c, a.d, a.h, a.w);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
    return out;
}

std::pair<Tensor, Tensor> split(const Tensor& t, int first) {
    Tensor a(first, t.d, t.h, t.w);
    Tensor b(t.c - first, t.d, t.h, t.w);
    std::copy(t.data.begin(), t.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()), a.data.begin());
    std::copy(t.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()), t.data.end(), b.data.begin());
    return {std::move(a), std::move(b)};
}

struct Planner {
    std::size_t size = 0;
    UNet3D::Conv3 conv(int cin, int cout, int k, bool act) {
        UNet3D::Conv3 c;
        c.cin = cin;
        c.cout = cout;
        c.k = k;
        c.activate = act;
        c.w_off = size;
        size += static_cast<std::size_t>(cout) * cin * k * k * k;
        c.b_off = size;
        size += static_cast<std::size_t>(cout);
        return c;
    }
    UNet3D::UpConv up(int cin, int cout) {
        UNet3D::UpConv u;
        u.cin = cin;
        u.cout = cout;
        u.w_off = size;
        size += static_cast<std::size_t>(8) * cout * cin;
        u.b_off = size;
        size += static_cast<std::size_t>(cout);
        return u;
    }
};

void validate(const UNetArchitecture& a) {
    if (a.in_channels < 1) throw std::invalid_argument("UNet3D: in_channels must be >= 1");
    if (a.depth < 1 || a.depth > 6) throw std::invalid_argument("UNet3D: depth must be in [1,6]");
    if (a.base_filters < 1) throw std::invalid_argument("UNet3D: base_filters must be >= 1");
}

// Layer plan shared by the constructor and unet_parameter_count.
template <typename Visitor>
void plan_layers(const UNetArchitecture& a, Planner& p, Visitor&& v) {
    int c = a.in_channels;
    for (int l = 0; l < a.depth; ++l) {
        const int mid = a.base_filters << l;
        const int outc = a.base_filters << (l + 1);
        v.enc(p.conv(c, mid, 3, true), p.conv(mid, outc, 3, true), outc);
        c = outc;
    }
    const int mid = a.base_filters << a.depth;
    const int outc = a.base_filters << (a.depth + 1);
    v.bottleneck(p.conv(c, mid, 3, true), p.conv(mid, outc, 3, true));
    c = outc;
    for (int l = a.depth - 1; l >= 0; --l) {
        const int skip = a.base_filters << (l + 1);
        auto u = p.up(c, c);
        auto da = p.conv(skip + c, skip, 3, true);
        auto dbb = p.conv(skip, skip, 3, true);
        v.dec(std::move(u), std::move(da), std::move(dbb));
        c = skip;
    }
    v.head(p.conv(c, 1, 1, false));
}

struct NullVisitor {
    void enc(UNet3D::Conv3&&, UNet3D::Conv3&&, int) {}
    void bottleneck(UNet3D::Conv3&&, UNet3D::Conv3&&) {}
    void dec(UNet3D::UpConv&&, UNet3D::Conv3&&, UNet3D::Conv3&&) {}
    void head(UNet3D::Conv3&&) {}
};

}  // namespace

std::size_t unet_parameter_count(const UNetArchitecture& arch) {
    validate(arch);
    Planner p;
    plan_layers(arch, p, NullVisitor{});
    return p.size;
}

UNet3D::UNet3D(const UNetArchitecture& arch, uint64_t seed) : arch_(arch) {
    validate(arch);
    Planner p;
    struct Builder {
        UNet3D& net;
        void enc(Conv3&& a, Conv3&& b, int skip) {
            net.enc_a_.push_back(std::move(a));
            net.enc_b_.push_back(std::move(b));
            net.skip_channels_.push_back(skip);
            net.pool_.emplace_back();
        }
        void bottleneck(Conv3&& a, Conv3&& b) {
            net.bottleneck_.push_back(std::move(a));
            net.bottleneck_.push_back(std::move(b));
        }
        // decoder layers are produced deepest first; stored by level index
        void dec(UpConv&& u, Conv3&& a, Conv3&& b) {
            net.up_.insert(net.up_.begin(), std::move(u));
            net.dec_a_.insert(net.dec_a_.begin(), std::move(a));
            net.dec_b_.insert(net.dec_b_.begin(), std::move(b));
        }
        void head(Conv3&& h) { net.head_.push_back(std::move(h)); }
    };
    plan_layers(arch, p, Builder{*this});
    params_.assign(p.size, 0.0f);
    grads_.assign(p.size, 0.0f);

    Rng rng = make_rng(seed, {0x756e6574ULL});
    const double gain2 = 2.0 / (1.0 + static_cast<double>(arch.leaky_slope) * arch.leaky_slope);
    auto init_conv = [&](const Conv3& c) {
        const std::size_t nw = static_cast<std::size_t>(c.cout) * c.cin * c.k * c.k * c.k;
        he_init(std::span<float>(params_).subspan(c.w_off, nw), static_cast<double>(c.cin) * c.k * c.k * c.k,
                c.activate ? gain2 : 1.0, rng);
    };
    for (int l = 0; l < arch.depth; ++l) {
        init_conv(enc_a_[static_cast<std::size_t>(l)]);
        init_conv(enc_b_[static_cast<std::size_t>(l)]);
    }
    for (const auto& c : bottleneck_) init_conv(c);
    for (int l = arch.depth - 1; l >= 0; --l) {
        const auto& u = up_[static_cast<std::size_t>(l)];
        he_init(std::span<float>(params_).subspan(u.w_off, static_cast<std::size_t>(8) * u.cout * u.cin), u.cin, 1.0,
                rng);
        init_conv(dec_a_[static_cast<std::size_t>(l)]);
        init_conv(dec_b_[static_cast<std::size_t>(l)]);
    }
    init_conv(head_.front());
}

UNet3D::~UNet3D() = default;
UNet3D::UNet3D(UNet3D&&) noexcept = default;
UNet3D& UNet3D::operator=(UNet3D&&) noexcept = default;

void UNet3D::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0f); }

std::size_t UNet3D::first_conv_parameter_count() const {
    const auto& c = enc_a_.front();
    return static_cast<std::size_t>(c.cout) * c.cin * 27 + static_cast<std::size_t>(c.cout);
}

Tensor UNet3D::forward(const Tensor& input) {
    const int m = 1 << arch_.depth;
    if (input.c != arch_.in_channels) {
        throw std::invalid_argument("UNet3D: expected " + std::to_string(arch_.in_channels) + " input channels, got " +
                                    std::to_string(input.c));
    }
    if (input.d % m || input.h % m || input.w % m) {
        throw std::invalid_argument("UNet3D: spatial size must be divisible by " + std::to_string(m));
    }
    const float slope = arch_.leaky_slope;
    const float* P = params_.data();
    std::vector<Tensor> skips(static_cast<std::size_t>(arch_.depth));
    Tensor x = input;
    Tensor y;
    for (std::size_t l = 0; l < static_cast<std::size_t>(arch_.depth); ++l) {
        conv_forward(enc_a_[l], P, x, y, slope);
        conv_forward(enc_b_[l], P, y, x, slope);
        skips[l] = x;
        x = pool_forward(pool_[l], x);
    }
    conv_forward(bottleneck_[0], P, x, y, slope);
    conv_forward(bottleneck_[1], P, y, x, slope);
    for (int l = arch_.depth - 1; l >= 0; --l) {
        const auto li = static_cast<std::size_t>(l);
        Tensor u = up_forward(up_[li], P, x);
        Tensor cat = concat(skips[li], u);
        conv_forward(dec_a_[li], P, cat, y, slope);
        conv_forward(dec_b_[li], P, y, x, slope);
    }
    Tensor logits;
    conv_forward(head_.front(), P, x, logits, slope);
    has_forward_ = true;
    return logits;
}

void UNet3D::backward(const Tensor& d_logits) {
    if (!has_forward_) throw std::logic_error("UNet3D::backward called before forward");
    const float slope = arch_.leaky_slope;
    const float* P = params_.data();
    float* G = grads_.data();
    Tensor g = conv_backward(head_.front(), P, G, d_logits, true, slope);
    std::vector<Tensor> skip_grads(static_cast<std::size_t>(arch_.depth));
    for (std::size_t l = 0; l < static_cast<std::size_t>(arch_.depth); ++l) {
        g = conv_backward(dec_b_[l], P, G, std::move(g), true, slope);
        g = conv_backward(dec_a_[l], P, G, std::move(g), true, slope);
        auto [gs, gu] = split(g, skip_channels_[l]);
        skip_grads[l] = std::move(gs);
        g = up_backward(up_[l], P, G, gu);
    }
    g = conv_backward(bottleneck_[1], P, G, std::move(g), true, slope);
    g = conv_backward(bottleneck_[0], P, G, std::move(g), true, slope);
    for (int l = arch_.depth - 1; l >= 0; --l) {
        const auto li = static_cast<std::size_t>(l);
        g = pool_backward(pool_[li], g);
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += skip_grads[li].data[i];
        g = conv_backward(enc_b_[li], P, G, std::move(g), true, slope);
        g = conv_backward(enc_a_[li], P, G, std::move(g), l > 0, slope);
    }
}

}  // namespace hasa
