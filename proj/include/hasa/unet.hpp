#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace hasa {

/// Channel-major dense activation: c planes of d x h x w, w fastest.
struct Tensor {
    int c = 0;
    int d = 0;
    int h = 0;
    int w = 0;
    std::vector<float> data;

    Tensor() = default;
    Tensor(int c_, int d_, int h_, int w_, float fill = 0.0f)
        : c(c_), d(d_), h(h_), w(w_), data(static_cast<std::size_t>(c_) * d_ * h_ * w_, fill) {}

    std::size_t spatial() const { return static_cast<std::size_t>(d) * h * w; }
    float* channel(int k) { return data.data() + static_cast<std::size_t>(k) * spatial(); }
    const float* channel(int k) const { return data.data() + static_cast<std::size_t>(k) * spatial(); }
};

struct UNetArchitecture {
    int in_channels = 2;
    int depth = 3;         // number of 2x downsamplings
    int base_filters = 16;
    float leaky_slope = 0.01f;
};

/// Analytic parameter count of the architecture below.
std::size_t unet_parameter_count(const UNetArchitecture& arch);

/// 3D U-Net with the classic channel plan: encoder level l applies
/// conv(-> b*2^l), conv(-> b*2^(l+1)) and 2x max pooling; the decoder mirrors it
/// with 2x transposed convolutions and skip concatenation; a 1x1x1 convolution
/// gives one logit per voxel. All 3x3x3 convolutions use zero padding and a
/// leaky ReLU. Spatial sizes must be divisible by 2^depth.
///
/// forward() caches activations; backward() accumulates into gradients().
class UNet3D {
public:
    UNet3D(const UNetArchitecture& arch, uint64_t seed);
    ~UNet3D();
    UNet3D(UNet3D&&) noexcept;
    UNet3D& operator=(UNet3D&&) noexcept;

    const UNetArchitecture& architecture() const { return arch_; }
    std::size_t parameter_count() const { return params_.size(); }
    std::span<float> parameters() { return params_; }
    std::span<const float> parameters() const { return params_; }
    std::span<float> gradients() { return grads_; }
    void zero_grad();
    /// Parameters of the first 3x3x3 convolution (weights and bias).
    std::size_t first_conv_parameter_count() const;

    /// Logits, shape 1 x d x h x w.
    Tensor forward(const Tensor& input);
    /// Gradient of the loss w.r.t. the logits of the last forward().
    void backward(const Tensor& d_logits);

    struct Conv3;
    struct UpConv;
    struct Pool;

private:
    UNetArchitecture arch_;
    std::vector<float> params_;
    std::vector<float> grads_;

    std::vector<Conv3> enc_a_, enc_b_, dec_a_, dec_b_;
    std::vector<UpConv> up_;
    std::vector<Pool> pool_;
    std::vector<Conv3> bottleneck_;
    std::vector<Conv3> head_;  // single 1x1x1 layer
    std::vector<int> skip_channels_;
    bool has_forward_ = false;
};

}  // namespace hasa
