#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace hasa {

inline constexpr double kDiceEpsilon = 1e-5;

/// Soft DICE loss 1 - (2 sum(p g) + eps) / (sum(p) + sum(g) + eps).
double dice_loss(std::span<const float> prob, std::span<const uint8_t> label);
/// d dice_loss / d prob_i, written to `grad`.
void dice_loss_grad(std::span<const float> prob, std::span<const uint8_t> label, std::span<double> grad);

/// Mean of prob * (-distance) where `distance` is the label's signed distance
/// already clipped and scaled to [-1, 1] (positive inside). Lower when the
/// probability mass sits inside the label.
double boundary_loss(std::span<const float> prob, std::span<const float> distance);
void boundary_loss_grad(std::span<const float> distance, std::span<double> grad);

/// Blend weight sigma((dice - offset) / temperature) on the DICE term;
/// hard_switch replaces the logistic with a step at `offset`.
struct DynamicLossConfig {
    double offset = 0.5;
    double temperature = 1.0;
    bool hard_switch = false;
};

struct DynamicLossValue {
    double value = 0.0;
    double weight_dice = 0.0;      // weight on loss1
    double weight_boundary = 0.0;  // weight on loss2, = 1 - weight_dice
    double d_loss1 = 0.0;          // partial derivative w.r.t. loss1
    double d_loss2 = 0.0;          // partial derivative w.r.t. loss2
};

/// w * loss1 + (1 - w) * loss2 with w = sigma(loss1 - 0.5) by default.
DynamicLossValue dynamic_loss(double loss1, double loss2, const DynamicLossConfig& cfg = {});

struct LossEvaluation {
    double total = 0.0;
    double dice = 0.0;
    double boundary = 0.0;
    std::vector<double> grad;  // d total / d prob
};

/// Dynamic blend of dice_loss and boundary_loss with its gradient w.r.t. prob.
LossEvaluation evaluate_dynamic_loss(std::span<const float> prob, std::span<const uint8_t> label,
                                     std::span<const float> distance, const DynamicLossConfig& cfg = {},
                                     bool want_grad = true);

}  // namespace hasa
