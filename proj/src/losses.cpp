#include "hasa/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "hasa/sdm.hpp"

namespace hasa {

namespace {

void require_same(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

struct DiceSums {
    double pg = 0.0;
    double p = 0.0;
    double g = 0.0;
};

DiceSums dice_sums(std::span<const float> prob, std::span<const uint8_t> label) {
    DiceSums s;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        const double p = prob[i];
        const double g = label[i];
        s.pg += p * g;
        s.p += p;
        s.g += g;
    }
    return s;
}

}  // namespace

double dice_loss(std::span<const float> prob, std::span<const uint8_t> label) {
    require_same(prob.size(), label.size(), "dice_loss");
    const auto s = dice_sums(prob, label);
    return 1.0 - (2.0 * s.pg + kDiceEpsilon) / (s.p + s.g + kDiceEpsilon);
}

void dice_loss_grad(std::span<const float> prob, std::span<const uint8_t> label, std::span<double> grad) {
    require_same(prob.size(), label.size(), "dice_loss_grad");
    require_same(prob.size(), grad.size(), "dice_loss_grad");
    const auto s = dice_sums(prob, label);
    const double num = 2.0 * s.pg + kDiceEpsilon;
    const double den = s.p + s.g + kDiceEpsilon;
    const double inv_den2 = 1.0 / (den * den);
    for (std::size_t i = 0; i < prob.size(); ++i) {
        grad[i] = -(2.0 * label[i] * den - num) * inv_den2;
    }
}

double boundary_loss(std::span<const float> prob, std::span<const float> distance) {
    require_same(prob.size(), distance.size(), "boundary_loss");
    if (prob.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) acc -= static_cast<double>(prob[i]) * distance[i];
    return acc / static_cast<double>(prob.size());
}

void boundary_loss_grad(std::span<const float> distance, std::span<double> grad) {
    require_same(distance.size(), grad.size(), "boundary_loss_grad");
    const double inv_n = distance.empty() ? 0.0 : 1.0 / static_cast<double>(distance.size());
    for (std::size_t i = 0; i < distance.size(); ++i) grad[i] = -static_cast<double>(distance[i]) * inv_n;
}

DynamicLossValue dynamic_loss(double loss1, double loss2, const DynamicLossConfig& cfg) {
    if (!(cfg.temperature > 0.0)) throw std::invalid_argument("dynamic_loss: temperature must be > 0");
    DynamicLossValue v;
    if (cfg.hard_switch) {
        v.weight_dice = loss1 >= cfg.offset ? 1.0 : 0.0;
        v.weight_boundary = 1.0 - v.weight_dice;
        v.value = v.weight_dice * loss1 + v.weight_boundary * loss2;
        v.d_loss1 = v.weight_dice;
        v.d_loss2 = v.weight_boundary;
        return v;
    }
    const double w = logistic((loss1 - cfg.offset) / cfg.temperature);
    v.weight_dice = w;
    v.weight_boundary = 1.0 - w;
    v.value = w * loss1 + (1.0 - w) * loss2;
    const double dw = w * (1.0 - w) / cfg.temperature;
    v.d_loss1 = w + dw * (loss1 - loss2);
    v.d_loss2 = 1.0 - w;
    return v;
}

LossEvaluation evaluate_dynamic_loss(std::span<const float> prob, std::span<const uint8_t> label,
                                     std::span<const float> distance, const DynamicLossConfig& cfg, bool want_grad) {
    require_same(prob.size(), label.size(), "evaluate_dynamic_loss");
    require_same(prob.size(), distance.size(), "evaluate_dynamic_loss");
    LossEvaluation out;
    out.dice = dice_loss(prob, label);
    out.boundary = boundary_loss(prob, distance);
    const auto blend = dynamic_loss(out.dice, out.boundary, cfg);
    out.total = blend.value;
    if (!want_grad) return out;
    out.grad.assign(prob.size(), 0.0);
    std::vector<double> g2(prob.size());
    dice_loss_grad(prob, label, out.grad);
    boundary_loss_grad(distance, g2);
    for (std::size_t i = 0; i < prob.size(); ++i) out.grad[i] = blend.d_loss1 * out.grad[i] + blend.d_loss2 * g2[i];
    return out;
}

}  // namespace hasa
