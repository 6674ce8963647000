#pragma once

#include <cstdint>

namespace hasa {

struct PowerSpec {
    long n_cases = 240;
    long n_controls = 10000;
    double z = 1.96;
    double effect = 0.10;  // relative volume change in cases
    double eps = 0.0;      // relative per-measurement error (simulator)
    long trials = 10000;   // simulator
    void validate() const;
};

/// sqrt(2/n_cases + 2/n_controls).
double se_factor(long n_cases, long n_controls);

/// Largest relative measurement error at which the effect still reaches the
/// critical z: effect / (z * se_factor).
double required_epsilon(const PowerSpec& spec);
/// 1 - required_epsilon.
double required_accuracy(const PowerSpec& spec);

/// Fraction of simulated studies that detect the effect. Each patient's
/// measured relative change is effect (cases) or 0 (controls) plus Gaussian
/// noise of std sqrt(2) * eps; the one-sided statistic
/// (mean_cases - mean_controls) / (eps * se_factor) is compared with z.
/// Trial t draws from its own stream of `seed`.
double monte_carlo_power(const PowerSpec& spec, uint64_t seed);

/// Rejection rate of the one-sided test under no effect: 1 - Phi(z).
double test_size(double z);

}  // namespace hasa
