#include "hasa/power.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "hasa/rng.hpp"

namespace hasa {

void PowerSpec::validate() const {
    if (n_cases < 1 || n_controls < 1) throw std::invalid_argument("power: group sizes must be >= 1");
    if (!(z > 0.0)) throw std::invalid_argument("power: z must be > 0");
    if (!std::isfinite(effect)) throw std::invalid_argument("power: effect must be finite");
    if (!(eps >= 0.0) || !std::isfinite(eps)) throw std::invalid_argument("power: eps must be >= 0");
}

double se_factor(long n_cases, long n_controls) {
    if (n_cases < 1 || n_controls < 1) throw std::invalid_argument("se_factor: group sizes must be >= 1");
    return std::sqrt(2.0 / static_cast<double>(n_cases) + 2.0 / static_cast<double>(n_controls));
}

double required_epsilon(const PowerSpec& spec) {
    spec.validate();
    return spec.effect / (spec.z * se_factor(spec.n_cases, spec.n_controls));
}

double required_accuracy(const PowerSpec& spec) { return 1.0 - required_epsilon(spec); }

double test_size(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double monte_carlo_power(const PowerSpec& spec, uint64_t seed) {
    spec.validate();
    if (spec.trials < 1000) throw std::invalid_argument("monte_carlo_power: trials must be >= 1000");
    const double se = spec.eps * se_factor(spec.n_cases, spec.n_controls);
    const double noise_std = std::sqrt(2.0) * spec.eps;
    long detected = 0;
    for (long t = 0; t < spec.trials; ++t) {
        Rng rng = make_rng(seed, {0x706f776572ULL, static_cast<uint64_t>(t)});
        std::normal_distribution<double> noise(0.0, 1.0);
        double sum_cases = 0.0, sum_controls = 0.0;
        for (long i = 0; i < spec.n_cases; ++i) sum_cases += spec.effect + noise_std * noise(rng);
        for (long i = 0; i < spec.n_controls; ++i) sum_controls += noise_std * noise(rng);
        const double diff = sum_cases / static_cast<double>(spec.n_cases) -
                            sum_controls / static_cast<double>(spec.n_controls);
        const bool hit = se > 0.0 ? diff / se >= spec.z : diff > 0.0;
        detected += hit;
    }
    return static_cast<double>(detected) / static_cast<double>(spec.trials);
}

}  // namespace hasa
