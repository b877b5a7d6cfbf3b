// SPDX-License-Identifier: Apache-2.0
#include "edminvert/schedule.hpp"

#include <cmath>
#include <string>

#include "edminvert/errors.hpp"

namespace edminvert {

NoiseSchedule::NoiseSchedule(std::vector<double> sigmas, double sigma_data)
    : sigmas_(std::move(sigmas)), sigma_data_(sigma_data) {
    if (sigmas_.size() < 2) throw ConfigError("schedule needs at least two levels (T >= 1)");
    if (!(sigma_data_ > 0.0) || !std::isfinite(sigma_data_)) throw ConfigError("sigma_data must be > 0");
    if (!(sigmas_.front() >= 0.0)) throw ConfigError("schedule levels must be >= 0");
    if (!(sigmas_.back() <= 1e4)) throw ConfigError("schedule levels must not exceed 1e4");
    for (std::size_t i = 1; i < sigmas_.size(); ++i) {
        if (!(sigmas_[i] > sigmas_[i - 1])) {
            throw ConfigError("schedule must be strictly increasing; level " + std::to_string(i) +
                              " = " + std::to_string(sigmas_[i]) + " does not exceed level " +
                              std::to_string(i - 1) + " = " + std::to_string(sigmas_[i - 1]));
        }
    }
}

std::vector<double> karras_sigmas(const KarrasParams& p) {
    if (!(p.sigma_min > 0.0) || !(p.sigma_min <= p.sigma_max)) {
        throw ConfigError("karras schedule requires 0 < sigma_min <= sigma_max");
    }
    if (!(p.rho > 0.0)) throw ConfigError("karras schedule requires rho > 0");
    if (p.steps < 1) throw ConfigError("karras schedule requires at least one step");

    std::vector<double> sigmas(p.steps + 1);
    sigmas[0] = 0.0;
    if (p.steps == 1) {
        sigmas[1] = p.sigma_max;
        return sigmas;
    }
    const double lo = std::pow(p.sigma_min, 1.0 / p.rho);
    const double hi = std::pow(p.sigma_max, 1.0 / p.rho);
    const double span = static_cast<double>(p.steps - 1);
    for (std::size_t i = 1; i <= p.steps; ++i) {
        const double frac = static_cast<double>(p.steps - i) / span;
        sigmas[i] = std::pow(hi + frac * (lo - hi), p.rho);
    }
    // Pin the endpoints against pow round-off.
    sigmas[1] = p.sigma_min;
    sigmas[p.steps] = p.sigma_max;
    return sigmas;
}

NoiseSchedule build_karras_schedule(const KarrasParams& params) {
    return NoiseSchedule(karras_sigmas(params), params.sigma_data);
}

EdmCoefficients coefficients(double sigma, double sigma_data) {
    if (!(sigma > 0.0)) throw NumericalError("coefficients: sigma must be > 0 (c_noise undefined at 0)");
    if (!(sigma_data > 0.0)) throw ConfigError("coefficients: sigma_data must be > 0");
    const double total = sigma * sigma + sigma_data * sigma_data;
    const double root = std::sqrt(total);
    return {
        .c_skip = sigma_data * sigma_data / total,
        .c_out = sigma * sigma_data / root,
        .c_in = 1.0 / root,
        .c_noise = std::log(sigma) / 4.0,
    };
}

double input_scale(double sigma, double sigma_data) {
    return 1.0 / std::sqrt(sigma * sigma + sigma_data * sigma_data);
}

}  // namespace edminvert
