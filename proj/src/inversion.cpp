// SPDX-License-Identifier: Apache-2.0
#include "edminvert/inversion.hpp"

#include "edminvert/errors.hpp"

namespace edminvert {

std::string to_string(InversionMode mode) { return mode == InversionMode::naive ? "naive" : "extrapolated"; }

InversionMode inversion_mode_from_string(const std::string& name) {
    if (name == "naive") return InversionMode::naive;
    if (name == "extrapolated") return InversionMode::extrapolated;
    throw ConfigError("unknown inversion mode '" + name + "' (expected naive or extrapolated)");
}

void InversionConfig::validate(const NoiseSchedule& schedule) const {
    if (!(sigma_threshold >= 0.0)) throw ConfigError("sigma_threshold must be >= 0");
    if (mode == InversionMode::extrapolated && sigma_threshold == 0.0 && schedule.sigma(1) <= kUnguardedSigmaFloor) {
        throw ConfigError("sigma_threshold = 0 requires the first noise level to exceed 0.05 (got " +
                          std::to_string(schedule.sigma(1)) + ")");
    }
}

LatentTensor extrapolate_noise(const LatentTensor& x_hat_t, InversionContext& ctx, double sigma_t,
                               double sigma_next, double threshold) {
    if (!(sigma_next > sigma_t) || !(sigma_t >= 0.0)) {
        throw ConfigError("extrapolate_noise requires sigma_next > sigma_t >= 0");
    }
    if (sigma_t > threshold) {
        // x_0 + (σ_{t+1}/σ_t)(x̂_t − x_0)
        const double gain = sigma_next / sigma_t;
        return lincomb(gain, x_hat_t, 1.0 - gain, ctx.x0);
    }
    if (threshold == 0.0) {
        // σ_t = 0 = Σ: the extrapolation branch would divide by zero.
        throw NumericalError("extrapolate_noise: sigma_t = 0 with threshold 0 divides by zero");
    }
    const LatentTensor g = ctx.rng.normal_tensor(ctx.x0.shape());
    return lincomb(1.0, ctx.x0, sigma_next, g);
}

LatentTensor inversion_update(const LatentTensor& x_hat_t, const LatentTensor& raw, double sigma_t,
                              double sigma_next, const EdmCoefficients& next) {
    const double delta = sigma_t - sigma_next;
    const double denom = delta * (1.0 - next.c_skip) + sigma_next;
    if (denom == 0.0) throw NumericalError("inversion step denominator is zero");
    return lincomb(sigma_next / denom, x_hat_t, delta * next.c_out / denom, raw);
}

namespace {

void check_step(std::size_t t, const NoiseSchedule& schedule) {
    if (t >= schedule.steps()) throw ConfigError("inversion step index out of range");
}

LatentTensor checked_raw(Denoiser& denoiser, const LatentTensor& u, const NoiseLevel& level,
                         const ConditioningPayload& cond) {
    LatentTensor raw = denoiser.raw_apply(u, level, cond);
    if (raw.shape() != u.shape()) {
        throw ShapeMismatchError("denoiser returned shape " + raw.shape().str() + " for input " + u.shape().str());
    }
    return raw;
}

}  // namespace

LatentTensor invert_step_naive(const LatentTensor& x_hat_t, std::size_t t, const NoiseSchedule& schedule,
                               Denoiser& denoiser, const ConditioningPayload& cond) {
    check_step(t, schedule);
    const double sigma_t = schedule.sigma(t);
    const double sigma_next = schedule.sigma(t + 1);
    const EdmCoefficients next = coefficients(sigma_next, schedule.sigma_data());
    // c_in at the current level, c_noise at the next one.
    const double c_in_t = input_scale(sigma_t, schedule.sigma_data());
    const LatentTensor raw = checked_raw(denoiser, scaled(x_hat_t, c_in_t), {sigma_next, next.c_noise}, cond);
    return inversion_update(x_hat_t, raw, sigma_t, sigma_next, next);
}

LatentTensor invert_step_extrapolated(const LatentTensor& x_hat_t, InversionContext& ctx, std::size_t t,
                                      const NoiseSchedule& schedule, Denoiser& denoiser,
                                      const ConditioningPayload& cond, double threshold) {
    check_step(t, schedule);
    const double sigma_t = schedule.sigma(t);
    const double sigma_next = schedule.sigma(t + 1);
    const EdmCoefficients next = coefficients(sigma_next, schedule.sigma_data());
    const LatentTensor x_bar = extrapolate_noise(x_hat_t, ctx, sigma_t, sigma_next, threshold);
    const LatentTensor raw = checked_raw(denoiser, scaled(x_bar, next.c_in), {sigma_next, next.c_noise}, cond);
    return inversion_update(x_hat_t, raw, sigma_t, sigma_next, next);
}

InversionResult invert(const LatentTensor& x0, const NoiseSchedule& schedule, Denoiser& denoiser,
                       const ConditioningPayload& cond, const InversionConfig& config, bool record) {
    config.validate(schedule);
    cond.validate_against(x0.shape());
    InversionResult result;
    if (record) {
        result.trajectory.emplace();
        result.trajectory->direction = Direction::inversion;
        result.trajectory->points.push_back({0, schedule.sigma(0), x0});
    }
    InversionContext ctx(x0, config.rng_seed);
    LatentTensor x = x0;
    for (std::size_t t = 0; t < schedule.steps(); ++t) {
        try {
            if (config.mode == InversionMode::naive) {
                x = invert_step_naive(x, t, schedule, denoiser, cond);
            } else if (schedule.sigma(t) == 0.0 && config.sigma_threshold == 0.0) {
                // Unguarded first step from x̂_0 = x_0: the current noise is the zero vector,
                // so its extrapolation is x_0 itself.
                const EdmCoefficients next = coefficients(schedule.sigma(t + 1), schedule.sigma_data());
                const LatentTensor raw =
                    checked_raw(denoiser, scaled(ctx.x0, next.c_in), {schedule.sigma(t + 1), next.c_noise}, cond);
                x = inversion_update(x, raw, schedule.sigma(t), schedule.sigma(t + 1), next);
            } else {
                x = invert_step_extrapolated(x, ctx, t, schedule, denoiser, cond, config.sigma_threshold);
            }
        } catch (const NumericalError& e) {
            throw NumericalError(to_string(config.mode) + " inversion step " + std::to_string(t) + " -> " +
                                 std::to_string(t + 1) + ": " + e.what());
        }
        if (record) result.trajectory->points.push_back({t + 1, schedule.sigma(t + 1), x});
    }
    result.x_T = std::move(x);
    return result;
}

}  // namespace edminvert
