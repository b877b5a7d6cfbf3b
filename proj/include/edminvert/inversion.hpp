// SPDX-License-Identifier: Apache-2.0
#pragma once

// Inversion of the deterministic EDM sampler.
//
// Solving the Euler step for x_{t+1} gives
//
//   x̂_{t+1} = (σ_{t+1}·x̂_t + (σ_t − σ_{t+1})·c_out·F(c_in·x*; c_noise))
//             / ((σ_t − σ_{t+1})·(1 − c_skip) + σ_{t+1})
//
// with all coefficients at σ_{t+1}. The network argument x* would have to be
// x̂_{t+1} itself, which is unknown. Naive mode uses F(c_in(σ_t)·x̂_t;
// c_noise(σ_{t+1})). Extrapolated mode scales the current noise forward:
//
//   x̄_{t+1} = x_0 + (σ_{t+1}/σ_t)·(x̂_t − x_0)     if σ_t > Σ
//   x̄_{t+1} = x_0 + σ_{t+1}·g,  g ~ N(0, I)        otherwise
//
// and uses F(c_in(σ_{t+1})·x̄_{t+1}; c_noise(σ_{t+1})).

#include <cstdint>
#include <optional>
#include <string>

#include "edminvert/denoiser.hpp"
#include "edminvert/latent.hpp"
#include "edminvert/rng.hpp"
#include "edminvert/sampler.hpp"
#include "edminvert/schedule.hpp"

namespace edminvert {

enum class InversionMode {
    naive,
    extrapolated,
};

std::string to_string(InversionMode mode);
InversionMode inversion_mode_from_string(const std::string& name);

inline constexpr double kDefaultSigmaThreshold = 0.1;
/// Below this first level, extrapolated mode needs Σ > 0.
inline constexpr double kUnguardedSigmaFloor = 0.05;

struct InversionConfig {
    InversionMode mode = InversionMode::extrapolated;
    double sigma_threshold = kDefaultSigmaThreshold;
    std::uint64_t rng_seed = 0;

    /// Throws ConfigError when Σ < 0, or Σ = 0 in extrapolated mode with σ_1 ≤ 0.05.
    void validate(const NoiseSchedule& schedule) const;
};

/// Per-run state for extrapolation: the clean latent and the generator for
/// the fresh-noise branch. Owned by one run.
struct InversionContext {
    InversionContext(LatentTensor x0, std::uint64_t seed) : x0(std::move(x0)), rng(seed) {}

    const LatentTensor x0;
    NormalRng rng;
};

/// x̄_{t+1}. Throws NumericalError for σ_t = 0 with Σ = 0.
LatentTensor extrapolate_noise(const LatentTensor& x_hat_t, InversionContext& ctx, double sigma_t,
                               double sigma_next, double threshold);

/// The closed-form x̂_{t+1} given the raw network output at the chosen argument.
LatentTensor inversion_update(const LatentTensor& x_hat_t, const LatentTensor& raw, double sigma_t,
                              double sigma_next, const EdmCoefficients& next);

LatentTensor invert_step_naive(const LatentTensor& x_hat_t, std::size_t t, const NoiseSchedule& schedule,
                               Denoiser& denoiser, const ConditioningPayload& cond);

LatentTensor invert_step_extrapolated(const LatentTensor& x_hat_t, InversionContext& ctx, std::size_t t,
                                      const NoiseSchedule& schedule, Denoiser& denoiser,
                                      const ConditioningPayload& cond, double threshold);

struct InversionResult {
    LatentTensor x_T;
    std::optional<TrajectoryRecord> trajectory;
};

/// Walk x̂_0 = x0 up to x̂_T with the configured step.
InversionResult invert(const LatentTensor& x0, const NoiseSchedule& schedule, Denoiser& denoiser,
                       const ConditioningPayload& cond, const InversionConfig& config, bool record = false);

}  // namespace edminvert
