// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "edminvert/denoiser.hpp"
#include "edminvert/latent.hpp"
#include "edminvert/schedule.hpp"

namespace edminvert {

enum class Direction {
    sampling,   // T down to 0
    inversion,  // 0 up to T
};

std::string to_string(Direction d);
Direction direction_from_string(const std::string& name);

struct TrajectoryPoint {
    std::size_t step;
    double sigma;
    LatentTensor latent;
};

/// Latents in visiting order. Steps are strictly decreasing for sampling and
/// strictly increasing for inversion.
struct TrajectoryRecord {
    Direction direction = Direction::sampling;
    std::vector<TrajectoryPoint> points;

    /// Throws ConfigError if step order or sigmas disagree with the schedule.
    void validate(const NoiseSchedule& schedule) const;
    /// The latent recorded at σ = 0, if any.
    const TrajectoryPoint* clean_point() const;
};

/// One Euler step x_{t+1} -> x_t:
///   x_t = x_{t+1} + (σ_t − σ_{t+1})/σ_{t+1} · (x_{t+1} − D(x_{t+1}))
/// with D the posterior at σ_{t+1}. Returns D itself when σ_t = 0.
LatentTensor denoise_step(const LatentTensor& x_next, std::size_t t, const NoiseSchedule& schedule,
                          Denoiser& denoiser, const ConditioningPayload& cond);

struct SampleResult {
    LatentTensor x0;
    std::optional<TrajectoryRecord> trajectory;
};

/// Deterministic sampling from x_T down to x_0.
SampleResult sample(const LatentTensor& x_T, const NoiseSchedule& schedule, Denoiser& denoiser,
                    const ConditioningPayload& cond, bool record = false);

/// Write step_NNNN.vslt files plus trajectory.json into `dir`; returns files written.
std::vector<std::filesystem::path> save_trajectory(const TrajectoryRecord& record, const std::filesystem::path& dir);
TrajectoryRecord load_trajectory(const std::filesystem::path& dir);

}  // namespace edminvert
