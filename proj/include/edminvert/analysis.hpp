// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "edminvert/latent.hpp"
#include "edminvert/sampler.hpp"
#include "edminvert/schedule.hpp"

namespace edminvert {

/// Cosine similarity of (x_{t_i} − x_0, x_{t_j} − x_0) over flattened latents.
struct CosineMatrix {
    std::vector<std::size_t> steps;  // row/column labels
    std::vector<double> values;      // row-major, side × side

    std::size_t side() const noexcept { return steps.size(); }
    double operator()(std::size_t i, std::size_t j) const { return values[i * side() + j]; }
};

struct TrajectoryStats {
    double mean_all_pairs;    // strict upper triangle
    double mean_consecutive;  // first off-diagonal
    double min_consecutive;
};

struct ReconReport {
    double global_mse;
    std::vector<double> per_frame_mse;
    double max_abs_error;
};

/// Points with σ = 0 or ‖x_t − x_0‖ < 1e-10 are skipped. Needs 2 usable points.
CosineMatrix cosine_matrix(const TrajectoryRecord& traj, const LatentTensor& x0);

TrajectoryStats trajectory_stats(const CosineMatrix& m);

ReconReport reconstruction_report(const LatentTensor& original, const LatentTensor& reconstructed);

/// Exact probability-flow solution for N(μ, s²I) data:
///   x(σ) = μ + (x_T − μ)·√(s² + σ²)/√(s² + σ_T²)
/// evaluated at every schedule level, in sampling order.
TrajectoryRecord closed_form_iso_trajectory(const LatentTensor& x_T, const LatentTensor& mu, double s,
                                            const NoiseSchedule& schedule);
TrajectoryRecord closed_form_iso_trajectory(const LatentTensor& x_T, double mu, double s,
                                            const NoiseSchedule& schedule);

/// Header row of step labels, then one row per step; reals to 9 significant digits.
std::string cosine_matrix_csv(const CosineMatrix& m);
CosineMatrix parse_cosine_matrix_csv(const std::string& text);

std::string trajectory_stats_json(const TrajectoryStats& s);
std::string recon_report_json(const ReconReport& r);

}  // namespace edminvert
