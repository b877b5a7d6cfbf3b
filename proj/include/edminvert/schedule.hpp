// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

namespace edminvert {

/// Strictly increasing noise levels σ_0 < σ_1 < ... < σ_T. Index t is the
/// level at step t; sampling walks T -> 0, inversion walks 0 -> T.
class NoiseSchedule {
public:
    NoiseSchedule(std::vector<double> sigmas, double sigma_data);

    std::size_t steps() const noexcept { return sigmas_.size() - 1; }
    double sigma(std::size_t t) const { return sigmas_.at(t); }
    double sigma_max() const noexcept { return sigmas_.back(); }
    double sigma_data() const noexcept { return sigma_data_; }
    const std::vector<double>& sigmas() const noexcept { return sigmas_; }

private:
    std::vector<double> sigmas_;
    double sigma_data_;
};

struct KarrasParams {
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double rho = 7.0;
    std::size_t steps = 25;
    double sigma_data = 0.5;
};

/// Karras ρ-interpolated levels [0, σ_1, ..., σ_T] with σ_1 = sigma_min and
/// σ_T = sigma_max. sigma_min == sigma_max is accepted here and yields
/// repeated levels.
std::vector<double> karras_sigmas(const KarrasParams& params);

/// karras_sigmas() wrapped as a schedule; repeated levels are rejected.
NoiseSchedule build_karras_schedule(const KarrasParams& params);

/// EDM preconditioning scalars at one noise level.
struct EdmCoefficients {
    double c_skip;
    double c_out;
    double c_in;
    double c_noise;
};

/// c_skip = σ_d²/(σ²+σ_d²), c_out = σσ_d/√(σ²+σ_d²), c_in = 1/√(σ²+σ_d²), c_noise = ln(σ)/4.
/// Requires σ > 0.
EdmCoefficients coefficients(double sigma, double sigma_data);

/// c_in alone, which stays defined at σ = 0.
double input_scale(double sigma, double sigma_data);

}  // namespace edminvert
