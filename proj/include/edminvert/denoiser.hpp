// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "edminvert/latent.hpp"
#include "edminvert/schedule.hpp"

namespace edminvert {

/// What the denoiser is conditioned on: an optional first-frame latent
/// (1 x C x H x W) and opaque bytes that only external denoisers see.
struct ConditioningPayload {
    std::optional<LatentTensor> first_frame;
    std::vector<std::uint8_t> extra;

    /// Throws ConfigError when the frame does not match the working latent.
    void validate_against(const Shape& working) const;
};

/// The noise level a raw network call is made at. `sigma` is the level that
/// c_noise was computed from; both travel together so that analytic
/// denoisers need not invert ln(σ)/4.
struct NoiseLevel {
    double sigma;
    double c_noise;
};

/// The raw network F(u; c_noise). The engine only ever talks to this form;
/// the posterior mean is c_skip·x + c_out·F(c_in·x; c_noise).
class Denoiser {
public:
    virtual ~Denoiser() = default;

    virtual LatentTensor raw_apply(const LatentTensor& u, const NoiseLevel& level,
                                   const ConditioningPayload& cond) = 0;

    virtual std::string kind() const = 0;
};

/// c_skip·x + c_out·raw
LatentTensor posterior_from_raw(const LatentTensor& x, const LatentTensor& raw, const EdmCoefficients& k);

/// (d_target − c_skip·x)/c_out; the raw output that reproduces d_target.
LatentTensor raw_from_posterior(const LatentTensor& d_target, const LatentTensor& x, const EdmCoefficients& k);

/// Posterior mean ("predicted x_0") of a denoiser at level σ > 0.
LatentTensor predict_posterior(Denoiser& denoiser, const LatentTensor& x, double sigma, double sigma_data,
                               const ConditioningPayload& cond);

/// μ + s²/(s² + σ²)·(x − μ); mu broadcasts to x.
LatentTensor iso_gaussian_posterior(const LatentTensor& x, double sigma, const LatentTensor& mu, double s);
LatentTensor iso_gaussian_posterior(const LatentTensor& x, double sigma, double mu, double s);

/// Elementwise μ_i + s_i²/(s_i² + σ²)·(x_i − μ_i); mu and s broadcast to x.
LatentTensor diag_gaussian_posterior(const LatentTensor& x, double sigma, const LatentTensor& mu,
                                     const LatentTensor& s);

inline constexpr float kMinFittedStd = 1e-3f;

struct DiagGaussianFit {
    LatentTensor mu;
    LatentTensor s;
    std::size_t clamped = 0;  // elements whose std was raised to kMinFittedStd
};

/// Elementwise sample mean and population std over at least two samples.
DiagGaussianFit fit_diag_gaussian(const std::vector<LatentTensor>& samples);

/// Base for denoisers defined by a closed-form posterior mean. The raw output
/// is recovered through raw_from_posterior at the call's noise level.
class PosteriorDenoiser : public Denoiser {
public:
    explicit PosteriorDenoiser(double sigma_data);

    LatentTensor raw_apply(const LatentTensor& u, const NoiseLevel& level, const ConditioningPayload& cond) final;

    virtual LatentTensor posterior(const LatentTensor& x, double sigma, const ConditioningPayload& cond) const = 0;

    double sigma_data() const noexcept { return sigma_data_; }

private:
    double sigma_data_;
};

/// Posterior pinned to a reference latent regardless of input.
class OracleConstantDenoiser final : public PosteriorDenoiser {
public:
    OracleConstantDenoiser(LatentTensor x0_ref, double sigma_data);
    LatentTensor posterior(const LatentTensor& x, double sigma, const ConditioningPayload& cond) const override;
    std::string kind() const override { return "oracle-constant"; }

private:
    LatentTensor x0_ref_;
};

/// Exact posterior for data ~ N(μ, s²I). When `conditioned` and the payload
/// carries a first frame, that frame (broadcast over frames) replaces μ.
class IsoGaussianDenoiser final : public PosteriorDenoiser {
public:
    IsoGaussianDenoiser(LatentTensor mu, double s, double sigma_data, bool conditioned = true);
    LatentTensor posterior(const LatentTensor& x, double sigma, const ConditioningPayload& cond) const override;
    std::string kind() const override { return "iso-gaussian"; }

private:
    LatentTensor mu_;
    double s_;
    bool conditioned_;
};

/// Exact posterior for data ~ N(μ, diag(s²)). Conditioning as for the iso case.
class DiagGaussianDenoiser final : public PosteriorDenoiser {
public:
    DiagGaussianDenoiser(LatentTensor mu, LatentTensor s, double sigma_data, bool conditioned = true);
    LatentTensor posterior(const LatentTensor& x, double sigma, const ConditioningPayload& cond) const override;
    std::string kind() const override { return "diag-gaussian"; }

private:
    LatentTensor mu_;
    LatentTensor s_;
    bool conditioned_;
};

/// Raw network F(u) = scale ⊙ u + offset, independent of the noise level.
/// With zero scale the raw output is constant, which makes the inversion step exact.
class AffineDenoiser final : public Denoiser {
public:
    AffineDenoiser(LatentTensor scale, LatentTensor offset);
    LatentTensor raw_apply(const LatentTensor& u, const NoiseLevel& level, const ConditioningPayload& cond) override;
    std::string kind() const override { return "affine-file"; }

private:
    LatentTensor scale_;
    LatentTensor offset_;
};

enum class DenoiserKind {
    oracle_constant,
    iso_gaussian,
    diag_gaussian,
    affine_file,
    external,
};

std::string to_string(DenoiserKind kind);
DenoiserKind denoiser_kind_from_string(const std::string& name);

inline constexpr double kDefaultTimeoutSecs = 120.0;

/// Declarative denoiser selection as it appears in configs and on the CLI.
///
/// Parameters by kind (all values are strings):
///   oracle-constant  x0_ref=<vslt>           (default: the working clean latent)
///   iso-gaussian     mu=<real|c0,c1,..> | mu_path=<vslt>, s=<real>, conditioned=<bool>
///   diag-gaussian    mu=... | mu_path, s=<real|c0,c1,..> | s_path | fit=<vslt,vslt,..>, conditioned
///   affine-file      scale_path=<vslt>, offset_path=<vslt>
///   external         endpoint=<host:port>
/// Comma lists give one value per channel.
struct DenoiserSpec {
    DenoiserKind kind = DenoiserKind::oracle_constant;
    std::map<std::string, std::string> params;
    std::string endpoint;
    double timeout_secs = kDefaultTimeoutSecs;
};

/// Build a denoiser for a working latent of the given shape. `default_x0`
/// backs oracle-constant when no x0_ref is given.
std::unique_ptr<Denoiser> make_denoiser(const DenoiserSpec& spec, const Shape& working, double sigma_data,
                                        const LatentTensor* default_x0 = nullptr);

/// Parse "0.5" or "0.5,2,0.5,2" into a 1x1x1x1 or 1xCx1x1 tensor.
LatentTensor parse_channel_values(const std::string& text);

}  // namespace edminvert
