// SPDX-License-Identifier: Apache-2.0
#include "edminvert/denoiser.hpp"

#include <cmath>
#include <iostream>

#include "edminvert/errors.hpp"

namespace edminvert {

void ConditioningPayload::validate_against(const Shape& working) const {
    if (!first_frame) return;
    const Shape& s = first_frame->shape();
    if (s.frames != 1 || s.channels != working.channels || s.height != working.height || s.width != working.width) {
        throw ConfigError("conditioning frame shape " + s.str() + " does not match working latent " + working.str() +
                          " (expected [1, C, H, W])");
    }
}

LatentTensor posterior_from_raw(const LatentTensor& x, const LatentTensor& raw, const EdmCoefficients& k) {
    return lincomb(k.c_skip, x, k.c_out, raw);
}

LatentTensor raw_from_posterior(const LatentTensor& d_target, const LatentTensor& x, const EdmCoefficients& k) {
    if (!(k.c_out >= 1e-12)) throw NumericalError("raw_from_posterior: c_out below 1e-12");
    return lincomb(1.0 / k.c_out, d_target, -k.c_skip / k.c_out, x);
}

LatentTensor predict_posterior(Denoiser& denoiser, const LatentTensor& x, double sigma, double sigma_data,
                               const ConditioningPayload& cond) {
    const EdmCoefficients k = coefficients(sigma, sigma_data);
    const LatentTensor raw = denoiser.raw_apply(scaled(x, k.c_in), {sigma, k.c_noise}, cond);
    if (raw.shape() != x.shape()) {
        throw ShapeMismatchError("denoiser returned shape " + raw.shape().str() + " for input " + x.shape().str());
    }
    return posterior_from_raw(x, raw, k);
}

namespace {

// μ_i + s_i²/(s_i² + σ²)·(x_i − μ_i) with s either a single value or per element.
LatentTensor shrink(const LatentTensor& x, double sigma, std::span<const float> mu, std::span<const float> s) {
    const auto d = x.data();
    const double var_noise = sigma * sigma;
    std::vector<float> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double si = s.size() == 1 ? s[0] : s[i];
        const double prior = si * si;
        const double m = mu[i];
        out[i] = static_cast<float>(m + prior / (prior + var_noise) * (d[i] - m));
    }
    return LatentTensor(x.shape(), std::move(out));
}

void require_positive(std::span<const float> s, const char* what) {
    for (float v : s) {
        if (!(v > 0.0f)) throw ConfigError(std::string(what) + ": prior std must be > 0");
    }
}

const LatentTensor& effective_mean(const LatentTensor& mu, bool conditioned, const ConditioningPayload& cond) {
    return conditioned && cond.first_frame ? *cond.first_frame : mu;
}

}  // namespace

LatentTensor iso_gaussian_posterior(const LatentTensor& x, double sigma, const LatentTensor& mu, double s) {
    if (!(s > 0.0)) throw ConfigError("iso_gaussian_posterior: s must be > 0");
    const std::vector<float> m = mu.broadcast_to(x.shape());
    // s stays in double here; the diag path stores it as float.
    const auto d = x.data();
    const double prior = s * s;
    const double gain = prior / (prior + sigma * sigma);
    std::vector<float> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double mi = m[i];
        out[i] = static_cast<float>(mi + gain * (d[i] - mi));
    }
    return LatentTensor(x.shape(), std::move(out));
}

LatentTensor iso_gaussian_posterior(const LatentTensor& x, double sigma, double mu, double s) {
    return iso_gaussian_posterior(x, sigma, LatentTensor::filled({1, 1, 1, 1}, static_cast<float>(mu)), s);
}

LatentTensor diag_gaussian_posterior(const LatentTensor& x, double sigma, const LatentTensor& mu,
                                     const LatentTensor& s) {
    const std::vector<float> m = mu.broadcast_to(x.shape());
    const std::vector<float> sv = s.broadcast_to(x.shape());
    require_positive(sv, "diag_gaussian_posterior");
    return shrink(x, sigma, m, sv);
}

DiagGaussianFit fit_diag_gaussian(const std::vector<LatentTensor>& samples) {
    if (samples.size() < 2) throw ConfigError("fit_diag_gaussian: need at least 2 samples");
    const Shape shape = samples.front().shape();
    for (const auto& x : samples) {
        if (x.shape() != shape) throw ConfigError("fit_diag_gaussian: samples have differing shapes");
    }
    const std::size_t n = shape.numel();
    const double count = static_cast<double>(samples.size());
    std::vector<double> mean(n, 0.0);
    for (const auto& x : samples) {
        const auto d = x.data();
        for (std::size_t i = 0; i < n; ++i) mean[i] += d[i];
    }
    for (double& m : mean) m /= count;
    std::vector<double> sq(n, 0.0);
    for (const auto& x : samples) {
        const auto d = x.data();
        for (std::size_t i = 0; i < n; ++i) {
            const double dev = d[i] - mean[i];
            sq[i] += dev * dev;
        }
    }
    std::vector<float> mu(n);
    std::vector<float> s(n);
    std::size_t clamped = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mu[i] = static_cast<float>(mean[i]);
        s[i] = static_cast<float>(std::sqrt(sq[i] / count));
        if (!(s[i] >= kMinFittedStd)) {
            s[i] = kMinFittedStd;
            ++clamped;
        }
    }
    if (clamped > 0) {
        std::clog << "warning: fit_diag_gaussian clamped " << clamped << " zero-variance element(s) to std "
                  << kMinFittedStd << '\n';
    }
    return {LatentTensor(shape, std::move(mu)), LatentTensor(shape, std::move(s)), clamped};
}

PosteriorDenoiser::PosteriorDenoiser(double sigma_data) : sigma_data_(sigma_data) {
    if (!(sigma_data > 0.0)) throw ConfigError("sigma_data must be > 0");
}

LatentTensor PosteriorDenoiser::raw_apply(const LatentTensor& u, const NoiseLevel& level,
                                          const ConditioningPayload& cond) {
    const EdmCoefficients k = coefficients(level.sigma, sigma_data_);
    const LatentTensor x = scaled(u, 1.0 / k.c_in);
    return raw_from_posterior(posterior(x, level.sigma, cond), x, k);
}

OracleConstantDenoiser::OracleConstantDenoiser(LatentTensor x0_ref, double sigma_data)
    : PosteriorDenoiser(sigma_data), x0_ref_(std::move(x0_ref)) {}

LatentTensor OracleConstantDenoiser::posterior(const LatentTensor& x, double, const ConditioningPayload&) const {
    return LatentTensor(x.shape(), x0_ref_.broadcast_to(x.shape()));
}

IsoGaussianDenoiser::IsoGaussianDenoiser(LatentTensor mu, double s, double sigma_data, bool conditioned)
    : PosteriorDenoiser(sigma_data), mu_(std::move(mu)), s_(s), conditioned_(conditioned) {
    if (!(s_ > 0.0)) throw ConfigError("iso-gaussian: s must be > 0");
}

LatentTensor IsoGaussianDenoiser::posterior(const LatentTensor& x, double sigma,
                                            const ConditioningPayload& cond) const {
    return iso_gaussian_posterior(x, sigma, effective_mean(mu_, conditioned_, cond), s_);
}

DiagGaussianDenoiser::DiagGaussianDenoiser(LatentTensor mu, LatentTensor s, double sigma_data, bool conditioned)
    : PosteriorDenoiser(sigma_data), mu_(std::move(mu)), s_(std::move(s)), conditioned_(conditioned) {
    require_positive(s_.data(), "diag-gaussian");
}

LatentTensor DiagGaussianDenoiser::posterior(const LatentTensor& x, double sigma,
                                             const ConditioningPayload& cond) const {
    return diag_gaussian_posterior(x, sigma, effective_mean(mu_, conditioned_, cond), s_);
}

AffineDenoiser::AffineDenoiser(LatentTensor scale, LatentTensor offset)
    : scale_(std::move(scale)), offset_(std::move(offset)) {}

LatentTensor AffineDenoiser::raw_apply(const LatentTensor& u, const NoiseLevel&, const ConditioningPayload&) {
    const std::vector<float> a = scale_.broadcast_to(u.shape());
    const std::vector<float> b = offset_.broadcast_to(u.shape());
    const auto d = u.data();
    std::vector<float> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        out[i] = static_cast<float>(static_cast<double>(a[i]) * d[i] + b[i]);
    }
    return LatentTensor(u.shape(), std::move(out));
}

std::string to_string(DenoiserKind kind) {
    switch (kind) {
    case DenoiserKind::oracle_constant: return "oracle-constant";
    case DenoiserKind::iso_gaussian: return "iso-gaussian";
    case DenoiserKind::diag_gaussian: return "diag-gaussian";
    case DenoiserKind::affine_file: return "affine-file";
    case DenoiserKind::external: return "external";
    }
    return "unknown";
}

DenoiserKind denoiser_kind_from_string(const std::string& name) {
    for (auto k : {DenoiserKind::oracle_constant, DenoiserKind::iso_gaussian, DenoiserKind::diag_gaussian,
                   DenoiserKind::affine_file, DenoiserKind::external}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown denoiser kind '" + name + "'");
}

}  // namespace edminvert
