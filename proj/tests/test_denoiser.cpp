// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "edminvert/denoiser.hpp"
#include "edminvert/errors.hpp"
#include "edminvert/vslt.hpp"
#include "support.hpp"

using namespace edminvert;

namespace {

const ConditioningPayload kNoCond{};

}  // namespace

TEST_CASE("posterior_from_raw and raw_from_posterior scalars") {
    const EdmCoefficients k{0.5, 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0), 0.0};
    const auto x = testing::scalar(2.0);
    CHECK(posterior_from_raw(x, testing::scalar(std::sqrt(2.0)), k)[0] == doctest::Approx(2.0));
    CHECK(posterior_from_raw(x, testing::scalar(0.0), k)[0] == doctest::Approx(1.0));
    CHECK(raw_from_posterior(testing::scalar(2.0), x, k)[0] == doctest::Approx(std::sqrt(2.0)));
    CHECK(raw_from_posterior(scaled(x, 0.5), x, k)[0] == 0.0f);
    CHECK_THROWS_AS(raw_from_posterior(x, x, EdmCoefficients{1.0, 1e-13, 1.0, 0.0}), NumericalError);
}

TEST_CASE("raw/posterior adapters round-trip across sigma") {
    for (double sd : {0.5, 1.0, 2.0}) {
        for (double sigma = 1e-3; sigma <= 1e3; sigma *= 3.1) {
            const auto k = coefficients(sigma, sd);
            const auto x = testing::random_latent({1, 2, 3, 3}, 1, sigma + 1.0);
            const auto d = testing::random_latent({1, 2, 3, 3}, 2);
            const auto back = posterior_from_raw(x, raw_from_posterior(d, x, k), k);
            // Relative to the magnitude of the terms involved in float32.
            const double tol = 1e-6 * (1.0 + k.c_skip * 4.0 * (sigma + 1.0));
            REQUIRE(max_abs_diff(back, d) <= std::max(1e-6, tol));
        }
    }
}

TEST_CASE("iso_gaussian_posterior") {
    CHECK(iso_gaussian_posterior(testing::scalar(2.0), 1.0, 0.0, 1.0)[0] == doctest::Approx(1.0));
    const auto x = testing::random_latent({1, 2, 2, 2}, 3);
    CHECK(max_abs_diff(iso_gaussian_posterior(x, 1e-8, 0.3, 1.0), x) < 1e-6);
    CHECK_THROWS_AS(iso_gaussian_posterior(x, 1.0, 0.0, 0.0), ConfigError);
}

TEST_CASE("iso_gaussian_posterior matches a Monte-Carlo posterior mean") {
    // Self-normalized importance sampling: draw x0 from the prior N(μ, s²),
    // weight by the likelihood of the observation x_σ under x0 + σ·n.
    const double mu = 0.5, s = 1.0, sigma = 2.0;
    std::mt19937_64 gen(20240601);
    std::normal_distribution<double> prior(mu, s);
    std::vector<double> draws(1'000'000);
    for (double& d : draws) d = prior(gen);
    for (double obs : {-3.0, 0.0, 1.7, 4.0}) {
        double sw = 0.0, swx = 0.0;
        std::vector<double> w(draws.size());
        for (std::size_t i = 0; i < draws.size(); ++i) {
            const double z = (obs - draws[i]) / sigma;
            w[i] = std::exp(-0.5 * z * z);
            sw += w[i];
            swx += w[i] * draws[i];
        }
        const double est = swx / sw;
        double var = 0.0;
        for (std::size_t i = 0; i < draws.size(); ++i) var += w[i] * w[i] * (draws[i] - est) * (draws[i] - est);
        const double se = std::sqrt(var) / sw;
        const double engine = iso_gaussian_posterior(testing::scalar(obs), sigma, mu, s)[0];
        CHECK(std::abs(engine - est) <= 3.0 * se + 1e-6);
    }
}

TEST_CASE("diag_gaussian_posterior") {
    const LatentTensor x({1, 2, 1, 1}, {1, 1});
    const auto out = diag_gaussian_posterior(x, 1.0, testing::scalar(0.0), testing::per_channel({1.0, 2.0}));
    CHECK(out[0] == doctest::Approx(0.5));
    CHECK(out[1] == doctest::Approx(0.8));

    const auto y = testing::random_latent({2, 3, 4, 4}, 4);
    const auto mu = testing::random_latent({1, 3, 4, 4}, 5);
    const auto iso = iso_gaussian_posterior(y, 0.7, mu, 1.25);
    const auto diag = diag_gaussian_posterior(y, 0.7, mu, testing::scalar(1.25));
    CHECK(iso == diag);

    const auto flat = diag_gaussian_posterior(x, 1.0, testing::scalar(0.0), testing::per_channel({1.0, 1e9}));
    CHECK(flat[1] == doctest::Approx(1.0).epsilon(1e-9));

    CHECK_THROWS_AS(diag_gaussian_posterior(x, 1.0, testing::scalar(0.0), testing::per_channel({1, 2, 3})),
                    ConfigError);
    CHECK_THROWS_AS(diag_gaussian_posterior(x, 1.0, testing::scalar(0.0), testing::per_channel({1, 0})),
                    ConfigError);
}

TEST_CASE("analytic posteriors are non-expansive toward mu") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto x = testing::random_latent({1, 2, 3, 3}, seed, 5.0);
        const auto mu = testing::random_latent({1, 2, 3, 3}, seed + 1000);
        const auto s = testing::channel_pattern_latent({1, 2, 3, 3}, seed, {1.0});
        LatentTensor s_pos({1, 2, 3, 3}, std::vector<float>(18));
        {
            std::vector<float> v(s.data().begin(), s.data().end());
            for (float& e : v) e = std::abs(e) + 0.01f;
            s_pos = LatentTensor({1, 2, 3, 3}, v);
        }
        for (double sigma : {0.0, 0.01, 0.5, 3.0, 100.0}) {
            const double before = l2_norm(lincomb(1.0, x, -1.0, mu));
            const auto di = iso_gaussian_posterior(x, sigma, mu, 0.8);
            const auto dd = diag_gaussian_posterior(x, sigma, mu, s_pos);
            REQUIRE(l2_norm(lincomb(1.0, di, -1.0, mu)) <= before * (1 + 1e-6));
            REQUIRE(l2_norm(lincomb(1.0, dd, -1.0, mu)) <= before * (1 + 1e-6));
        }
    }
}

TEST_CASE("fit_diag_gaussian") {
    SUBCASE("two points") {
        const auto fit = fit_diag_gaussian({testing::scalar(0.0), testing::scalar(2.0)});
        CHECK(fit.mu[0] == doctest::Approx(1.0));
        CHECK(fit.s[0] == doctest::Approx(1.0));
        CHECK(fit.clamped == 0);
    }
    SUBCASE("identical samples clamp") {
        const auto fit = fit_diag_gaussian({testing::scalar(4.0), testing::scalar(4.0), testing::scalar(4.0)});
        CHECK(fit.s[0] == kMinFittedStd);
        CHECK(fit.clamped == 1);
    }
    SUBCASE("law of large numbers") {
        std::mt19937_64 gen(77);
        std::normal_distribution<double> nd(3.0, 2.0);
        std::vector<LatentTensor> samples;
        for (int i = 0; i < 10000; ++i) samples.push_back(testing::scalar(nd(gen)));
        const auto fit = fit_diag_gaussian(samples);
        CHECK(std::abs(fit.mu[0] - 3.0) < 0.1);
        CHECK(std::abs(fit.s[0] - 2.0) < 0.1);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(fit_diag_gaussian({testing::scalar(1.0)}), ConfigError);
        CHECK_THROWS_AS(fit_diag_gaussian({testing::scalar(1.0), testing::per_channel({1, 2})}), ConfigError);
    }
}

TEST_CASE("oracle-constant denoiser ignores its input") {
    const auto ref = testing::random_latent({2, 3, 4, 4}, 9);
    OracleConstantDenoiser den(ref, 0.5);
    for (double sigma : {0.002, 0.3, 1.0, 80.0}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto x = testing::random_latent(ref.shape(), seed, sigma + 1.0);
            const auto d = predict_posterior(den, x, sigma, 0.5, kNoCond);
            REQUIRE(max_abs_diff(d, ref) <= 1e-5 * (1.0 + sigma));
        }
    }
}

TEST_CASE("iso-gaussian denoiser adapter round-trip and conditioning") {
    const Shape shape{2, 3, 4, 4};
    IsoGaussianDenoiser den(testing::scalar(0.25), 1.5, 0.5);
    const auto x = testing::random_latent(shape, 1, 3.0);
    for (double sigma : {0.002, 0.1, 1.0, 10.0, 80.0}) {
        const auto k = coefficients(sigma, 0.5);
        const auto u = scaled(x, k.c_in);
        const auto raw = den.raw_apply(u, {sigma, k.c_noise}, kNoCond);
        const auto d = posterior_from_raw(x, raw, k);
        REQUIRE(max_abs_diff(d, iso_gaussian_posterior(x, sigma, 0.25, 1.5)) <= 1e-5);
    }

    ConditioningPayload cond;
    cond.first_frame = testing::random_latent({1, 3, 4, 4}, 2);
    const auto d = predict_posterior(den, x, 1.0, 0.5, cond);
    CHECK(max_abs_diff(d, iso_gaussian_posterior(x, 1.0, *cond.first_frame, 1.5)) <= 1e-5);

    IsoGaussianDenoiser plain(testing::scalar(0.25), 1.5, 0.5, false);
    CHECK(max_abs_diff(predict_posterior(plain, x, 1.0, 0.5, cond), iso_gaussian_posterior(x, 1.0, 0.25, 1.5)) <=
          1e-5);

    ConditioningPayload bad;
    bad.first_frame = testing::random_latent({1, 2, 4, 4}, 2);
    CHECK_THROWS_AS(predict_posterior(den, x, 1.0, 0.5, bad), ConfigError);
}

TEST_CASE("in-process denoisers are deterministic") {
    const Shape shape{2, 2, 3, 3};
    const auto x = testing::random_latent(shape, 5);
    ConditioningPayload cond;
    cond.first_frame = testing::random_latent({1, 2, 3, 3}, 6);
    cond.extra = {1, 2, 3};
    IsoGaussianDenoiser iso(testing::scalar(0.0), 1.0, 0.5);
    DiagGaussianDenoiser diag(testing::scalar(0.0), testing::per_channel({0.5, 2.0}), 0.5);
    OracleConstantDenoiser oracle(testing::random_latent(shape, 7), 0.5);
    AffineDenoiser affine(testing::per_channel({0.3, -1.0}), testing::scalar(0.1));
    std::vector<Denoiser*> all{&iso, &diag, &oracle, &affine};
    for (Denoiser* d : all) {
        const auto a = d->raw_apply(x, {1.0, 0.0}, cond);
        const auto b = d->raw_apply(x, {1.0, 0.0}, cond);
        REQUIRE(a == b);
    }
}

TEST_CASE("affine denoiser") {
    AffineDenoiser den(testing::per_channel({2.0, 0.0}), testing::per_channel({1.0, -3.0}));
    const LatentTensor u({1, 2, 1, 2}, {1, 2, 3, 4});
    const auto raw = den.raw_apply(u, {5.0, std::log(5.0) / 4}, kNoCond);
    CHECK(raw == LatentTensor({1, 2, 1, 2}, {3, 5, -3, -3}));
}

TEST_CASE("make_denoiser from specs") {
    testing::TempDir dir;
    const Shape shape{1, 2, 2, 2};
    const auto x = testing::random_latent(shape, 3);

    DenoiserSpec spec;
    CHECK_THROWS_AS(make_denoiser(spec, shape, 0.5), ConfigError);
    CHECK(make_denoiser(spec, shape, 0.5, &x)->kind() == "oracle-constant");

    spec.kind = DenoiserKind::iso_gaussian;
    spec.params = {{"mu", "0.5,1"}, {"s", "2"}};
    auto iso = make_denoiser(spec, shape, 0.5);
    CHECK(max_abs_diff(predict_posterior(*iso, x, 1.0, 0.5, kNoCond),
                       iso_gaussian_posterior(x, 1.0, testing::per_channel({0.5, 1.0}), 2.0)) <= 1e-5);

    spec.params = {{"mu", "0.5,1,2"}};
    CHECK_THROWS_AS(make_denoiser(spec, shape, 0.5), ConfigError);
    spec.params = {{"sigma", "1"}};
    CHECK_THROWS_AS(make_denoiser(spec, shape, 0.5), ConfigError);
    spec.params = {{"s", "abc"}};
    CHECK_THROWS_AS(make_denoiser(spec, shape, 0.5), ConfigError);
    spec.params = {{"conditioned", "maybe"}};
    CHECK_THROWS_AS(make_denoiser(spec, shape, 0.5), ConfigError);

    spec.kind = DenoiserKind::diag_gaussian;
    save_tensor(testing::scalar(0.0), dir / "a.vslt");
    save_tensor(testing::scalar(2.0), dir / "b.vslt");
    spec.params = {{"fit", (dir / "a.vslt").string() + "," + (dir / "b.vslt").string()}};
    auto fitted = make_denoiser(spec, shape, 0.5);
    CHECK(max_abs_diff(predict_posterior(*fitted, x, 1.0, 0.5, kNoCond), iso_gaussian_posterior(x, 1.0, 1.0, 1.0)) <=
          1e-5);
    spec.params["s"] = "1";
    CHECK_THROWS_AS(make_denoiser(spec, shape, 0.5), ConfigError);

    spec.kind = DenoiserKind::affine_file;
    spec.params = {{"scale_path", (dir / "a.vslt").string()}};
    CHECK_THROWS_AS(make_denoiser(spec, shape, 0.5), ConfigError);
    spec.params["offset_path"] = (dir / "b.vslt").string();
    auto affine = make_denoiser(spec, shape, 0.5);
    CHECK(affine->raw_apply(x, {1.0, 0.0}, kNoCond) == LatentTensor::filled(shape, 2.0f));
    spec.params["offset_path"] = (dir / "missing.vslt").string();
    CHECK_THROWS_AS(make_denoiser(spec, shape, 0.5), FormatError);

    spec.kind = DenoiserKind::external;
    spec.params.clear();
    CHECK_THROWS_AS(make_denoiser(spec, shape, 0.5), ConfigError);

    CHECK(denoiser_kind_from_string("diag-gaussian") == DenoiserKind::diag_gaussian);
    CHECK(to_string(DenoiserKind::affine_file) == "affine-file");
    CHECK_THROWS_AS(denoiser_kind_from_string("unet"), ConfigError);
}
