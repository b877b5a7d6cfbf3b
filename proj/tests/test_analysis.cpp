// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "edminvert/analysis.hpp"
#include "edminvert/errors.hpp"
#include "support.hpp"

using namespace edminvert;

namespace {

const ConditioningPayload kNoCond{};

TrajectoryRecord synthetic(const LatentTensor& x0, const std::vector<LatentTensor>& offsets) {
    TrajectoryRecord r;
    r.direction = Direction::inversion;
    r.points.push_back({0, 0.0, x0});
    for (std::size_t i = 0; i < offsets.size(); ++i) {
        r.points.push_back({i + 1, static_cast<double>(i + 1), lincomb(1.0, x0, 1.0, offsets[i])});
    }
    return r;
}

CosineMatrix matrix(std::vector<double> values) {
    const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(values.size()))));
    CosineMatrix m;
    for (std::size_t i = 0; i < side; ++i) m.steps.push_back(i);
    m.values = std::move(values);
    return m;
}

}  // namespace

TEST_CASE("cosine_matrix on synthetic trajectories") {
    const auto x0 = testing::random_latent({1, 1, 1, 2}, 1);
    SUBCASE("orthogonal offsets") {
        const auto m = cosine_matrix(synthetic(x0, {LatentTensor({1, 1, 1, 2}, {1, 0}), LatentTensor({1, 1, 1, 2}, {0, 3})}), x0);
        REQUIRE(m.side() == 2);
        CHECK(m(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(m(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(m(0, 1)) <= 1e-6);
        CHECK(m.steps == std::vector<std::size_t>{1, 2});
    }
    SUBCASE("clean and zero-offset points are skipped") {
        const auto zero = LatentTensor::filled({1, 1, 1, 2}, 0.0f);
        const auto m = cosine_matrix(synthetic(x0, {LatentTensor({1, 1, 1, 2}, {1, 1}), zero, LatentTensor({1, 1, 1, 2}, {2, 2})}), x0);
        CHECK(m.steps == std::vector<std::size_t>{1, 3});
        CHECK(m(0, 1) == doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("fewer than two usable steps") {
        CHECK_THROWS_AS(cosine_matrix(synthetic(x0, {LatentTensor({1, 1, 1, 2}, {1, 1})}), x0), ConfigError);
    }
}

TEST_CASE("iso-gaussian sampling trajectory is collinear") {
    KarrasParams p;
    const auto sched = build_karras_schedule(p);
    IsoGaussianDenoiser den(testing::scalar(0.0), 1.0, 0.5);
    double worst = 1.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto x_T = scaled(testing::random_latent({2, 4, 8, 8}, seed), 80.0);
        const auto out = sample(x_T, sched, den, kNoCond, true);
        const auto m = cosine_matrix(*out.trajectory, out.x0);
        REQUIRE(m.side() == sched.steps());
        for (double v : m.values) worst = std::min(worst, v);
        const auto s = trajectory_stats(m);
        CHECK(s.mean_all_pairs >= 0.9999);
        CHECK(s.mean_consecutive >= 0.9999);
        CHECK(s.min_consecutive >= 0.9999);
        CHECK(s.min_consecutive <= s.mean_consecutive);
    }
    MESSAGE("smallest entry " << worst);
    CHECK(worst >= 1.0 - 1e-5);
}

TEST_CASE("iso-gaussian collinearity above the lowest noise level") {
    KarrasParams p;
    const auto sched = build_karras_schedule(p);
    IsoGaussianDenoiser den(testing::scalar(0.0), 1.0, 0.5);
    const auto x_T = scaled(testing::random_latent({2, 4, 8, 8}, 0), 80.0);
    const auto out = sample(x_T, sched, den, kNoCond, true);
    const auto m = cosine_matrix(*out.trajectory, out.x0);
    for (std::size_t i = 0; i < m.side(); ++i) {
        for (std::size_t j = 0; j < m.side(); ++j) {
            if (m.steps[i] == 1 || m.steps[j] == 1) continue;
            REQUIRE(m(i, j) >= 1.0 - 1e-5);
        }
    }
}

TEST_CASE("engine trajectories give symmetric matrices with unit diagonal") {
    KarrasParams p;
    p.steps = 15;
    const auto sched = build_karras_schedule(p);
    DiagGaussianDenoiser den(testing::scalar(0.0), testing::per_channel({0.5, 2.0}), 0.5);
    const auto x_T = scaled(testing::random_latent({1, 2, 4, 4}, 3), 80.0);
    const auto out = sample(x_T, sched, den, kNoCond, true);
    const auto m = cosine_matrix(*out.trajectory, out.x0);
    for (std::size_t i = 0; i < m.side(); ++i) {
        CHECK(std::abs(m(i, i) - 1.0) <= 1e-6);
        for (std::size_t j = 0; j < m.side(); ++j) {
            CHECK(std::abs(m(i, j) - m(j, i)) <= 1e-6);
            CHECK(std::abs(m(i, j)) <= 1.0);
        }
    }
}

TEST_CASE("trajectory_stats examples") {
    const auto ones = trajectory_stats(matrix(std::vector<double>(9, 1.0)));
    CHECK(ones.mean_all_pairs == 1.0);
    CHECK(ones.mean_consecutive == 1.0);
    CHECK(ones.min_consecutive == 1.0);

    // Off-diagonals: (0,1) = 0.9, (1,2) = 0.8, (0,2) = 0.7.
    const auto s = trajectory_stats(matrix({1.0, 0.9, 0.7, 0.9, 1.0, 0.8, 0.7, 0.8, 1.0}));
    CHECK(s.mean_all_pairs == doctest::Approx(0.8));
    CHECK(s.mean_consecutive == doctest::Approx(0.85));
    CHECK(s.min_consecutive == doctest::Approx(0.8));

    CHECK_THROWS_AS(trajectory_stats(matrix({1.0})), ConfigError);
}

TEST_CASE("reconstruction_report examples") {
    const auto x = testing::random_latent({2, 2, 3, 3}, 4);
    const auto same = reconstruction_report(x, x);
    CHECK(same.global_mse == 0.0);
    CHECK(same.max_abs_error == 0.0);
    CHECK(same.per_frame_mse == std::vector<double>{0.0, 0.0});

    const LatentTensor a({2, 1, 1, 2}, {0, 0, 0, 0});
    const LatentTensor plus_one({2, 1, 1, 2}, {1, 1, 1, 1});
    const auto r1 = reconstruction_report(a, plus_one);
    CHECK(r1.global_mse == doctest::Approx(1.0));
    CHECK(r1.max_abs_error == doctest::Approx(1.0));

    const LatentTensor frame1({2, 1, 1, 2}, {0, 0, 2, 2});
    const auto r2 = reconstruction_report(a, frame1);
    REQUIRE(r2.per_frame_mse.size() == 2);
    CHECK(r2.per_frame_mse[0] == 0.0);
    CHECK(r2.per_frame_mse[1] == doctest::Approx(4.0));
    CHECK(r2.global_mse == doctest::Approx(2.0));

    CHECK_THROWS_AS(reconstruction_report(a, x), ConfigError);
}

TEST_CASE("closed_form_iso_trajectory examples") {
    const NoiseSchedule sched({0.0, 1.0, std::sqrt(3.0)}, 0.5);
    const auto tr = closed_form_iso_trajectory(testing::scalar(3.0), 0.0, 1.0, sched);
    REQUIRE(tr.points.size() == 3);
    CHECK(tr.direction == Direction::sampling);
    CHECK(tr.points[0].step == 2);
    CHECK(tr.points[0].latent[0] == doctest::Approx(3.0));
    CHECK(tr.points[1].latent[0] == doctest::Approx(3.0 * std::sqrt(2.0) / 2.0).epsilon(1e-6));
    CHECK(tr.points[2].latent[0] == doctest::Approx(3.0 * 1.0 / 2.0).epsilon(1e-6));

    const auto mu = testing::per_channel({1.0, -2.0});
    const LatentTensor x_T({1, 2, 1, 1}, {5, 2});
    const auto t2 = closed_form_iso_trajectory(x_T, mu, 2.0, sched);
    // x(0) = μ + (x_T − μ)·2/√(4 + 3)
    CHECK(t2.points.back().latent[0] == doctest::Approx(1.0 + 4.0 * 2.0 / std::sqrt(7.0)).epsilon(1e-6));
    CHECK(t2.points.back().latent[1] == doctest::Approx(-2.0 + 4.0 * 2.0 / std::sqrt(7.0)).epsilon(1e-6));
    CHECK_THROWS_AS(closed_form_iso_trajectory(x_T, 0.0, 0.0, sched), ConfigError);
}

TEST_CASE("cosine matrix CSV round-trip") {
    const auto m = matrix({1.0, 0.123456789, 0.5, 0.123456789, 1.0, -0.25, 0.5, -0.25, 1.0});
    const auto text = cosine_matrix_csv(m);
    const auto back = parse_cosine_matrix_csv(text);
    CHECK(back.steps == m.steps);
    REQUIRE(back.values.size() == m.values.size());
    for (std::size_t i = 0; i < m.values.size(); ++i) CHECK(back.values[i] == doctest::Approx(m.values[i]).epsilon(1e-9));
    CHECK(cosine_matrix_csv(back) == text);
    CHECK_THROWS_AS(parse_cosine_matrix_csv(""), FormatError);
    CHECK_THROWS_AS(parse_cosine_matrix_csv("0,1\n1,x\n0.5,1\n"), FormatError);
    CHECK_THROWS_AS(parse_cosine_matrix_csv("0,1\n1,0.5\n"), FormatError);
}

TEST_CASE("report JSON blobs parse") {
    const auto s = nlohmann::json::parse(trajectory_stats_json({0.8, 0.85, 0.8}));
    CHECK(s.at("mean_all_pairs").get<double>() == doctest::Approx(0.8));
    CHECK(s.at("min_consecutive").get<double>() == doctest::Approx(0.8));
    const auto r = nlohmann::json::parse(recon_report_json({2.0, {0.0, 4.0}, 2.0}));
    CHECK(r.at("per_frame_mse").size() == 2);
    CHECK(r.at("global_mse").get<double>() == 2.0);
}
