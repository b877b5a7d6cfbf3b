// SPDX-License-Identifier: Apache-2.0
#include "edminvert/sampler.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "edminvert/errors.hpp"
#include "edminvert/vslt.hpp"

namespace edminvert {

std::string to_string(Direction d) { return d == Direction::sampling ? "sampling" : "inversion"; }

Direction direction_from_string(const std::string& name) {
    if (name == "sampling") return Direction::sampling;
    if (name == "inversion") return Direction::inversion;
    throw FormatError("unknown trajectory direction '" + name + "'");
}

void TrajectoryRecord::validate(const NoiseSchedule& schedule) const {
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        if (p.step > schedule.steps() || p.sigma != schedule.sigma(p.step)) {
            throw ConfigError("trajectory point " + std::to_string(i) + " does not match the schedule");
        }
        if (i > 0) {
            const bool ok = direction == Direction::sampling ? p.step < points[i - 1].step : p.step > points[i - 1].step;
            if (!ok) throw ConfigError("trajectory steps are not monotone in the " + to_string(direction) + " direction");
        }
    }
}

const TrajectoryPoint* TrajectoryRecord::clean_point() const {
    for (const auto& p : points) {
        if (p.sigma == 0.0) return &p;
    }
    return nullptr;
}

LatentTensor denoise_step(const LatentTensor& x_next, std::size_t t, const NoiseSchedule& schedule,
                          Denoiser& denoiser, const ConditioningPayload& cond) {
    if (t >= schedule.steps()) throw ConfigError("denoise_step: step index out of range");
    const double sigma_next = schedule.sigma(t + 1);
    const double sigma_t = schedule.sigma(t);
    if (!(sigma_next > 0.0)) throw NumericalError("denoise_step: sigma_{t+1} is zero");
    LatentTensor d = predict_posterior(denoiser, x_next, sigma_next, schedule.sigma_data(), cond);
    if (sigma_t == 0.0) return d;
    const double ratio = (sigma_t - sigma_next) / sigma_next;
    // x + r(x − D) = (1 + r)x − rD
    return lincomb(1.0 + ratio, x_next, -ratio, d);
}

SampleResult sample(const LatentTensor& x_T, const NoiseSchedule& schedule, Denoiser& denoiser,
                    const ConditioningPayload& cond, bool record) {
    cond.validate_against(x_T.shape());
    SampleResult result;
    if (record) {
        result.trajectory.emplace();
        result.trajectory->direction = Direction::sampling;
        result.trajectory->points.push_back({schedule.steps(), schedule.sigma_max(), x_T});
    }
    LatentTensor x = x_T;
    for (std::size_t t = schedule.steps(); t-- > 0;) {
        try {
            x = denoise_step(x, t, schedule, denoiser, cond);
        } catch (const NumericalError& e) {
            throw NumericalError("sampling step " + std::to_string(t + 1) + " -> " + std::to_string(t) + ": " +
                                 e.what());
        }
        if (record) result.trajectory->points.push_back({t, schedule.sigma(t), x});
    }
    result.x0 = std::move(x);
    return result;
}

std::vector<std::filesystem::path> save_trajectory(const TrajectoryRecord& record, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    nlohmann::json manifest;
    manifest["direction"] = to_string(record.direction);
    manifest["steps"] = nlohmann::json::array();
    manifest["sigmas"] = nlohmann::json::array();
    manifest["files"] = nlohmann::json::array();
    for (const auto& p : record.points) {
        char name[32];
        std::snprintf(name, sizeof name, "step_%04zu.vslt", p.step);
        save_tensor(p.latent, dir / name);
        written.push_back(dir / name);
        manifest["steps"].push_back(p.step);
        manifest["sigmas"].push_back(p.sigma);
        manifest["files"].push_back(name);
    }
    const auto json_path = dir / "trajectory.json";
    std::ofstream os(json_path);
    if (!os) throw FormatError("cannot write " + json_path.string());
    os << manifest.dump(2) << '\n';
    written.push_back(json_path);
    return written;
}

TrajectoryRecord load_trajectory(const std::filesystem::path& dir) {
    const auto json_path = dir / "trajectory.json";
    std::ifstream is(json_path);
    if (!is) throw FormatError("missing trajectory manifest " + json_path.string());
    TrajectoryRecord record;
    try {
        const auto manifest = nlohmann::json::parse(is);
        record.direction = direction_from_string(manifest.at("direction").get<std::string>());
        const auto& steps = manifest.at("steps");
        const auto& sigmas = manifest.at("sigmas");
        const auto& files = manifest.at("files");
        if (steps.size() != sigmas.size() || steps.size() != files.size()) {
            throw FormatError("trajectory manifest arrays differ in length");
        }
        for (std::size_t i = 0; i < steps.size(); ++i) {
            record.points.push_back({steps[i].get<std::size_t>(), sigmas[i].get<double>(),
                                     load_tensor(dir / files[i].get<std::string>())});
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed trajectory manifest " + json_path.string() + ": " + e.what());
    }
    return record;
}

}  // namespace edminvert
