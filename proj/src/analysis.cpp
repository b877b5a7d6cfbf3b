// SPDX-License-Identifier: Apache-2.0
#include "edminvert/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "edminvert/errors.hpp"

namespace edminvert {

CosineMatrix cosine_matrix(const TrajectoryRecord& traj, const LatentTensor& x0) {
    std::vector<std::size_t> steps;
    std::vector<std::vector<double>> dirs;
    const auto ref = x0.data();
    for (const auto& p : traj.points) {
        if (p.sigma == 0.0) continue;
        if (p.latent.shape() != x0.shape()) throw ConfigError("trajectory latent shape differs from x0");
        const auto d = p.latent.data();
        std::vector<double> v(d.size());
        double sq = 0.0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            v[i] = static_cast<double>(d[i]) - ref[i];
            sq += v[i] * v[i];
        }
        const double norm = std::sqrt(sq);
        if (norm < 1e-10) continue;
        for (double& e : v) e /= norm;
        steps.push_back(p.step);
        dirs.push_back(std::move(v));
    }
    if (steps.size() < 2) throw ConfigError("cosine_matrix needs at least 2 usable trajectory steps");

    CosineMatrix m;
    m.steps = std::move(steps);
    const std::size_t n = m.side();
    m.values.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        m.values[i * n + i] = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < dirs[i].size(); ++k) acc += dirs[i][k] * dirs[j][k];
            acc = std::clamp(acc, -1.0, 1.0);
            m.values[i * n + j] = acc;
            m.values[j * n + i] = acc;
        }
    }
    return m;
}

TrajectoryStats trajectory_stats(const CosineMatrix& m) {
    const std::size_t n = m.side();
    if (n < 2) throw ConfigError("trajectory_stats needs a matrix of side >= 2");
    double all = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            all += m(i, j);
            ++pairs;
        }
    }
    double consecutive = 0.0;
    double min_consecutive = 1.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        consecutive += m(i, i + 1);
        min_consecutive = std::min(min_consecutive, m(i, i + 1));
    }
    return {all / static_cast<double>(pairs), consecutive / static_cast<double>(n - 1), min_consecutive};
}

ReconReport reconstruction_report(const LatentTensor& original, const LatentTensor& reconstructed) {
    if (original.shape() != reconstructed.shape()) {
        throw ConfigError("reconstruction_report: shape mismatch " + original.shape().str() + " vs " +
                          reconstructed.shape().str());
    }
    const Shape& s = original.shape();
    const std::size_t per_frame = s.frame_numel();
    const auto a = original.data();
    const auto b = reconstructed.data();
    ReconReport r{0.0, std::vector<double>(s.frames, 0.0), 0.0};
    double total = 0.0;
    for (std::size_t f = 0; f < s.frames; ++f) {
        double sq = 0.0;
        for (std::size_t k = 0; k < per_frame; ++k) {
            const double d = static_cast<double>(b[f * per_frame + k]) - a[f * per_frame + k];
            sq += d * d;
            r.max_abs_error = std::max(r.max_abs_error, std::abs(d));
        }
        r.per_frame_mse[f] = sq / static_cast<double>(per_frame);
        total += sq;
    }
    r.global_mse = total / static_cast<double>(s.numel());
    return r;
}

TrajectoryRecord closed_form_iso_trajectory(const LatentTensor& x_T, const LatentTensor& mu, double s,
                                            const NoiseSchedule& schedule) {
    if (!(s > 0.0)) throw ConfigError("closed_form_iso_trajectory: s must be > 0");
    const std::vector<float> m = mu.broadcast_to(x_T.shape());
    const auto xt = x_T.data();
    const double top = std::sqrt(s * s + schedule.sigma_max() * schedule.sigma_max());
    TrajectoryRecord record;
    record.direction = Direction::sampling;
    for (std::size_t t = schedule.steps() + 1; t-- > 0;) {
        const double sigma = schedule.sigma(t);
        const double gain = std::sqrt(s * s + sigma * sigma) / top;
        std::vector<float> out(xt.size());
        for (std::size_t i = 0; i < xt.size(); ++i) out[i] = static_cast<float>(m[i] + (xt[i] - m[i]) * gain);
        record.points.push_back({t, sigma, LatentTensor(x_T.shape(), std::move(out))});
    }
    return record;
}

TrajectoryRecord closed_form_iso_trajectory(const LatentTensor& x_T, double mu, double s,
                                            const NoiseSchedule& schedule) {
    return closed_form_iso_trajectory(x_T, LatentTensor::filled({1, 1, 1, 1}, static_cast<float>(mu)), s, schedule);
}

namespace {

std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

}  // namespace

std::string cosine_matrix_csv(const CosineMatrix& m) {
    std::ostringstream os;
    for (std::size_t j = 0; j < m.side(); ++j) os << (j ? "," : "") << m.steps[j];
    os << '\n';
    for (std::size_t i = 0; i < m.side(); ++i) {
        for (std::size_t j = 0; j < m.side(); ++j) os << (j ? "," : "") << format_real(m(i, j));
        os << '\n';
    }
    return os.str();
}

CosineMatrix parse_cosine_matrix_csv(const std::string& text) {
    std::stringstream ss(text);
    std::string line;
    CosineMatrix m;
    if (!std::getline(ss, line)) throw FormatError("cosine matrix CSV is empty");
    try {
        for (const auto& cell : split(line, ',')) m.steps.push_back(std::stoul(cell));
        while (std::getline(ss, line)) {
            if (line.empty()) continue;
            const auto cells = split(line, ',');
            if (cells.size() != m.side()) throw FormatError("cosine matrix CSV row has wrong width");
            for (const auto& cell : cells) m.values.push_back(std::stod(cell));
        }
    } catch (const std::logic_error&) {
        throw FormatError("cosine matrix CSV holds a non-numeric cell");
    }
    if (m.values.size() != m.side() * m.side()) throw FormatError("cosine matrix CSV is not square");
    return m;
}

std::string trajectory_stats_json(const TrajectoryStats& s) {
    nlohmann::json j = {
        {"mean_all_pairs", s.mean_all_pairs},
        {"mean_consecutive", s.mean_consecutive},
        {"min_consecutive", s.min_consecutive},
    };
    return j.dump(2);
}

std::string recon_report_json(const ReconReport& r) {
    nlohmann::json j = {
        {"global_mse", r.global_mse},
        {"per_frame_mse", r.per_frame_mse},
        {"max_abs_error", r.max_abs_error},
    };
    return j.dump(2);
}

}  // namespace edminvert
