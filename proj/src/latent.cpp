// SPDX-License-Identifier: Apache-2.0
#include "edminvert/latent.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "edminvert/errors.hpp"

namespace edminvert {

std::string Shape::str() const {
    std::ostringstream os;
    os << '[' << frames << ", " << channels << ", " << height << ", " << width << ']';
    return os.str();
}

bool broadcastable(const Shape& from, const Shape& to) noexcept {
    auto ok = [](std::size_t a, std::size_t b) { return a == b || a == 1; };
    return ok(from.frames, to.frames) && ok(from.channels, to.channels) &&
           ok(from.height, to.height) && ok(from.width, to.width);
}

std::optional<std::size_t> find_non_finite(std::span<const float> values) noexcept {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) return i;
    }
    return std::nullopt;
}

LatentTensor::LatentTensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
    if (shape_.frames == 0 || shape_.channels == 0 || shape_.height == 0 || shape_.width == 0) {
        throw FormatError("latent dimensions must all be >= 1, got " + shape_.str());
    }
    if (data_.size() != shape_.numel()) {
        throw FormatError("latent data length " + std::to_string(data_.size()) + " does not match shape " +
                          shape_.str());
    }
    if (auto bad = find_non_finite(data_)) {
        throw NumericalError("latent element " + std::to_string(*bad) + " is not finite");
    }
}

LatentTensor LatentTensor::filled(Shape shape, float value) {
    return LatentTensor(shape, std::vector<float>(shape.numel(), value));
}

float LatentTensor::at(std::size_t f, std::size_t c, std::size_t h, std::size_t w) const {
    if (f >= shape_.frames || c >= shape_.channels || h >= shape_.height || w >= shape_.width) {
        throw std::out_of_range("latent index out of range");
    }
    return data_[((f * shape_.channels + c) * shape_.height + h) * shape_.width + w];
}

LatentTensor LatentTensor::frame(std::size_t f) const {
    if (f >= shape_.frames) throw std::out_of_range("frame index out of range");
    const std::size_t n = shape_.frame_numel();
    std::vector<float> out(data_.begin() + static_cast<std::ptrdiff_t>(f * n),
                           data_.begin() + static_cast<std::ptrdiff_t>((f + 1) * n));
    return LatentTensor({1, shape_.channels, shape_.height, shape_.width}, std::move(out));
}

std::vector<float> LatentTensor::broadcast_to(const Shape& target) const {
    if (!broadcastable(shape_, target)) {
        throw ConfigError("cannot broadcast " + shape_.str() + " to " + target.str());
    }
    if (shape_ == target) return data_;
    std::vector<float> out(target.numel());
    std::size_t i = 0;
    for (std::size_t f = 0; f < target.frames; ++f) {
        const std::size_t sf = shape_.frames == 1 ? 0 : f;
        for (std::size_t c = 0; c < target.channels; ++c) {
            const std::size_t sc = shape_.channels == 1 ? 0 : c;
            for (std::size_t h = 0; h < target.height; ++h) {
                const std::size_t sh = shape_.height == 1 ? 0 : h;
                const std::size_t row = ((sf * shape_.channels + sc) * shape_.height + sh) * shape_.width;
                for (std::size_t w = 0; w < target.width; ++w) {
                    out[i++] = data_[row + (shape_.width == 1 ? 0 : w)];
                }
            }
        }
    }
    return out;
}

namespace {

void require_same_shape(const LatentTensor& x, const LatentTensor& y, const char* what) {
    if (x.shape() != y.shape()) {
        throw ConfigError(std::string(what) + ": shape mismatch " + x.shape().str() + " vs " + y.shape().str());
    }
}

}  // namespace

LatentTensor scaled(const LatentTensor& x, double a) {
    const auto d = x.data();
    std::vector<float> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = static_cast<float>(a * d[i]);
    return LatentTensor(x.shape(), std::move(out));
}

LatentTensor lincomb(double a, const LatentTensor& x, double b, const LatentTensor& y) {
    require_same_shape(x, y, "lincomb");
    const auto dx = x.data();
    const auto dy = y.data();
    std::vector<float> out(dx.size());
    for (std::size_t i = 0; i < dx.size(); ++i) out[i] = static_cast<float>(a * dx[i] + b * dy[i]);
    return LatentTensor(x.shape(), std::move(out));
}

double dot(const LatentTensor& x, const LatentTensor& y) {
    require_same_shape(x, y, "dot");
    const auto dx = x.data();
    const auto dy = y.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < dx.size(); ++i) acc += static_cast<double>(dx[i]) * dy[i];
    return acc;
}

double l2_norm(const LatentTensor& x) { return std::sqrt(dot(x, x)); }

double max_abs_diff(const LatentTensor& x, const LatentTensor& y) {
    require_same_shape(x, y, "max_abs_diff");
    const auto dx = x.data();
    const auto dy = y.data();
    double m = 0.0;
    for (std::size_t i = 0; i < dx.size(); ++i) m = std::max(m, std::abs(static_cast<double>(dx[i]) - dy[i]));
    return m;
}

ChannelStats channel_stats(const LatentTensor& x, StatsScope scope) {
    const Shape& s = x.shape();
    const std::size_t frames = scope == StatsScope::all_frames ? s.frames : 1;
    const std::size_t plane = s.plane();
    const auto data = x.data();

    ChannelStats stats;
    stats.scope = scope;
    stats.mean.assign(s.channels, 0.0);
    stats.std.assign(s.channels, 0.0);
    const double n = static_cast<double>(frames * plane);
    // Two passes: mean first, then centred second moment.
    for (std::size_t c = 0; c < s.channels; ++c) {
        double sum = 0.0;
        for (std::size_t f = 0; f < frames; ++f) {
            const std::size_t base = (f * s.channels + c) * plane;
            for (std::size_t k = 0; k < plane; ++k) sum += data[base + k];
        }
        const double mean = sum / n;
        double sq = 0.0;
        for (std::size_t f = 0; f < frames; ++f) {
            const std::size_t base = (f * s.channels + c) * plane;
            for (std::size_t k = 0; k < plane; ++k) {
                const double d = data[base + k] - mean;
                sq += d * d;
            }
        }
        stats.mean[c] = mean;
        stats.std[c] = std::sqrt(sq / n);
    }
    return stats;
}

namespace {

void require_non_degenerate(std::span<const double> std_dev, const char* what) {
    for (std::size_t c = 0; c < std_dev.size(); ++c) {
        if (!(std_dev[c] >= kDegenerateStd)) {
            throw DegenerateChannelError(c, std::string(what) + ": channel " + std::to_string(c) +
                                                " has degenerate standard deviation " +
                                                std::to_string(std_dev[c]));
        }
    }
}

template <typename Fn>
LatentTensor per_channel_map(const LatentTensor& x, Fn&& fn) {
    const Shape& s = x.shape();
    const std::size_t plane = s.plane();
    const auto data = x.data();
    std::vector<float> out(data.size());
    for (std::size_t f = 0; f < s.frames; ++f) {
        for (std::size_t c = 0; c < s.channels; ++c) {
            const std::size_t base = (f * s.channels + c) * plane;
            for (std::size_t k = 0; k < plane; ++k) {
                out[base + k] = static_cast<float>(fn(c, static_cast<double>(data[base + k])));
            }
        }
    }
    return LatentTensor(s, std::move(out));
}

void require_channels(const LatentTensor& x, std::size_t n, const char* what) {
    if (x.shape().channels != n) {
        throw ConfigError(std::string(what) + ": expected " + std::to_string(x.shape().channels) +
                          " channel values, got " + std::to_string(n));
    }
}

}  // namespace

NormalizedLatent normalize_input(const LatentTensor& x_in) {
    ChannelStats stats = channel_stats(x_in, StatsScope::all_frames);
    require_non_degenerate(stats.std, "normalize_input");
    LatentTensor out = per_channel_map(x_in, [&](std::size_t c, double v) { return v / stats.std[c]; });
    return {std::move(out), std::move(stats)};
}

LatentTensor divide_channels(const LatentTensor& x, std::span<const double> scale) {
    require_channels(x, scale.size(), "divide_channels");
    require_non_degenerate(scale, "divide_channels");
    return per_channel_map(x, [&](std::size_t c, double v) { return v / scale[c]; });
}

LatentTensor multiply_channels(const LatentTensor& x, std::span<const double> scale) {
    require_channels(x, scale.size(), "multiply_channels");
    return per_channel_map(x, [&](std::size_t c, double v) { return v * scale[c]; });
}

LatentTensor rescale_output(const LatentTensor& x_0, const ChannelStats& img_stats, RescaleForm form) {
    if (img_stats.scope != StatsScope::first_frame_only) {
        throw ConfigError("rescale_output: target statistics must be first-frame-only");
    }
    require_channels(x_0, img_stats.mean.size(), "rescale_output");
    require_channels(x_0, img_stats.std.size(), "rescale_output");
    const ChannelStats own = channel_stats(x_0, StatsScope::first_frame_only);
    require_non_degenerate(own.std, "rescale_output");
    if (form == RescaleForm::as_printed) {
        return per_channel_map(x_0, [&](std::size_t c, double v) {
            return (img_stats.std[c] / own.std[c]) * (v - own.mean[c] + img_stats.mean[c]);
        });
    }
    return per_channel_map(x_0, [&](std::size_t c, double v) {
        return (img_stats.std[c] / own.std[c]) * (v - own.mean[c]) + img_stats.mean[c];
    });
}

std::string to_string(RescaleForm form) {
    return form == RescaleForm::as_printed ? "as-printed" : "mean-preserving";
}

RescaleForm rescale_form_from_string(const std::string& name) {
    if (name == "as-printed") return RescaleForm::as_printed;
    if (name == "mean-preserving") return RescaleForm::mean_preserving;
    throw ConfigError("unknown rescale form '" + name + "' (expected as-printed or mean-preserving)");
}

}  // namespace edminvert
