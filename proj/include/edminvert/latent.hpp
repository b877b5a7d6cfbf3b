// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace edminvert {

/// Dimensions of a latent video: frames x channels x height x width, width fastest.
struct Shape {
    std::size_t frames = 1;
    std::size_t channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;

    std::size_t numel() const noexcept { return frames * channels * height * width; }
    std::size_t frame_numel() const noexcept { return channels * height * width; }
    std::size_t plane() const noexcept { return height * width; }
    std::string str() const;

    friend bool operator==(const Shape&, const Shape&) = default;
};

/// True when every dimension of `from` equals the matching one of `to` or is 1.
bool broadcastable(const Shape& from, const Shape& to) noexcept;

/// Index of the first non-finite element, if any.
std::optional<std::size_t> find_non_finite(std::span<const float> values) noexcept;

/// Immutable 4-D float32 latent. All elements are finite.
class LatentTensor {
public:
    LatentTensor() = default;
    LatentTensor(Shape shape, std::vector<float> data);

    static LatentTensor filled(Shape shape, float value);

    const Shape& shape() const noexcept { return shape_; }
    std::span<const float> data() const noexcept { return data_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    float operator[](std::size_t i) const noexcept { return data_[i]; }
    float at(std::size_t f, std::size_t c, std::size_t h, std::size_t w) const;

    /// Single frame as a 1 x C x H x W tensor.
    LatentTensor frame(std::size_t f) const;

    /// Materialize this tensor against a larger shape (see broadcastable()).
    std::vector<float> broadcast_to(const Shape& target) const;

    friend bool operator==(const LatentTensor&, const LatentTensor&) = default;

private:
    Shape shape_{0, 0, 0, 0};
    std::vector<float> data_;
};

// Elementwise helpers. Arithmetic runs in double and rounds once to float.

/// a·x
LatentTensor scaled(const LatentTensor& x, double a);
/// a·x + b·y; shapes must match.
LatentTensor lincomb(double a, const LatentTensor& x, double b, const LatentTensor& y);

double dot(const LatentTensor& x, const LatentTensor& y);
double l2_norm(const LatentTensor& x);
double max_abs_diff(const LatentTensor& x, const LatentTensor& y);

enum class StatsScope {
    all_frames,
    first_frame_only,
};

/// Per-channel mean and population standard deviation.
struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> std;
    StatsScope scope = StatsScope::all_frames;
};

/// Channel statistics accumulated in double precision; std divides by N.
/// Degenerate (zero-std) channels are reported, not rejected.
ChannelStats channel_stats(const LatentTensor& x, StatsScope scope);

/// Channels whose standard deviation falls below this are rejected as divisors.
inline constexpr double kDegenerateStd = 1e-12;

struct NormalizedLatent {
    LatentTensor latent;
    ChannelStats stats;  // all-frames statistics of the input
};

/// Divide every channel by its all-frames standard deviation. The mean is kept.
NormalizedLatent normalize_input(const LatentTensor& x_in);

/// Divide channels by given scales (e.g. to bring a conditioning frame into
/// the working space of a normalized video).
LatentTensor divide_channels(const LatentTensor& x, std::span<const double> scale);

/// Multiply channels by given scales; inverse of divide_channels.
LatentTensor multiply_channels(const LatentTensor& x, std::span<const double> scale);

enum class RescaleForm {
    /// (σ_img/σ_0)·(x_0 − μ_0 + μ_img): the mean is inside the scale factor.
    as_printed,
    /// (σ_img/σ_0)·(x_0 − μ_0) + μ_img: output first-frame mean equals μ_img.
    mean_preserving,
};

/// Match the first-frame statistics of x_0 to those of the target image.
/// μ_0, σ_0 are the per-channel first-frame statistics of x_0.
LatentTensor rescale_output(const LatentTensor& x_0, const ChannelStats& img_stats,
                            RescaleForm form = RescaleForm::as_printed);

std::string to_string(RescaleForm form);
RescaleForm rescale_form_from_string(const std::string& name);

}  // namespace edminvert
