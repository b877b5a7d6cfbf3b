// SPDX-License-Identifier: Apache-2.0
#pragma once

// Test-only helpers. Random data here comes from the standard library so
// that test inputs never share a code path with the engine's generator.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "edminvert/latent.hpp"

namespace testing {

edminvert::LatentTensor random_latent(const edminvert::Shape& shape, std::uint64_t seed, double scale = 1.0,
                                      double offset = 0.0);

/// Per-channel scale pattern (values cycled over channels) applied to N(0, 1) draws.
edminvert::LatentTensor channel_pattern_latent(const edminvert::Shape& shape, std::uint64_t seed,
                                               const std::vector<double>& channel_scale);

/// Tensor of shape 1 x C x 1 x 1 holding the given values.
edminvert::LatentTensor per_channel(const std::vector<double>& values);

edminvert::LatentTensor scalar(double v);

/// Fresh directory removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// Relative distance ‖a − b‖ / ‖b‖ (double accumulation).
double relative_error(const edminvert::LatentTensor& a, const edminvert::LatentTensor& b);

double mse(const edminvert::LatentTensor& a, const edminvert::LatentTensor& b);

}  // namespace testing
