// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <atomic>
#include <cmath>
#include <random>
#include <unistd.h>

namespace testing {

using edminvert::LatentTensor;
using edminvert::Shape;

LatentTensor random_latent(const Shape& shape, std::uint64_t seed, double scale, double offset) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<float> v(shape.numel());
    for (float& x : v) x = static_cast<float>(offset + scale * dist(gen));
    return LatentTensor(shape, std::move(v));
}

LatentTensor channel_pattern_latent(const Shape& shape, std::uint64_t seed, const std::vector<double>& channel_scale) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<float> v(shape.numel());
    std::size_t i = 0;
    for (std::size_t f = 0; f < shape.frames; ++f)
        for (std::size_t c = 0; c < shape.channels; ++c)
            for (std::size_t k = 0; k < shape.plane(); ++k)
                v[i++] = static_cast<float>(channel_scale[c % channel_scale.size()] * dist(gen));
    return LatentTensor(shape, std::move(v));
}

LatentTensor per_channel(const std::vector<double>& values) {
    std::vector<float> v(values.begin(), values.end());
    return LatentTensor({1, values.size(), 1, 1}, std::move(v));
}

LatentTensor scalar(double v) { return LatentTensor::filled({1, 1, 1, 1}, static_cast<float>(v)); }

TempDir::TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("edminvert_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

double relative_error(const LatentTensor& a, const LatentTensor& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        num += d * d;
        den += static_cast<double>(b[i]) * b[i];
    }
    return std::sqrt(num / den);
}

double mse(const LatentTensor& a, const LatentTensor& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

}  // namespace testing
