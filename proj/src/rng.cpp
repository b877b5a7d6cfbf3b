// SPDX-License-Identifier: Apache-2.0
#include "edminvert/rng.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace edminvert {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
constexpr double kTwoPow53Inv = 1.0 / 9007199254740992.0;
}  // namespace

std::uint64_t NormalRng::mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t NormalRng::next_u64() noexcept {
    ++counter_;
    return mix(seed_ + counter_ * kGolden);
}

double NormalRng::next_normal() noexcept {
    if (spare_) {
        const double z = *spare_;
        spare_.reset();
        return z;
    }
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * kTwoPow53Inv;
    const double u2 = static_cast<double>(next_u64() >> 11) * kTwoPow53Inv;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    return radius * std::cos(angle);
}

LatentTensor NormalRng::normal_tensor(const Shape& shape) {
    std::vector<float> out(shape.numel());
    for (float& v : out) v = static_cast<float>(next_normal());
    return LatentTensor(shape, std::move(out));
}

}  // namespace edminvert
