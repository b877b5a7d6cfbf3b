// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>

#include "edminvert/latent.hpp"

namespace edminvert {

/// Counter-based SplitMix64: draw n is mix(seed + (n + 1)·0x9E3779B97F4A7C15)
/// with the standard SplitMix64 finalizer. Normals use Box–Muller on 53-bit
/// uniforms, u1 in (0, 1] and u2 in [0, 1), emitting the cosine branch first
/// and the sine branch on the following call. The output sequence is fixed by
/// the seed alone.
class NormalRng {
public:
    explicit NormalRng(std::uint64_t seed) noexcept : seed_(seed) {}

    static std::uint64_t mix(std::uint64_t z) noexcept;

    std::uint64_t next_u64() noexcept;
    double next_normal() noexcept;

    /// Tensor of independent standard normal draws, filled in row-major order.
    LatentTensor normal_tensor(const Shape& shape);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
    std::optional<double> spare_;
};

}  // namespace edminvert
