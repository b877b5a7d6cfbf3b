// SPDX-License-Identifier: Apache-2.0
#pragma once

// VSLT latent tensor files.
//
//   offset  size  field
//   0       4     magic "VSLT" (0x56 0x53 0x4C 0x54)
//   4       1     version, 0x01
//   5       1     dtype, 0x01 = float32 little-endian
//   6       2     reserved, zero
//   8       4     ndim (u32 LE), always 4
//   12      16    F, C, H, W (u32 LE each)
//   28      4·N   N = F·C·H·W float32 LE, row-major, width fastest

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "edminvert/latent.hpp"

namespace edminvert {

inline constexpr std::size_t kVsltHeaderSize = 28;

std::vector<std::uint8_t> encode_vslt(const LatentTensor& x);

/// Throws FormatError naming the byte offset of the first problem.
LatentTensor decode_vslt(std::span<const std::uint8_t> bytes);

void save_tensor(const LatentTensor& x, const std::filesystem::path& path);
LatentTensor load_tensor(const std::filesystem::path& path);

}  // namespace edminvert
