// SPDX-License-Identifier: Apache-2.0
#pragma once

// Little-endian primitives shared by the VSLT file format and the wire protocol.

#include <bit>
#include <cstdint>
#include <span>
#include <vector>

namespace edminvert::le {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f32s(std::vector<std::uint8_t>& out, std::span<const float> values) {
    out.reserve(out.size() + values.size() * 4);
    for (float f : values) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t offset) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
    return v;
}

inline std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t offset) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[offset + i]) << (8 * i);
    return v;
}

/// Decode `count` floats starting at `offset`. Caller checks bounds.
inline std::vector<float> get_f32s(std::span<const std::uint8_t> in, std::size_t offset, std::size_t count) {
    std::vector<float> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = std::bit_cast<float>(get_u32(in, offset + 4 * i));
    return out;
}

}  // namespace edminvert::le
