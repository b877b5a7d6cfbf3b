// SPDX-License-Identifier: Apache-2.0
#include "edminvert/vslt.hpp"

#include <array>
#include <fstream>
#include <iterator>

#include "edminvert/byte_io.hpp"
#include "edminvert/errors.hpp"

namespace edminvert {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{0x56, 0x53, 0x4C, 0x54};
constexpr std::uint8_t kVersion = 0x01;
constexpr std::uint8_t kDtypeF32 = 0x01;

[[noreturn]] void fail(std::size_t offset, const std::string& what) {
    throw FormatError("VSLT: " + what + " at byte offset " + std::to_string(offset));
}

}  // namespace

std::vector<std::uint8_t> encode_vslt(const LatentTensor& x) {
    std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
    out.reserve(kVsltHeaderSize + 4 * x.size());
    out.push_back(kVersion);
    out.push_back(kDtypeF32);
    out.push_back(0);
    out.push_back(0);
    le::put_u32(out, 4);
    const Shape& s = x.shape();
    for (std::size_t d : {s.frames, s.channels, s.height, s.width}) le::put_u32(out, static_cast<std::uint32_t>(d));
    le::put_f32s(out, x.data());
    return out;
}

LatentTensor decode_vslt(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kVsltHeaderSize) {
        fail(bytes.size(), "truncated header: expected " + std::to_string(kVsltHeaderSize) + " bytes, got " +
                               std::to_string(bytes.size()));
    }
    for (std::size_t i = 0; i < kMagic.size(); ++i) {
        if (bytes[i] != kMagic[i]) fail(i, "bad magic (not a VSLT file)");
    }
    if (bytes[4] != kVersion) fail(4, "unsupported version " + std::to_string(bytes[4]));
    if (bytes[5] != kDtypeF32) fail(5, "unsupported dtype " + std::to_string(bytes[5]));
    if (bytes[6] != 0 || bytes[7] != 0) fail(6, "reserved bytes must be zero");
    if (const auto ndim = le::get_u32(bytes, 8); ndim != 4) fail(8, "ndim must be 4, got " + std::to_string(ndim));

    Shape s{le::get_u32(bytes, 12), le::get_u32(bytes, 16), le::get_u32(bytes, 20), le::get_u32(bytes, 24)};
    const std::size_t dims[] = {s.frames, s.channels, s.height, s.width};
    for (std::size_t i = 0; i < 4; ++i) {
        if (dims[i] == 0) fail(12 + 4 * i, "zero dimension");
    }
    const std::size_t expected = kVsltHeaderSize + 4 * s.numel();
    if (bytes.size() != expected) {
        fail(std::min(bytes.size(), expected), "payload size mismatch: expected " + std::to_string(expected) +
                                                   " bytes for shape " + s.str() + ", got " +
                                                   std::to_string(bytes.size()));
    }
    return LatentTensor(s, le::get_f32s(bytes, kVsltHeaderSize, s.numel()));
}

void save_tensor(const LatentTensor& x, const std::filesystem::path& path) {
    const auto bytes = encode_vslt(x);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw FormatError("failed writing " + path.string());
}

LatentTensor load_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    try {
        return decode_vslt(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace edminvert
