// SPDX-License-Identifier: Apache-2.0
#pragma once

// Framed TCP protocol for attaching an out-of-process raw network.
//
// Frame (little-endian):
//   magic "VSDN" (0x56 0x53 0x44 0x4E) | u32 type | u64 payload length | payload
// Types: 1 request, 2 response, 3 error.
//
// Request payload:
//   u32 header length | JSON header | input tensor f32s | [cond tensor f32s] | [extra bytes]
//   header = {"sigma", "c_noise", "shape": [F,C,H,W], "cond_shape": [1,C,H,W] | null, "cond_extra_len"}
// Response payload: output tensor f32s, shape equal to the request's.
// Error payload: UTF-8 message.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "edminvert/denoiser.hpp"

namespace edminvert::wire {

enum class MessageType : std::uint32_t {
    request = 1,
    response = 2,
    error = 3,
};

inline constexpr std::size_t kFrameHeaderSize = 16;
inline constexpr std::uint64_t kMaxPayload = std::uint64_t{1} << 32;

struct Frame {
    MessageType type = MessageType::request;
    std::vector<std::uint8_t> payload;
};

std::vector<std::uint8_t> encode_frame(const Frame& frame);

/// Parses a frame header; returns the type and payload length.
std::pair<MessageType, std::uint64_t> decode_frame_header(std::span<const std::uint8_t> header);

/// Decode one complete frame (header + payload, nothing else).
Frame decode_frame(std::span<const std::uint8_t> bytes);

struct DenoiseRequest {
    double sigma = 0.0;
    double c_noise = 0.0;
    LatentTensor input;
    ConditioningPayload cond;
};

std::vector<std::uint8_t> encode_request(const DenoiseRequest& request);
DenoiseRequest decode_request(std::span<const std::uint8_t> payload);

std::vector<std::uint8_t> encode_response(const LatentTensor& output);
/// Throws ShapeMismatchError when the payload does not hold `expected` floats.
LatentTensor decode_response(std::span<const std::uint8_t> payload, const Shape& expected);

/// Blocking TCP stream with a per-operation timeout.
class Connection {
public:
    Connection() = default;
    explicit Connection(int fd, std::chrono::milliseconds timeout);
    Connection(Connection&& other) noexcept;
    Connection& operator=(Connection&& other) noexcept;
    Connection(const Connection&) = delete;
    Connection& operator=(const Connection&) = delete;
    ~Connection();

    static Connection connect(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout);

    bool is_open() const noexcept { return fd_ >= 0; }
    void close() noexcept;

    void send_all(std::span<const std::uint8_t> bytes);
    /// Reads exactly n bytes. Returns false on clean EOF before the first byte.
    bool recv_exact(std::span<std::uint8_t> out);

    /// True when data (or EOF) is pending within `wait`.
    bool wait_readable(std::chrono::milliseconds wait) const;

    void send_frame(const Frame& frame);
    /// Returns false on clean EOF between frames.
    bool recv_frame(Frame& frame);

private:
    int fd_ = -1;
    std::chrono::milliseconds timeout_{0};
};

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;

    static Endpoint parse(const std::string& text);
    std::string str() const { return host + ":" + std::to_string(port); }
};

/// Timeout from EDMINVERT_TIMEOUT_SECS when set, otherwise `fallback`.
double timeout_from_env(double fallback);

/// Client side: one persistent connection, one request in flight.
class ExternalDenoiser final : public Denoiser {
public:
    ExternalDenoiser(Endpoint endpoint, double timeout_secs = kDefaultTimeoutSecs);

    LatentTensor raw_apply(const LatentTensor& u, const NoiseLevel& level, const ConditioningPayload& cond) override;
    std::string kind() const override { return "external"; }

    const Endpoint& endpoint() const noexcept { return endpoint_; }

private:
    Endpoint endpoint_;
    std::chrono::milliseconds timeout_;
    Connection conn_;
};

/// Free-function form of the client call.
LatentTensor external_denoise(ExternalDenoiser& client, double sigma, double c_noise, const LatentTensor& u,
                              const ConditioningPayload& cond);

/// Minimal single-threaded server speaking the protocol; used by tests and
/// the reference server tool. Connections are handled one at a time.
class DenoiserServer {
public:
    using Handler = std::function<LatentTensor(const DenoiseRequest&)>;

    explicit DenoiserServer(Handler handler, std::uint16_t port = 0, const std::string& host = "127.0.0.1");
    ~DenoiserServer();
    DenoiserServer(const DenoiserServer&) = delete;
    DenoiserServer& operator=(const DenoiserServer&) = delete;

    std::uint16_t port() const noexcept { return port_; }

    /// Serve on a background thread until stop().
    void start();
    /// Serve on the calling thread until stop() is called from elsewhere.
    void serve_forever();
    void stop();

private:
    void serve_connection(Connection& conn);

    Handler handler_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    std::thread thread_;
};

DenoiserServer::Handler echo_handler();
DenoiserServer::Handler zero_handler();
/// Raw output of the isotropic Gaussian posterior (μ, s) presented through
/// raw_from_posterior at the request's sigma.
DenoiserServer::Handler iso_gaussian_handler(LatentTensor mu, double s, double sigma_data, bool conditioned = true);

}  // namespace edminvert::wire
