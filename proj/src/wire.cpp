// SPDX-License-Identifier: Apache-2.0
#include "edminvert/wire.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <json.hpp>

#include "edminvert/byte_io.hpp"
#include "edminvert/errors.hpp"

namespace edminvert::wire {

namespace {

constexpr std::uint8_t kMagic[4] = {0x56, 0x53, 0x44, 0x4E};

std::string errno_text() { return std::strerror(errno); }

Shape shape_from_json(const nlohmann::json& j, const char* field) {
    if (!j.is_array() || j.size() != 4) throw ProtocolError(std::string("request header: ") + field + " must be [F,C,H,W]");
    Shape s{j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>(), j[3].get<std::size_t>()};
    if (s.numel() == 0) throw ProtocolError(std::string("request header: ") + field + " has a zero dimension");
    return s;
}

nlohmann::json shape_to_json(const Shape& s) { return {s.frames, s.channels, s.height, s.width}; }

}  // namespace

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    out.reserve(kFrameHeaderSize + frame.payload.size());
    le::put_u32(out, static_cast<std::uint32_t>(frame.type));
    le::put_u64(out, frame.payload.size());
    out.insert(out.end(), frame.payload.begin(), frame.payload.end());
    return out;
}

std::pair<MessageType, std::uint64_t> decode_frame_header(std::span<const std::uint8_t> header) {
    if (header.size() < kFrameHeaderSize) throw ProtocolError("frame header truncated");
    if (std::memcmp(header.data(), kMagic, 4) != 0) throw ProtocolError("frame has bad magic");
    const std::uint32_t type = le::get_u32(header, 4);
    if (type < 1 || type > 3) throw ProtocolError("frame has unknown message type " + std::to_string(type));
    const std::uint64_t length = le::get_u64(header, 8);
    if (length > kMaxPayload) throw ProtocolError("frame payload length " + std::to_string(length) + " too large");
    return {static_cast<MessageType>(type), length};
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
    const auto [type, length] = decode_frame_header(bytes);
    if (bytes.size() != kFrameHeaderSize + length) {
        throw ProtocolError("frame length field " + std::to_string(length) + " does not match " +
                            std::to_string(bytes.size() - kFrameHeaderSize) + " payload bytes");
    }
    return {type, std::vector<std::uint8_t>(bytes.begin() + kFrameHeaderSize, bytes.end())};
}

std::vector<std::uint8_t> encode_request(const DenoiseRequest& request) {
    nlohmann::json header = {
        {"sigma", request.sigma},
        {"c_noise", request.c_noise},
        {"shape", shape_to_json(request.input.shape())},
        {"cond_shape", request.cond.first_frame ? shape_to_json(request.cond.first_frame->shape()) : nullptr},
        {"cond_extra_len", request.cond.extra.size()},
    };
    const std::string text = header.dump();
    std::vector<std::uint8_t> out;
    le::put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    le::put_f32s(out, request.input.data());
    if (request.cond.first_frame) le::put_f32s(out, request.cond.first_frame->data());
    out.insert(out.end(), request.cond.extra.begin(), request.cond.extra.end());
    return out;
}

DenoiseRequest decode_request(std::span<const std::uint8_t> payload) {
    if (payload.size() < 4) throw ProtocolError("request payload truncated before header length");
    const std::size_t header_len = le::get_u32(payload, 0);
    if (payload.size() < 4 + header_len) throw ProtocolError("request payload truncated inside JSON header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(payload.begin() + 4, payload.begin() + 4 + static_cast<std::ptrdiff_t>(header_len));
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("request header is not valid JSON: ") + e.what());
    }
    DenoiseRequest req;
    std::size_t extra_len = 0;
    std::optional<Shape> cond_shape;
    Shape shape;
    try {
        req.sigma = header.at("sigma").get<double>();
        req.c_noise = header.at("c_noise").get<double>();
        shape = shape_from_json(header.at("shape"), "shape");
        if (const auto& cs = header.at("cond_shape"); !cs.is_null()) cond_shape = shape_from_json(cs, "cond_shape");
        extra_len = header.at("cond_extra_len").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("request header missing or mistyped field: ") + e.what());
    }
    const std::size_t tensor_bytes = 4 * shape.numel();
    const std::size_t cond_bytes = cond_shape ? 4 * cond_shape->numel() : 0;
    const std::size_t expected = 4 + header_len + tensor_bytes + cond_bytes + extra_len;
    if (payload.size() != expected) {
        throw ProtocolError("request payload is " + std::to_string(payload.size()) + " bytes, header implies " +
                            std::to_string(expected));
    }
    std::size_t offset = 4 + header_len;
    req.input = LatentTensor(shape, le::get_f32s(payload, offset, shape.numel()));
    offset += tensor_bytes;
    if (cond_shape) {
        req.cond.first_frame = LatentTensor(*cond_shape, le::get_f32s(payload, offset, cond_shape->numel()));
        offset += cond_bytes;
    }
    req.cond.extra.assign(payload.begin() + static_cast<std::ptrdiff_t>(offset), payload.end());
    return req;
}

std::vector<std::uint8_t> encode_response(const LatentTensor& output) {
    std::vector<std::uint8_t> out;
    le::put_f32s(out, output.data());
    return out;
}

LatentTensor decode_response(std::span<const std::uint8_t> payload, const Shape& expected) {
    if (payload.size() != 4 * expected.numel()) {
        throw ShapeMismatchError("response holds " + std::to_string(payload.size()) + " bytes, expected " +
                                 std::to_string(4 * expected.numel()) + " for shape " + expected.str());
    }
    return LatentTensor(expected, le::get_f32s(payload, 0, expected.numel()));
}

// ---------------------------------------------------------------------------

Connection::Connection(int fd, std::chrono::milliseconds timeout) : fd_(fd), timeout_(timeout) {
    timeval tv{};
    tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
    tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

Connection::Connection(Connection&& other) noexcept : fd_(other.fd_), timeout_(other.timeout_) { other.fd_ = -1; }

Connection& Connection::operator=(Connection&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.fd_;
        timeout_ = other.timeout_;
        other.fd_ = -1;
    }
    return *this;
}

Connection::~Connection() { close(); }

void Connection::close() noexcept {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

Connection Connection::connect(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* found = nullptr;
    const std::string service = std::to_string(port);
    if (int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &found); rc != 0) {
        throw TransportError("cannot resolve " + host + ": " + ::gai_strerror(rc));
    }
    std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(found, &::freeaddrinfo);
    std::string last_error = "no addresses";
    for (addrinfo* ai = found; ai != nullptr; ai = ai->ai_next) {
        const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) {
            last_error = errno_text();
            continue;
        }
        Connection conn(fd, timeout);  // timeouts also bound connect()
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) return conn;
        if (errno == EINPROGRESS || errno == EAGAIN || errno == ETIMEDOUT) {
            throw TimeoutError("timed out connecting to " + host + ":" + service);
        }
        last_error = errno_text();
    }
    throw TransportError("cannot connect to " + host + ":" + service + ": " + last_error);
}

void Connection::send_all(std::span<const std::uint8_t> bytes) {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            if (errno == EAGAIN || errno == EWOULDBLOCK) throw TimeoutError("send timed out");
            throw TransportError("send failed: " + errno_text());
        }
        sent += static_cast<std::size_t>(n);
    }
}

bool Connection::recv_exact(std::span<std::uint8_t> out) {
    std::size_t got = 0;
    while (got < out.size()) {
        const ssize_t n = ::recv(fd_, out.data() + got, out.size() - got, 0);
        if (n == 0) {
            if (got == 0) return false;
            throw ProtocolError("connection closed mid-frame after " + std::to_string(got) + " of " +
                                std::to_string(out.size()) + " bytes");
        }
        if (n < 0) {
            if (errno == EINTR) continue;
            if (errno == EAGAIN || errno == EWOULDBLOCK) {
                throw TimeoutError("no data within " + std::to_string(timeout_.count()) + " ms");
            }
            throw TransportError("recv failed: " + errno_text());
        }
        got += static_cast<std::size_t>(n);
    }
    return true;
}

bool Connection::wait_readable(std::chrono::milliseconds wait) const {
    pollfd p{fd_, POLLIN, 0};
    return ::poll(&p, 1, static_cast<int>(wait.count())) > 0;
}

void Connection::send_frame(const Frame& frame) { send_all(encode_frame(frame)); }

bool Connection::recv_frame(Frame& frame) {
    std::uint8_t header[kFrameHeaderSize];
    if (!recv_exact(header)) return false;
    const auto [type, length] = decode_frame_header(header);
    frame.type = type;
    frame.payload.resize(length);
    if (length > 0 && !recv_exact(frame.payload)) throw ProtocolError("connection closed before payload");
    return true;
}

Endpoint Endpoint::parse(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
        throw ConfigError("endpoint must be host:port, got '" + text + "'");
    }
    Endpoint e;
    e.host = text.substr(0, colon);
    if (e.host.size() > 2 && e.host.front() == '[' && e.host.back() == ']') e.host = e.host.substr(1, e.host.size() - 2);
    char* end = nullptr;
    const long port = std::strtol(text.c_str() + colon + 1, &end, 10);
    if (*end != '\0' || port <= 0 || port > 65535) throw ConfigError("endpoint port invalid in '" + text + "'");
    e.port = static_cast<std::uint16_t>(port);
    return e;
}

double timeout_from_env(double fallback) {
    const char* value = std::getenv("EDMINVERT_TIMEOUT_SECS");
    if (value == nullptr || *value == '\0') return fallback;
    char* end = nullptr;
    const double secs = std::strtod(value, &end);
    if (*end != '\0' || !(secs > 0.0) || !std::isfinite(secs)) {
        throw ConfigError(std::string("EDMINVERT_TIMEOUT_SECS must be a positive number, got '") + value + "'");
    }
    return secs;
}

ExternalDenoiser::ExternalDenoiser(Endpoint endpoint, double timeout_secs)
    : endpoint_(std::move(endpoint)),
      timeout_(std::chrono::milliseconds(static_cast<long long>(std::ceil(timeout_secs * 1000.0)))) {
    if (!(timeout_secs > 0.0)) throw ConfigError("external denoiser timeout must be > 0");
}

LatentTensor ExternalDenoiser::raw_apply(const LatentTensor& u, const NoiseLevel& level,
                                         const ConditioningPayload& cond) {
    DenoiseRequest req{level.sigma, level.c_noise, u, cond};
    try {
        if (!conn_.is_open()) conn_ = Connection::connect(endpoint_.host, endpoint_.port, timeout_);
        conn_.send_frame({MessageType::request, encode_request(req)});
        Frame reply;
        if (!conn_.recv_frame(reply)) throw ProtocolError("server closed the connection without replying");
        switch (reply.type) {
        case MessageType::response: return decode_response(reply.payload, u.shape());
        case MessageType::error:
            throw RemoteError("external denoiser error: " + std::string(reply.payload.begin(), reply.payload.end()));
        case MessageType::request: break;
        }
        throw ProtocolError("server sent a request frame");
    } catch (const TransportError&) {
        conn_.close();
        throw;
    }
}

LatentTensor external_denoise(ExternalDenoiser& client, double sigma, double c_noise, const LatentTensor& u,
                              const ConditioningPayload& cond) {
    return client.raw_apply(u, {sigma, c_noise}, cond);
}

// ---------------------------------------------------------------------------

DenoiserServer::DenoiserServer(Handler handler, std::uint16_t port, const std::string& host)
    : handler_(std::move(handler)) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw TransportError("socket failed: " + errno_text());
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(listen_fd_);
        throw ConfigError("server host must be an IPv4 address, got '" + host + "'");
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 8) != 0) {
        const std::string err = errno_text();
        ::close(listen_fd_);
        throw TransportError("cannot listen on " + host + ":" + std::to_string(port) + ": " + err);
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

DenoiserServer::~DenoiserServer() {
    stop();
    if (listen_fd_ >= 0) ::close(listen_fd_);
}

void DenoiserServer::start() {
    thread_ = std::thread([this] { serve_forever(); });
}

void DenoiserServer::stop() {
    stopping_ = true;
    if (thread_.joinable()) thread_.join();
}

void DenoiserServer::serve_forever() {
    while (!stopping_) {
        pollfd p{listen_fd_, POLLIN, 0};
        if (::poll(&p, 1, 50) <= 0) continue;
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) continue;
        Connection conn(fd, std::chrono::seconds(30));
        try {
            serve_connection(conn);
        } catch (const std::exception&) {
            // Drop the connection; the next client gets a fresh one.
        }
    }
}

void DenoiserServer::serve_connection(Connection& conn) {
    while (!stopping_) {
        // Idle in short slices so stop() stays responsive.
        if (!conn.wait_readable(std::chrono::milliseconds(50))) continue;
        Frame frame;
        if (!conn.recv_frame(frame)) return;
        if (frame.type != MessageType::request) {
            const std::string msg = "expected a request frame";
            conn.send_frame({MessageType::error, {msg.begin(), msg.end()}});
            return;
        }
        try {
            const DenoiseRequest req = decode_request(frame.payload);
            const LatentTensor out = handler_(req);
            conn.send_frame({MessageType::response, encode_response(out)});
        } catch (const std::exception& e) {
            const std::string msg = e.what();
            conn.send_frame({MessageType::error, {msg.begin(), msg.end()}});
        }
    }
}

DenoiserServer::Handler echo_handler() {
    return [](const DenoiseRequest& req) { return req.input; };
}

DenoiserServer::Handler zero_handler() {
    return [](const DenoiseRequest& req) { return LatentTensor::filled(req.input.shape(), 0.0f); };
}

DenoiserServer::Handler iso_gaussian_handler(LatentTensor mu, double s, double sigma_data, bool conditioned) {
    auto model = std::make_shared<IsoGaussianDenoiser>(std::move(mu), s, sigma_data, conditioned);
    return [model](const DenoiseRequest& req) { return model->raw_apply(req.input, {req.sigma, req.c_noise}, req.cond); };
}

}  // namespace edminvert::wire
