// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace edminvert {

/// Error categories. Each maps to one process exit code in the CLI.
enum class ErrorKind {
    config,     // 2
    format,     // 3
    numerical,  // 4
    transport,  // 5
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& what) : Error(ErrorKind::format, what) {}
};

struct NumericalError : Error {
    explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

/// A channel whose standard deviation is too small to divide by.
struct DegenerateChannelError : NumericalError {
    DegenerateChannelError(std::size_t channel, const std::string& what)
        : NumericalError(what), channel(channel) {}
    std::size_t channel;
};

struct TransportError : Error {
    explicit TransportError(const std::string& what) : Error(ErrorKind::transport, what) {}
};

struct TimeoutError : TransportError {
    explicit TimeoutError(const std::string& what) : TransportError(what) {}
};

/// Frame could not be parsed (bad magic, unexpected type, inconsistent lengths).
struct ProtocolError : TransportError {
    explicit ProtocolError(const std::string& what) : TransportError(what) {}
};

/// Well-formed response whose tensor does not have the requested shape.
struct ShapeMismatchError : TransportError {
    explicit ShapeMismatchError(const std::string& what) : TransportError(what) {}
};

/// The remote denoiser answered with an error frame.
struct RemoteError : TransportError {
    explicit RemoteError(const std::string& what) : TransportError(what) {}
};

inline int exit_code_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::format: return 3;
    case ErrorKind::numerical: return 4;
    case ErrorKind::transport: return 5;
    }
    return 1;
}

}  // namespace edminvert
