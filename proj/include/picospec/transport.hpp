// Copyright 2026 The picospec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "picospec/core.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace picospec {

struct ChannelConfig {
    double one_way_latency_ms = 0.0;
    double bandwidth_bytes_per_ms = 1e9;
    double jitter_std_ms = 0.0;

    void validate() const {
        if (one_way_latency_ms < 0.0) throw Error(Errc::DomainError, "latency below zero");
        if (!(bandwidth_bytes_per_ms > 0.0)) throw Error(Errc::DomainError, "bandwidth must be positive");
        if (jitter_std_ms < 0.0) throw Error(Errc::DomainError, "jitter std below zero");
    }
};

enum class Direction : std::size_t { EdgeToCloud = 0, CloudToEdge = 1 };

/// Deterministic duplex channel for the simulator. Arrival time is
/// send + latency + size/bandwidth + jitter, clamped so each direction stays
/// FIFO. Jitter draws (truncated Gaussian, clamped at zero) come from the
/// seeded Network stream and are consumed only when jitter is enabled.
class SimChannel {
public:
    SimChannel(ChannelConfig config, std::uint64_t network_seed)
        : config_(config), jitter_(network_seed, StreamLabel::Network) {
        config_.validate();
    }

    const ChannelConfig& config() const { return config_; }

    /// Schedules one frame; returns its arrival time.
    double send(Direction dir, std::size_t frame_size, double now) {
        double arrival = now + config_.one_way_latency_ms +
                         static_cast<double>(frame_size) / config_.bandwidth_bytes_per_ms;
        if (config_.jitter_std_ms > 0.0) {
            arrival += config_.jitter_std_ms * truncated_gauss();
        }
        double& last = last_arrival_[static_cast<std::size_t>(dir)];
        arrival = std::max(arrival, std::max(last, now));
        last = arrival;
        return arrival;
    }

private:
    double truncated_gauss() {
        const double u1 = std::max(jitter_.next_uniform(), 1e-18);
        const double u2 = jitter_.next_uniform();
        const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
        return std::max(0.0, z);
    }

    ChannelConfig config_;
    RandomStream jitter_;
    double last_arrival_[2] = {0.0, 0.0};
};

// ---------------------------------------------------------------------------
// Stream-socket transport for the two-process demo. Frames travel with a
// 4-byte little-endian length prefix over a reliable ordered byte stream; the
// frame codec is the same one the simulator runs.
// ---------------------------------------------------------------------------

class SocketConnection {
public:
    SocketConnection() = default;
    explicit SocketConnection(int fd) : fd_(fd) {}
    SocketConnection(SocketConnection&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
    SocketConnection& operator=(SocketConnection&& other) noexcept {
        if (this != &other) {
            close();
            fd_ = std::exchange(other.fd_, -1);
        }
        return *this;
    }
    SocketConnection(const SocketConnection&) = delete;
    SocketConnection& operator=(const SocketConnection&) = delete;
    ~SocketConnection() { close(); }

    static SocketConnection connect_to(const std::string& host, std::uint16_t port) {
        const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw Error(Errc::ConnectionRefused, "socket: " + std::string(std::strerror(errno)));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
            ::close(fd);
            throw Error(Errc::ConnectionRefused, "bad address: " + host);
        }
        if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            const int err = errno;
            ::close(fd);
            throw Error(Errc::ConnectionRefused,
                        host + ":" + std::to_string(port) + " (" + std::strerror(err) + ")");
        }
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        return SocketConnection(fd);
    }

    bool valid() const { return fd_ >= 0; }

    void send_frame(std::span<const std::uint8_t> bytes) {
        std::uint8_t prefix[4];
        const std::uint32_t len = static_cast<std::uint32_t>(bytes.size());
        for (int i = 0; i < 4; ++i) prefix[i] = static_cast<std::uint8_t>((len >> (8 * i)) & 0xFF);
        write_all(prefix, sizeof(prefix));
        write_all(bytes.data(), bytes.size());
    }

    /// Receives one frame. Returns nullopt on a clean shutdown at a frame
    /// boundary; throws PeerClosed if the stream dies mid-frame.
    std::optional<std::vector<std::uint8_t>> recv_frame() {
        std::uint8_t prefix[4];
        const std::size_t got = read_some(prefix, sizeof(prefix));
        if (got == 0) return std::nullopt;
        if (got < sizeof(prefix)) {
            throw Error(Errc::PeerClosed, "stream ended inside a length prefix");
        }
        std::uint32_t len = 0;
        for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(prefix[i]) << (8 * i);
        std::vector<std::uint8_t> buf(len);
        if (read_some(buf.data(), len) < len) {
            throw Error(Errc::PeerClosed, "stream ended inside a frame body");
        }
        return buf;
    }

    void close() {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    void write_all(const std::uint8_t* data, std::size_t n) {
        std::size_t sent = 0;
        while (sent < n) {
            const ssize_t rc = ::send(fd_, data + sent, n - sent, MSG_NOSIGNAL);
            if (rc <= 0) {
                if (rc < 0 && errno == EINTR) continue;
                throw Error(Errc::PeerClosed, "send: " + std::string(std::strerror(errno)));
            }
            sent += static_cast<std::size_t>(rc);
        }
    }

    /// Reads exactly n bytes unless the peer shuts down; returns bytes read.
    std::size_t read_some(std::uint8_t* data, std::size_t n) {
        std::size_t got = 0;
        while (got < n) {
            const ssize_t rc = ::recv(fd_, data + got, n - got, 0);
            if (rc == 0) return got;
            if (rc < 0) {
                if (errno == EINTR) continue;
                throw Error(Errc::PeerClosed, "recv: " + std::string(std::strerror(errno)));
            }
            got += static_cast<std::size_t>(rc);
        }
        return got;
    }

    int fd_ = -1;
};

class SocketListener {
public:
    SocketListener() = default;
    SocketListener(SocketListener&& other) noexcept
        : fd_(std::exchange(other.fd_, -1)), port_(other.port_) {}
    SocketListener& operator=(SocketListener&& other) noexcept {
        if (this != &other) {
            close();
            fd_ = std::exchange(other.fd_, -1);
            port_ = other.port_;
        }
        return *this;
    }
    SocketListener(const SocketListener&) = delete;
    SocketListener& operator=(const SocketListener&) = delete;
    ~SocketListener() { close(); }

    static SocketListener bind_listen(const std::string& host, std::uint16_t port) {
        const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw Error(Errc::ConnectionRefused, "socket: " + std::string(std::strerror(errno)));
        int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
            ::close(fd);
            throw Error(Errc::ConnectionRefused, "bad address: " + host);
        }
        if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
            ::listen(fd, 1) != 0) {
            const int err = errno;
            ::close(fd);
            throw Error(Errc::ConnectionRefused, "bind/listen: " + std::string(std::strerror(err)));
        }
        sockaddr_in bound{};
        socklen_t len = sizeof(bound);
        ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
        SocketListener l;
        l.fd_ = fd;
        l.port_ = ntohs(bound.sin_port);
        return l;
    }

    std::uint16_t port() const { return port_; }

    SocketConnection accept_one() {
        while (true) {
            const int fd = ::accept(fd_, nullptr, nullptr);
            if (fd >= 0) {
                int one = 1;
                ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
                return SocketConnection(fd);
            }
            if (errno != EINTR) {
                throw Error(Errc::ConnectionRefused, "accept: " + std::string(std::strerror(errno)));
            }
        }
    }

    void close() {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

/// Splits "host:port" into its parts.
inline std::pair<std::string, std::uint16_t> parse_address(const std::string& addr) {
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 >= addr.size()) {
        throw Error(Errc::BadScenario, "address must look like host:port, got " + addr);
    }
    const std::string host = addr.substr(0, colon);
    const int port = std::stoi(addr.substr(colon + 1));
    if (port < 0 || port > 65535) {
        throw Error(Errc::BadScenario, "port out of range in " + addr);
    }
    return {host, static_cast<std::uint16_t>(port)};
}

}  // namespace picospec
