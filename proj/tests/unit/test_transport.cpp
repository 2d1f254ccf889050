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

#include "picospec/transport.hpp"
#include "picospec/wire.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <thread>
#include <vector>

using namespace picospec;

TEST_CASE("transmission delay follows latency plus size over bandwidth") {
    SimChannel ch(ChannelConfig{30.0, 1000.0, 0.0}, 1);
    CHECK(ch.send(Direction::EdgeToCloud, 37, 0.0) == Catch::Approx(30.037).epsilon(1e-12));
}

TEST_CASE("an identity channel delivers immediately") {
    SimChannel ch(ChannelConfig{0.0, 1e18, 0.0}, 1);
    CHECK(ch.send(Direction::EdgeToCloud, 100, 5.0) == Catch::Approx(5.0).margin(1e-12));
}

TEST_CASE("each direction stays FIFO under jitter") {
    SimChannel ch(ChannelConfig{10.0, 100.0, 25.0}, 99);
    double prev_up = 0.0;
    double prev_down = 0.0;
    for (int i = 0; i < 2000; ++i) {
        const double t = static_cast<double>(i);
        const double up = ch.send(Direction::EdgeToCloud, 40, t);
        const double down = ch.send(Direction::CloudToEdge, 40, t);
        CHECK(up >= prev_up);
        CHECK(down >= prev_down);
        CHECK(up >= t);
        CHECK(down >= t);
        prev_up = up;
        prev_down = down;
    }
}

TEST_CASE("arrival schedules are deterministic in config and seed") {
    std::vector<double> a, b;
    for (int run = 0; run < 2; ++run) {
        SimChannel ch(ChannelConfig{5.0, 50.0, 3.0}, 1234);
        auto& out = run == 0 ? a : b;
        for (int i = 0; i < 500; ++i) {
            out.push_back(ch.send(Direction::EdgeToCloud, 20 + i % 60, static_cast<double>(i)));
        }
    }
    CHECK(a == b);
}

TEST_CASE("a zero-jitter ping measures the configured round trip") {
    const ChannelConfig cfg{25.0, 500.0, 0.0};
    SimChannel ch(cfg, 7);
    const std::size_t size = 48;
    const double up = ch.send(Direction::EdgeToCloud, size, 0.0);
    const double back = ch.send(Direction::CloudToEdge, size, up);
    const double expected = 2.0 * cfg.one_way_latency_ms +
                            2.0 * static_cast<double>(size) / cfg.bandwidth_bytes_per_ms;
    CHECK(back == Catch::Approx(expected).margin(1e-9));
}

TEST_CASE("socket endpoints exchange frames over loopback") {
    SocketListener listener = SocketListener::bind_listen("127.0.0.1", 0);
    const std::uint16_t port = listener.port();

    std::thread server([&]() {
        SocketConnection conn = listener.accept_one();
        while (auto frame = conn.recv_frame()) {
            conn.send_frame(*frame);  // echo
        }
    });

    SocketConnection client = SocketConnection::connect_to("127.0.0.1", port);
    const auto bytes = wire::encode(wire::Frame{7, wire::SeedBody{42}});
    for (int i = 0; i < 10; ++i) {
        client.send_frame(bytes);
        const auto echoed = client.recv_frame();
        REQUIRE(echoed.has_value());
        CHECK(*echoed == bytes);
    }
    client.close();
    server.join();
}

TEST_CASE("connecting to a dead port is refused") {
    std::uint16_t dead_port;
    {
        SocketListener l = SocketListener::bind_listen("127.0.0.1", 0);
        dead_port = l.port();
    }
    CHECK_THROWS_MATCHES(SocketConnection::connect_to("127.0.0.1", dead_port), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == Errc::ConnectionRefused; }));
}

TEST_CASE("a mid-frame disconnect surfaces as PeerClosed") {
    SocketListener listener = SocketListener::bind_listen("127.0.0.1", 0);
    const std::uint16_t port = listener.port();

    std::thread client([port]() {
        const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
        ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
        // Announce a 100-byte frame but deliver only 3 bytes before closing.
        const std::uint8_t bytes[7] = {100, 0, 0, 0, 1, 2, 3};
        ::send(fd, bytes, sizeof(bytes), MSG_NOSIGNAL);
        ::close(fd);
    });

    SocketConnection conn = listener.accept_one();
    CHECK_THROWS_MATCHES(conn.recv_frame(), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == Errc::PeerClosed; }));
    client.join();
}

TEST_CASE("a shutdown at a frame boundary reads as clean EOF") {
    SocketListener listener = SocketListener::bind_listen("127.0.0.1", 0);
    std::thread server([&]() {
        SocketConnection conn = listener.accept_one();
        conn.send_frame(wire::encode(wire::Frame{1, wire::SeedBody{3}}));
    });
    SocketConnection client = SocketConnection::connect_to("127.0.0.1", listener.port());
    REQUIRE(client.recv_frame().has_value());
    CHECK_FALSE(client.recv_frame().has_value());
    server.join();
}

TEST_CASE("address parsing") {
    const auto [host, port] = parse_address("127.0.0.1:8080");
    CHECK(host == "127.0.0.1");
    CHECK(port == 8080);
    CHECK_THROWS_AS(parse_address("nonsense"), Error);
    CHECK_THROWS_AS(parse_address("127.0.0.1:99999"), Error);
}

TEST_CASE("channel config validation") {
    CHECK_THROWS_AS(SimChannel(ChannelConfig{-1.0, 10.0, 0.0}, 1), Error);
    CHECK_THROWS_AS(SimChannel(ChannelConfig{0.0, 0.0, 0.0}, 1), Error);
    CHECK_THROWS_AS(SimChannel(ChannelConfig{0.0, 10.0, -2.0}, 1), Error);
}
