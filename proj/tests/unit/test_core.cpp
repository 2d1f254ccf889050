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

#include "picospec/core.hpp"
#include "support/stats.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

using namespace picospec;

TEST_CASE("validate_dense accepts well-formed vectors") {
    CHECK_NOTHROW(DenseDistribution::validate({0.5f, 0.5f}));
    CHECK_NOTHROW(DenseDistribution::validate({1.0f, 0.0f}));  // degenerate point mass

    std::mt19937_64 rng(7);
    for (int i = 0; i < 200; ++i) {
        const std::size_t v = 2 + rng() % 64;
        std::vector<double> w(v);
        double sum = 0.0;
        for (auto& x : w) {
            x = static_cast<double>(rng() >> 11) * 0x1.0p-53 + 1e-9;
            sum += x;
        }
        std::vector<float> probs(v);
        for (std::size_t j = 0; j < v; ++j) probs[j] = static_cast<float>(w[j] / sum);
        const auto d = DenseDistribution::validate(probs);
        CHECK(d.size() == v);
        CHECK(std::abs(d.total_mass() - 1.0) <= kMassTolerance);
        for (float p : d.probs()) CHECK(p >= 0.0f);
    }
}

TEST_CASE("validate_dense rejects bad mass") {
    CHECK_THROWS_MATCHES(DenseDistribution::validate({0.6f, 0.6f}), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == Errc::NotNormalized; }));
    CHECK_THROWS_MATCHES(DenseDistribution::validate({1.2f, -0.2f}), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == Errc::NegativeMass; }));
    CHECK_THROWS_AS(DenseDistribution::validate({0.4f, 0.4f}), Error);
}

TEST_CASE("random streams replay identically for equal seed and label") {
    RandomStream a(42, StreamLabel::EdgeDraft);
    RandomStream b(42, StreamLabel::EdgeDraft);
    for (int i = 0; i < 1000; ++i) {
        CHECK(a.next_uniform() == b.next_uniform());
    }
    // Keyed access matches the sequential walk.
    RandomStream c(42, StreamLabel::EdgeDraft);
    RandomStream d(42, StreamLabel::EdgeDraft);
    for (std::uint64_t i = 0; i < 100; ++i) {
        CHECK(c.next_uniform() == d.uniform_at(i));
    }
}

TEST_CASE("random stream mean converges") {
    RandomStream s(123, StreamLabel::CloudAccept);
    double sum = 0.0;
    const std::size_t n = 1000000;
    for (std::size_t i = 0; i < n; ++i) sum += s.next_uniform();
    CHECK(std::abs(sum / static_cast<double>(n) - 0.5) < 0.002);
    CHECK(s.draws() == n);
}

TEST_CASE("streams with different labels pass uniformity and independence checks") {
    const std::size_t n = 100000;
    const StreamLabel labels[] = {StreamLabel::EdgeDraft, StreamLabel::CloudAccept,
                                  StreamLabel::EdgeResample, StreamLabel::Network};
    std::vector<std::vector<double>> draws;
    for (StreamLabel label : labels) {
        RandomStream s(2024, label);
        std::vector<double> u(n);
        for (auto& x : u) x = s.next_uniform();
        CHECK(testsupport::ks_statistic_uniform(u) < testsupport::ks_critical_001(n));
        draws.push_back(std::move(u));
    }
    // Pairwise: under independence (u - v) mod 1 is uniform; identical streams
    // would collapse it to a point mass.
    for (std::size_t i = 0; i < draws.size(); ++i) {
        for (std::size_t j = i + 1; j < draws.size(); ++j) {
            std::vector<double> delta(n);
            for (std::size_t k = 0; k < n; ++k) {
                double x = draws[i][k] - draws[j][k];
                if (x < 0.0) x += 1.0;
                delta[k] = x;
            }
            CHECK(testsupport::ks_statistic_uniform(delta) < testsupport::ks_critical_001(n));
        }
    }
}

TEST_CASE("sample_dense walks the inverse CDF by ascending id") {
    const auto d = DenseDistribution::validate({0.25f, 0.5f, 0.25f});
    CHECK(sample_dense(d, 0.0) == 0);
    CHECK(sample_dense(d, 0.24) == 0);
    CHECK(sample_dense(d, 0.26) == 1);
    CHECK(sample_dense(d, 0.74) == 1);
    CHECK(sample_dense(d, 0.76) == 2);
    CHECK(sample_dense(d, 0.999999) == 2);

    const auto point = DenseDistribution::validate({0.0f, 1.0f, 0.0f});
    for (double u : {0.0, 0.3, 0.99}) CHECK(sample_dense(point, u) == 1);
}

TEST_CASE("sparse distribution construction enforces its invariants") {
    CHECK_NOTHROW(SparseDistribution::from_entries({{3, 0.5f}, {1, 0.3f}, {7, 0.2f}}));
    // increasing probabilities
    CHECK_THROWS_AS(SparseDistribution::from_entries({{1, 0.2f}, {2, 0.5f}}), Error);
    // duplicate ids
    CHECK_THROWS_AS(SparseDistribution::from_entries({{1, 0.5f}, {1, 0.5f}}), Error);
    // non-positive mass
    CHECK_THROWS_AS(SparseDistribution::from_entries({{1, 0.0f}}), Error);
    // mass above one
    CHECK_THROWS_AS(SparseDistribution::from_entries({{1, 0.9f}, {2, 0.9f}}), Error);
}

TEST_CASE("session config range checks") {
    SessionConfig cfg;
    cfg.vocab_size = 16;
    cfg.gamma = 4;
    cfg.top_k = 8;
    CHECK_NOTHROW(cfg.validate());
    cfg.gamma = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.gamma = 65;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.gamma = 4;
    cfg.top_k = 17;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.top_k = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.top_k = 8;
    cfg.vocab_size = 1;
    CHECK_THROWS_AS(cfg.validate(), Error);
}
