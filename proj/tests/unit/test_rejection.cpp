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

#include "picospec/rejection.hpp"
#include "picospec/models.hpp"
#include "support/oracles.hpp"
#include "support/stats.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <random>
#include <vector>

using namespace picospec;

namespace {

StreamSet make_streams(std::uint64_t salt = 0) {
    StreamSeeds seeds;
    seeds.edge_draft = 101 + salt;
    seeds.cloud_accept = 202 + salt;
    seeds.edge_resample = 303 + salt;
    return StreamSet(seeds);
}

}  // namespace

TEST_CASE("accept test implements u < min(1, p/q)") {
    CHECK(accept_test(0.3, 0.3, 0.999));        // identical distributions always accept
    CHECK_FALSE(accept_test(0.2, 0.4, 0.6));    // threshold 0.5
    CHECK(accept_test(0.2, 0.4, 0.49));
    CHECK_FALSE(accept_test(0.0, 0.7, 0.0));    // zero target mass always rejects
    CHECK_THROWS_MATCHES(accept_test(0.5, 0.0, 0.5), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == Errc::DomainError; }));
    CHECK_THROWS_AS(accept_test(0.5, -0.1, 0.5), Error);
    CHECK_THROWS_AS(accept_test(0.5, 0.5, 1.0), Error);
}

TEST_CASE("top-k keeps the highest-probability entries") {
    const auto p = DenseDistribution::validate({0.1f, 0.7f, 0.2f});
    const auto sparse = topk_compress(p, 2);
    REQUIRE(sparse.size() == 2);
    CHECK(sparse.entries()[0] == SparseEntry{1, 0.7f});
    CHECK(sparse.entries()[1] == SparseEntry{2, 0.2f});
}

TEST_CASE("top-k with K=V keeps every positive entry and reconstructs the input") {
    std::mt19937_64 rng(4);
    const auto p = testsupport::random_dense(rng, 12);
    const auto sparse = topk_compress(p, 12);
    std::vector<float> rebuilt(12, 0.0f);
    for (const auto& e : sparse.entries()) rebuilt[e.id] = e.prob;
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(rebuilt[i] == p.at(static_cast<TokenId>(i)));
    }
}

TEST_CASE("top-k breaks ties by lower token id") {
    const auto p = DenseDistribution::validate(std::vector<float>(8, 0.125f));
    const auto sparse = topk_compress(p, 3);
    REQUIRE(sparse.size() == 3);
    CHECK(sparse.entries()[0].id == 0);
    CHECK(sparse.entries()[1].id == 1);
    CHECK(sparse.entries()[2].id == 2);
}

TEST_CASE("residual resampling on disjoint support returns the target token") {
    const auto sparse = SparseDistribution::from_entries({{1, 1.0f}});
    const auto q = DenseDistribution::validate({1.0f, 0.0f});
    RandomStream stream(9, StreamLabel::EdgeResample);
    for (int i = 0; i < 50; ++i) {
        CHECK(residual_resample(sparse, q, stream) == 1);
    }
}

TEST_CASE("zero residual mass falls back to the renormalized sparse target") {
    const auto q = DenseDistribution::validate({0.5f, 0.5f});
    const auto sparse = SparseDistribution::from_entries({{0, 0.5f}, {1, 0.5f}});
    RandomStream stream(10, StreamLabel::EdgeResample);
    std::map<TokenId, int> counts;
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[residual_resample(sparse, q, stream)];
    CHECK(std::abs(counts[0] / static_cast<double>(n) - 0.5) < 0.01);
    CHECK(std::abs(counts[1] / static_cast<double>(n) - 0.5) < 0.01);
}

TEST_CASE("residual frequencies match the hand-computed distribution") {
    // residual = max(0, P - Q) on the sparse support: {0: 0.3, 2: 0.2}
    const auto sparse = SparseDistribution::from_entries({{0, 0.5f}, {2, 0.3f}});
    const auto q = DenseDistribution::validate({0.2f, 0.5f, 0.1f, 0.2f});
    RandomStream stream(11, StreamLabel::EdgeResample);
    std::map<TokenId, int> counts;
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[residual_resample(sparse, q, stream)];
    CHECK(counts.size() == 2);
    CHECK(std::abs(counts[0] / static_cast<double>(n) - 0.6) < 0.01);
    CHECK(std::abs(counts[2] / static_cast<double>(n) - 0.4) < 0.01);
}

TEST_CASE("cloud verification accepts everything from a fully aligned pair") {
    auto pair = make_aligned_pair(16, 1, 1.0, 55);
    auto streams = make_streams();
    std::vector<TokenId> committed = {3};
    for (int step = 0; step < 100; ++step) {
        DraftBatch batch;
        batch.batch_id = static_cast<std::uint32_t>(step + 1);
        batch.base_pos = committed.size();
        std::vector<TokenId> ctx = committed;
        for (std::size_t i = 0; i < 4; ++i) {
            float qv = 0.0f;
            const TokenId tok =
                draft_token(*pair.draft, ctx, batch.base_pos + i, streams.edge_draft, &qv);
            batch.tokens.push_back(tok);
            batch.chosen_probs.push_back(qv);
            ctx.push_back(tok);
        }
        const Verdict v = cloud_verify(batch, *pair.target, committed, 16, streams.cloud_accept);
        REQUIRE(v.kind == VerdictKind::AllAccepted);
        REQUIRE(v.accepted_count == 4);
        committed = ctx;
    }
}

TEST_CASE("point-mass target rejects a mismatched token with a one-entry verdict") {
    auto target = std::make_shared<TableModel>(4, 1);
    target->set_default_row(DenseDistribution::validate({0.0f, 1.0f, 0.0f, 0.0f}));
    DraftBatch batch;
    batch.batch_id = 1;
    batch.base_pos = 0;
    batch.tokens = {2};
    batch.chosen_probs = {0.9f};
    RandomStream accept(1, StreamLabel::CloudAccept);
    const Verdict v = cloud_verify(batch, *target, {}, 4, accept);
    REQUIRE(v.kind == VerdictKind::Rejected);
    CHECK(v.accepted_count == 0);
    REQUIRE(v.sparse_target.has_value());
    REQUIRE(v.sparse_target->size() == 1);
    CHECK(v.sparse_target->entries()[0] == SparseEntry{1, 1.0f});
}

TEST_CASE("stale batches are refused") {
    auto pair = make_aligned_pair(8, 1, 1.0, 2);
    DraftBatch batch;
    batch.batch_id = 7;
    batch.base_pos = 3;  // cloud has committed 1 token
    batch.tokens = {0};
    batch.chosen_probs = {0.5f};
    RandomStream accept(1, StreamLabel::CloudAccept);
    std::vector<TokenId> committed = {0};
    CHECK_THROWS_MATCHES(cloud_verify(batch, *pair.target, committed, 8, accept), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == Errc::StaleBatch; }));
}

TEST_CASE("accept stream advances accepted_count+1 draws on rejection, gamma on acceptance") {
    auto pair = make_aligned_pair(8, 1, 0.4, 12);
    auto streams = make_streams(1);
    std::vector<TokenId> committed = {0};
    for (int step = 0; step < 200; ++step) {
        DraftBatch batch;
        batch.batch_id = static_cast<std::uint32_t>(step + 1);
        batch.base_pos = committed.size();
        std::vector<TokenId> ctx = committed;
        for (std::size_t i = 0; i < 3; ++i) {
            float qv = 0.0f;
            const TokenId tok =
                draft_token(*pair.draft, ctx, batch.base_pos + i, streams.edge_draft, &qv);
            batch.tokens.push_back(tok);
            batch.chosen_probs.push_back(qv);
            ctx.push_back(tok);
        }
        const std::uint64_t before = streams.cloud_accept.draws();
        const Verdict v = cloud_verify(batch, *pair.target, committed, 8, streams.cloud_accept);
        const std::uint64_t used = streams.cloud_accept.draws() - before;
        if (v.kind == VerdictKind::Rejected) {
            CHECK(used == v.accepted_count + 1);
            committed.insert(committed.end(), batch.tokens.begin(),
                             batch.tokens.begin() + static_cast<std::ptrdiff_t>(v.accepted_count));
            const auto& q = pair.draft->next_distribution(committed);
            committed.push_back(residual_pick(
                *v.sparse_target, q,
                streams.edge_resample.uniform_at(batch.base_pos + v.accepted_count)));
        } else {
            CHECK(used == batch.size());
            committed = ctx;
        }
    }
}

TEST_CASE("per-position acceptance frequency matches the enumerated rate") {
    // V=3 pair with m=1; frequency of accepting position 0 over fresh seeds
    // approaches sum_x Q(x) * min(1, P(x)/Q(x)).
    auto target = std::make_shared<TableModel>(3, 1);
    auto draft = std::make_shared<TableModel>(3, 1);
    target->set_default_row(DenseDistribution::validate({0.5f, 0.3f, 0.2f}));
    draft->set_default_row(DenseDistribution::validate({0.2f, 0.3f, 0.5f}));
    AlignedPair pair{target, draft, 0.0};
    const double alpha_exact = testsupport::exact_alpha(pair);

    int accepted0 = 0;
    const int n = 100000;
    for (int trial = 0; trial < n; ++trial) {
        auto streams = make_streams(static_cast<std::uint64_t>(trial) * 7919);
        const std::vector<TokenId> committed = {0};
        DraftBatch batch;
        batch.batch_id = 1;
        batch.base_pos = 1;
        std::vector<TokenId> ctx = committed;
        for (std::size_t i = 0; i < 2; ++i) {
            float qv = 0.0f;
            const TokenId tok =
                draft_token(*pair.draft, ctx, batch.base_pos + i, streams.edge_draft, &qv);
            batch.tokens.push_back(tok);
            batch.chosen_probs.push_back(qv);
            ctx.push_back(tok);
        }
        const Verdict v = cloud_verify(batch, *pair.target, committed, 3, streams.cloud_accept);
        if (v.accepted_count >= 1) ++accepted0;
    }
    CHECK(accepted0 / static_cast<double>(n) == Catch::Approx(alpha_exact).margin(0.01));
}

TEST_CASE("fully aligned vanilla steps accept the whole batch") {
    auto pair = make_aligned_pair(8, 1, 1.0, 3);
    auto streams = make_streams(2);
    const std::vector<TokenId> ctx = {1};
    const StepResult r = vanilla_step_reference(*pair.draft, *pair.target, ctx, 4, streams);
    CHECK(r.accepted.size() == 4);
    CHECK_FALSE(r.corrected.has_value());
}

TEST_CASE("separate scheme with K=V matches the dense reference token for token") {
    for (std::uint64_t scenario = 0; scenario < 4; ++scenario) {
        const std::size_t v = 8 + 8 * scenario;
        auto pair = make_aligned_pair(v, 1, 0.3 + 0.15 * static_cast<double>(scenario),
                                      1000 + scenario);
        auto ref_streams = make_streams(scenario);
        auto sep_streams = make_streams(scenario);
        const std::vector<TokenId> prompt = {0};

        const auto reference =
            run_vanilla_reference(*pair.draft, *pair.target, prompt, 4, ref_streams, 10000);

        std::vector<TokenId> committed = prompt;
        committed.push_back(
            sample_seed_token(*pair.target, prompt, sep_streams.cloud_accept));
        do {
            const StepResult step =
                separate_step(*pair.draft, *pair.target, committed, 4, v, sep_streams);
            committed.insert(committed.end(), step.accepted.begin(), step.accepted.end());
            if (step.corrected) committed.push_back(*step.corrected);
        } while (committed.size() - prompt.size() < 10000);

        REQUIRE(committed == reference);
    }
}

TEST_CASE("single-step output distribution equals the target conditional when K=V") {
    std::mt19937_64 rng(99);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t v = 2 + rng() % 7;
        const auto p = testsupport::random_dense(rng, v);
        const auto q = testsupport::random_dense(rng, v);
        const auto out = testsupport::speculative_output_distribution(p, q, v);
        for (std::size_t x = 0; x < v; ++x) {
            CHECK(std::abs(out[x] - static_cast<double>(p.at(static_cast<TokenId>(x)))) < 1e-9);
        }
    }
}

TEST_CASE("hand-built two-token step recovers the target distribution exactly") {
    const auto p = testsupport::make_dense({0.3, 0.7});
    const auto q = testsupport::make_dense({0.8, 0.2});
    const auto out = testsupport::speculative_output_distribution(p, q, 2);
    CHECK(out[0] == Catch::Approx(0.3).margin(1e-9));
    CHECK(out[1] == Catch::Approx(0.7).margin(1e-9));

    // Monte Carlo cross-check through the real sampler.
    auto target = std::make_shared<TableModel>(2, 1);
    auto draft = std::make_shared<TableModel>(2, 1);
    target->set_default_row(p);
    draft->set_default_row(q);
    int ones = 0;
    const int n = 200000;
    for (int trial = 0; trial < n; ++trial) {
        auto streams = make_streams(static_cast<std::uint64_t>(trial) * 31 + 5);
        const std::vector<TokenId> ctx = {0};
        const StepResult r = vanilla_step_reference(*draft, *target, ctx, 1, streams);
        const TokenId tok = r.corrected ? *r.corrected : r.accepted.front();
        ones += tok == 1 ? 1 : 0;
    }
    CHECK(ones / static_cast<double>(n) == Catch::Approx(0.7).margin(0.005));
}

TEST_CASE("accepted-count distribution is truncated geometric under constant alpha") {
    auto pair = make_constant_alpha_pair(0.6);
    auto streams = make_streams(17);
    const std::size_t gamma = 4;
    std::vector<std::uint64_t> counts(gamma + 1, 0);
    std::vector<TokenId> committed = {0};
    const int cycles = 20000;
    for (int c = 0; c < cycles; ++c) {
        const StepResult r =
            separate_step(*pair.draft, *pair.target, committed, gamma, 2, streams);
        ++counts[r.accepted.size()];
        committed.insert(committed.end(), r.accepted.begin(), r.accepted.end());
        if (r.corrected) committed.push_back(*r.corrected);
    }
    // The acceptance threshold is the double the implementation compares
    // against: float(0.6) / 1.0.
    const double alpha_eff = static_cast<double>(static_cast<float>(0.6));
    const auto pmf = testsupport::truncated_geometric_pmf(alpha_eff, gamma);
    const double stat = testsupport::chi_square_stat(counts, pmf, cycles);
    CHECK(stat < testsupport::chi_square_critical_001(gamma));
}

TEST_CASE("expected top-k degradation is monotone in K") {
    std::mt19937_64 rng(123);
    for (int rep = 0; rep < 10; ++rep) {
        const auto p = testsupport::random_dense(rng, 16);
        const auto q = testsupport::random_dense(rng, 16);
        double prev = 1e9;
        for (std::size_t k : {std::size_t{1}, std::size_t{2}, std::size_t{4}, std::size_t{8},
                              std::size_t{16}}) {
            const double tv = testsupport::expected_output_tv(p, q, k);
            CHECK(tv <= prev + 1e-12);
            prev = tv;
        }
        CHECK(prev < 1e-9);  // K=V is exact
    }
}

TEST_CASE("draft batches validate their structure") {
    DraftBatch b;
    b.batch_id = 1;
    b.base_pos = 0;
    CHECK_THROWS_AS(b.validate(), Error);  // empty
    b.tokens = {1, 2};
    b.chosen_probs = {0.5f};
    CHECK_THROWS_AS(b.validate(), Error);  // length mismatch
    b.chosen_probs = {0.5f, 0.0f};
    CHECK_THROWS_AS(b.validate(), Error);  // non-positive q
    b.chosen_probs = {0.5f, 0.25f};
    CHECK_NOTHROW(b.validate());
}
