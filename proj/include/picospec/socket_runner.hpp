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
#include "picospec/rejection.hpp"
#include "picospec/scenario.hpp"
#include "picospec/state.hpp"
#include "picospec/transport.hpp"
#include "picospec/wire.hpp"

#include <map>
#include <optional>
#include <vector>

namespace picospec {

// Two-process run of the same protocol over a stream socket. Decisions are
// driven by the position-keyed streams and by frame order alone, so a
// loopback run commits exactly the tokens the simulator commits for the same
// scenario (with truncation disabled; there is no virtual clock here to
// measure drafting against).

namespace detail {

inline void exchange_digest(SocketConnection& conn, const ScenarioConfig& cfg, bool send_first) {
    const wire::Frame mine{0, wire::PrefillBody{cfg.digest(), cfg.prompt}};
    auto check = [&](const std::vector<std::uint8_t>& bytes) {
        const wire::Frame theirs = wire::decode(bytes);
        if (theirs.kind() != wire::FrameKind::Prefill) {
            throw Error(Errc::BadKind, "expected a prefill frame at handshake");
        }
        const auto& body = std::get<wire::PrefillBody>(theirs.body);
        if (body.config_digest != cfg.digest()) {
            throw Error(Errc::BadScenario, "config digest mismatch between edge and cloud");
        }
    };
    if (send_first) {
        conn.send_frame(wire::encode(mine));
        auto got = conn.recv_frame();
        if (!got) throw Error(Errc::PeerClosed, "peer closed during handshake");
        check(*got);
    } else {
        auto got = conn.recv_frame();
        if (!got) throw Error(Errc::PeerClosed, "peer closed during handshake");
        conn.send_frame(wire::encode(mine));
        check(*got);
    }
}

}  // namespace detail

/// Cloud role: accept one session, verify batches in arrival order, commit in
/// lockstep with the edge. Returns the committed sequence at clean shutdown.
inline std::vector<TokenId> run_cloud_role(const ScenarioConfig& cfg, SocketConnection conn) {
    detail::exchange_digest(conn, cfg, /*send_first=*/false);

    auto models = cfg.build_models();
    RandomStream cloud_accept(cfg.session.seeds.cloud_accept, StreamLabel::CloudAccept);
    SessionState session(cfg.prompt);
    std::map<std::uint64_t, TokenId> preverified;
    struct Pending {
        std::uint32_t batch_id;
        std::size_t accepted;
    };
    std::optional<Pending> pending;

    const TokenId seed = sample_seed_token(*models.target, cfg.prompt, cloud_accept);
    session.append_committed(seed);
    conn.send_frame(wire::encode(wire::Frame{0, wire::SeedBody{seed}}));

    const std::size_t top_k = cfg.mode == PipelineMode::AsyncNoSplitRejection
                                  ? cfg.session.vocab_size
                                  : cfg.session.top_k;

    while (true) {
        auto bytes = conn.recv_frame();
        if (!bytes) break;  // clean shutdown at a frame boundary
        const wire::Frame f = wire::decode(*bytes);
        switch (f.kind()) {
        case wire::FrameKind::PreVerify: {
            const auto& body = std::get<wire::PreVerifyBody>(f.body);
            for (std::size_t i = 0; i < body.tokens.size(); ++i) {
                const std::uint64_t pos = body.base_pos + i;
                if (pos >= session.committed().size()) preverified[pos] = body.tokens[i];
            }
            break;
        }
        case wire::FrameKind::Draft: {
            const auto& body = std::get<wire::DraftBody>(f.body);
            if (body.base_pos != session.committed().size()) {
                break;  // stale batch drafted before a rollback
            }
            DraftBatch batch;
            batch.batch_id = f.batch_id;
            batch.base_pos = body.base_pos;
            batch.tokens = body.tokens;
            batch.chosen_probs = body.chosen_probs;
            batch.truncated = body.truncated;
            session.append_speculative(batch);
            const Verdict verdict =
                cloud_verify(batch, *models.target, session.committed(), top_k, cloud_accept);
            wire::VerdictBody out;
            out.accepted_count = static_cast<std::uint8_t>(verdict.accepted_count);
            out.rejected = verdict.kind == VerdictKind::Rejected;
            if (out.rejected) {
                const auto entries = verdict.sparse_target->entries();
                out.sparse_target.assign(entries.begin(), entries.end());
                pending = Pending{f.batch_id, verdict.accepted_count};
                preverified.clear();
                conn.send_frame(wire::encode(wire::Frame{
                    f.batch_id, wire::InterruptBody{batch.base_pos + verdict.accepted_count}}));
            } else {
                session.commit(f.batch_id, batch.size(), std::nullopt);
                preverified.erase(preverified.begin(),
                                  preverified.lower_bound(session.committed().size()));
            }
            conn.send_frame(wire::encode(wire::Frame{f.batch_id, std::move(out)}));
            break;
        }
        case wire::FrameKind::Seed: {
            if (!pending) {
                throw Error(Errc::OutOfOrder, "corrected token without a pending rejection");
            }
            session.commit(pending->batch_id, pending->accepted,
                           std::get<wire::SeedBody>(f.body).token);
            pending.reset();
            break;
        }
        default:
            throw Error(Errc::BadKind, "unexpected frame kind on uplink");
        }
    }
    if (pending) {
        throw Error(Errc::PeerClosed, "edge closed with a rejection left unresolved");
    }
    return session.committed();
}

/// Edge role: drives drafting and local resampling against a remote verifier.
/// Returns the committed sequence.
inline std::vector<TokenId> run_edge_role(const ScenarioConfig& cfg, SocketConnection conn) {
    detail::exchange_digest(conn, cfg, /*send_first=*/true);

    auto models = cfg.build_models();
    RandomStream edge_draft(cfg.session.seeds.edge_draft, StreamLabel::EdgeDraft);
    RandomStream edge_resample(cfg.session.seeds.edge_resample, StreamLabel::EdgeResample);
    SessionState session(cfg.prompt);
    std::uint32_t next_batch_id = 1;

    auto seed_frame = conn.recv_frame();
    if (!seed_frame) throw Error(Errc::PeerClosed, "cloud closed before sending the seed token");
    const wire::Frame sf = wire::decode(*seed_frame);
    if (sf.kind() != wire::FrameKind::Seed) {
        throw Error(Errc::BadKind, "expected a seed frame after handshake");
    }
    session.append_committed(std::get<wire::SeedBody>(sf.body).token);

    const bool pre_drafting = cfg.mode != PipelineMode::SyncBaseline;
    const bool fast_verify = cfg.mode == PipelineMode::Async ||
                             cfg.mode == PipelineMode::AsyncNoSplitRejection;

    // Drafts one batch from the current frontier; announces tokens when an
    // older batch is awaiting its verdict, mirroring the simulator.
    auto draft_batch = [&](bool announce) {
        DraftBatch batch;
        batch.batch_id = next_batch_id++;
        batch.base_pos = session.frontier_length();
        std::vector<TokenId> ctx = session.frontier_context(models.draft->order());
        for (std::size_t i = 0; i < cfg.session.gamma; ++i) {
            float q = 0.0f;
            const std::uint64_t pos = batch.base_pos + i;
            const TokenId tok = draft_token(*models.draft, ctx, pos, edge_draft, &q);
            batch.tokens.push_back(tok);
            batch.chosen_probs.push_back(q);
            ctx.push_back(tok);
            if (announce && fast_verify) {
                conn.send_frame(
                    wire::encode(wire::Frame{batch.batch_id, wire::PreVerifyBody{pos, {tok}}}));
            }
        }
        return batch;
    };

    auto send_draft = [&](const DraftBatch& b) {
        wire::DraftBody body;
        body.base_pos = b.base_pos;
        body.truncated = b.truncated;
        body.tokens = b.tokens;
        body.chosen_probs = b.chosen_probs;
        conn.send_frame(wire::encode(wire::Frame{b.batch_id, std::move(body)}));
    };

    auto recv_verdict = [&]() {
        while (true) {
            auto bytes = conn.recv_frame();
            if (!bytes) throw Error(Errc::PeerClosed, "cloud closed while a verdict was pending");
            const wire::Frame f = wire::decode(*bytes);
            if (f.kind() == wire::FrameKind::Interrupt) continue;  // advisory here
            if (f.kind() == wire::FrameKind::Verdict) return f;
            throw Error(Errc::BadKind, "unexpected frame kind on downlink");
        }
    };

    std::optional<DraftBatch> in_flight;
    auto generated = [&]() { return session.committed().size() - cfg.prompt.size(); };

    while (true) {
        if (!in_flight) {
            DraftBatch fresh = draft_batch(/*announce=*/false);
            session.append_speculative(fresh);
            send_draft(fresh);
            in_flight = std::move(fresh);
        }
        std::optional<DraftBatch> pre;
        if (pre_drafting) {
            pre = draft_batch(/*announce=*/true);
            session.append_speculative(*pre);
        }

        const wire::Frame vf = recv_verdict();
        const auto& body = std::get<wire::VerdictBody>(vf.body);
        const DraftBatch batch = std::move(*in_flight);
        in_flight.reset();
        if (!body.rejected) {
            session.commit(batch.batch_id, batch.size(), std::nullopt);
            if (generated() >= cfg.max_tokens) break;
            if (pre) {
                send_draft(*pre);
                in_flight = std::move(*pre);
            }
        } else {
            const std::size_t j = body.accepted_count;
            const SparseDistribution sparse = SparseDistribution::from_entries(body.sparse_target);
            std::vector<TokenId> ctx(session.committed());
            ctx.insert(ctx.end(), batch.tokens.begin(),
                       batch.tokens.begin() + static_cast<std::ptrdiff_t>(j));
            const auto& q_row = models.draft->next_distribution(ctx);
            const double u = edge_resample.uniform_at(batch.base_pos + j);
            const TokenId corrected = residual_pick(sparse, q_row, u);
            session.commit(batch.batch_id, j, corrected);
            conn.send_frame(wire::encode(wire::Frame{batch.batch_id, wire::SeedBody{corrected}}));
            if (generated() >= cfg.max_tokens) break;
        }
    }
    conn.close();
    return session.committed();
}

}  // namespace picospec
