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
#include "picospec/metrics.hpp"
#include "picospec/models.hpp"
#include "picospec/rejection.hpp"
#include "picospec/scenario.hpp"
#include "picospec/state.hpp"
#include "picospec/transport.hpp"
#include "picospec/wire.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

namespace picospec {

/// Deterministic virtual-time scheduler. Events with equal timestamps execute
/// in insertion order.
class EventClock {
public:
    using Handle = std::pair<double, std::uint64_t>;

    double now() const { return now_; }
    bool empty() const { return queue_.empty(); }

    Handle schedule(double t, std::function<void()> fn) {
        if (t < now_) throw Error(Errc::DomainError, "cannot schedule into the past");
        Handle h{t, seq_++};
        queue_.emplace(h, std::move(fn));
        return h;
    }

    void cancel(Handle h) { queue_.erase(h); }

    bool step() {
        if (queue_.empty()) return false;
        auto it = queue_.begin();
        now_ = it->first.first;
        auto fn = std::move(it->second);
        queue_.erase(it);
        fn();
        return true;
    }

private:
    std::map<Handle, std::function<void()>> queue_;
    double now_ = 0.0;
    std::uint64_t seq_ = 0;
};

struct RunResult {
    std::vector<TokenId> committed;   // prompt ⧺ seed ⧺ generated tokens
    std::vector<TokenId> transcript;  // generated tokens only (seed first)
    std::vector<TraceEvent> events;
    RunMetrics metrics;
    std::uint64_t config_digest = 0;
};

/// Discrete-event execution of the collaborative decoding lifecycle: prefill
/// at t=0, a seed token from the cloud, then the speculative loop in the
/// configured mode until `max_tokens` generated tokens are committed.
///
/// Scheduling rules the timing laws depend on:
///  - The edge drafts at most one batch beyond the unverified one. A completed
///    pre-draft is held until the verdict for its premise batch confirms full
///    acceptance, and only then transmitted; on rejection it is discarded
///    without ever reaching the wire.
///  - Pre-verify announcements go out per token while an older batch is in
///    flight; the cloud charges announced positions nothing at verdict time.
///  - A rejection sends an Interrupt ahead of the Verdict, the edge resamples
///    locally from the sparse residual, and uplinks the corrected token as a
///    Seed frame so both sides converge.
class Simulation {
public:
    explicit Simulation(ScenarioConfig cfg)
        : cfg_(std::move(cfg)),
          channel_(cfg_.channel, cfg_.session.seeds.network),
          edge_draft_(cfg_.session.seeds.edge_draft, StreamLabel::EdgeDraft),
          edge_resample_(cfg_.session.seeds.edge_resample, StreamLabel::EdgeResample),
          cloud_accept_(cfg_.session.seeds.cloud_accept, StreamLabel::CloudAccept),
          edge_session_(cfg_.prompt),
          cloud_session_(cfg_.prompt) {
        cfg_.validate();
        auto models = cfg_.build_models();
        draft_model_ = std::move(models.draft);
        target_model_ = std::move(models.target);
    }

    RunResult run() {
        cloud_emit_seed();
        while (clock_.step()) {
        }
        if (edge_session_.committed() != cloud_session_.committed()) {
            throw Error(Errc::Divergence, "edge and cloud committed sequences differ");
        }
        RunResult result;
        result.committed = edge_session_.committed();
        result.transcript.assign(result.committed.begin() +
                                     static_cast<std::ptrdiff_t>(cfg_.prompt.size()),
                                 result.committed.end());
        result.events = std::move(events_);
        result.metrics = metrics::collect(result.events);
        result.config_digest = cfg_.digest();
        return result;
    }

private:
    // ---- shared plumbing ----

    bool fast_verify_enabled() const {
        return cfg_.mode == PipelineMode::Async || cfg_.mode == PipelineMode::AsyncNoSplitRejection;
    }

    std::size_t effective_top_k() const {
        return cfg_.mode == PipelineMode::AsyncNoSplitRejection ? cfg_.session.vocab_size
                                                                : cfg_.session.top_k;
    }

    void log(EventType type, std::uint32_t batch_id = 0, std::uint64_t value = 0,
             double extra = 0.0, bool flag = false) {
        events_.push_back(TraceEvent{clock_.now(), type, batch_id, value, extra, flag});
    }

    void send_frame(Direction dir, wire::Frame frame) {
        auto bytes = wire::encode(frame);
        const double arrival = channel_.send(dir, bytes.size(), clock_.now());
        clock_.schedule(arrival, [this, dir, bytes = std::move(bytes)]() {
            const wire::Frame f = wire::decode(bytes);
            if (dir == Direction::EdgeToCloud) {
                cloud_on_frame(f);
            } else {
                edge_on_frame(f);
            }
        });
    }

    // ---- cloud actor ----

    void cloud_emit_seed() {
        const TokenId seed = sample_seed_token(*target_model_, cfg_.prompt, cloud_accept_);
        cloud_session_.append_committed(seed);
        send_frame(Direction::CloudToEdge, wire::Frame{0, wire::SeedBody{seed}});
    }

    void cloud_on_frame(const wire::Frame& f) {
        switch (f.kind()) {
        case wire::FrameKind::PreVerify:
            cloud_on_preverify(std::get<wire::PreVerifyBody>(f.body));
            break;
        case wire::FrameKind::Draft:
            cloud_on_draft(f.batch_id, std::get<wire::DraftBody>(f.body));
            break;
        case wire::FrameKind::Seed:
            cloud_on_corrected(std::get<wire::SeedBody>(f.body).token);
            break;
        default:
            throw Error(Errc::BadKind, "unexpected frame kind on uplink");
        }
    }

    void cloud_on_preverify(const wire::PreVerifyBody& body) {
        for (std::size_t i = 0; i < body.tokens.size(); ++i) {
            const std::uint64_t pos = body.base_pos + i;
            if (pos < cloud_session_.committed().size()) continue;  // stale announcement
            preverified_[pos] = body.tokens[i];
        }
    }

    void cloud_on_draft(std::uint32_t batch_id, const wire::DraftBody& body) {
        if (body.base_pos != cloud_session_.committed().size()) {
            log(EventType::StaleBatchDropped, batch_id);
            return;
        }
        DraftBatch batch;
        batch.batch_id = batch_id;
        batch.base_pos = body.base_pos;
        batch.tokens = body.tokens;
        batch.chosen_probs = body.chosen_probs;
        batch.truncated = body.truncated;
        cloud_session_.append_speculative(batch);

        std::size_t pre_count = 0;
        for (std::size_t i = 0; i < batch.tokens.size(); ++i) {
            auto it = preverified_.find(batch.base_pos + i);
            if (it != preverified_.end() && it->second == batch.tokens[i]) ++pre_count;
        }
        const double busy = cfg_.cloud_cost_ms * static_cast<double>(batch.size() - pre_count);
        log(EventType::VerifyStart, batch_id, batch.size());
        clock_.schedule(clock_.now() + busy, [this, batch = std::move(batch), busy]() {
            cloud_emit_verdict(batch, busy);
        });
    }

    void cloud_emit_verdict(const DraftBatch& batch, double busy) {
        log(EventType::VerifyEnd, batch.batch_id, batch.size(), busy);
        const Verdict verdict = cloud_verify(batch, *target_model_,
                                             cloud_session_.committed(), effective_top_k(),
                                             cloud_accept_);
        wire::VerdictBody body;
        body.accepted_count = static_cast<std::uint8_t>(verdict.accepted_count);
        body.rejected = verdict.kind == VerdictKind::Rejected;
        if (body.rejected) {
            const auto entries = verdict.sparse_target->entries();
            body.sparse_target.assign(entries.begin(), entries.end());
            pending_reject_ = PendingReject{batch.batch_id, verdict.accepted_count};
            preverified_.clear();
            send_frame(Direction::CloudToEdge,
                       wire::Frame{batch.batch_id,
                                   wire::InterruptBody{batch.base_pos + verdict.accepted_count}});
        } else {
            cloud_session_.commit(batch.batch_id, batch.size(), std::nullopt);
            preverified_.erase(preverified_.begin(),
                               preverified_.lower_bound(cloud_session_.committed().size()));
        }
        send_frame(Direction::CloudToEdge, wire::Frame{batch.batch_id, std::move(body)});
    }

    void cloud_on_corrected(TokenId token) {
        if (!pending_reject_) {
            throw Error(Errc::OutOfOrder, "corrected token without a pending rejection");
        }
        cloud_session_.commit(pending_reject_->batch_id, pending_reject_->accepted, token);
        pending_reject_.reset();
    }

    // ---- edge actor ----

    void edge_on_frame(const wire::Frame& f) {
        switch (f.kind()) {
        case wire::FrameKind::Seed:
            edge_on_seed(std::get<wire::SeedBody>(f.body).token);
            break;
        case wire::FrameKind::Interrupt:
            edge_on_interrupt();
            break;
        case wire::FrameKind::Verdict:
            edge_on_verdict(f.batch_id, std::get<wire::VerdictBody>(f.body));
            break;
        default:
            throw Error(Errc::BadKind, "unexpected frame kind on downlink");
        }
    }

    void edge_on_seed(TokenId token) {
        edge_session_.append_committed(token);
        seed_seen_ = true;
        log(EventType::SeedCommitted, 0, token);
        edge_maybe_start_draft();
    }

    void edge_maybe_start_draft() {
        if (halted_ || working_ || held_) return;
        if (cfg_.mode == PipelineMode::SyncBaseline && in_flight_) return;
        edge_end_idle();
        Working w;
        w.batch_id = next_batch_id_++;
        w.batch_index = batches_started_++;
        w.base_pos = edge_session_.frontier_length();
        w.context = edge_session_.frontier_context(draft_model_->order());
        w.started_at = clock_.now();
        working_ = std::move(w);
        log(EventType::DraftStart, working_->batch_id);
        schedule_token_step();
    }

    void schedule_token_step() {
        const double cost = cfg_.edge_cost_at(working_->batch_index);
        working_->token_event = clock_.schedule(clock_.now() + cost, [this]() { edge_token_step(); });
    }

    void edge_token_step() {
        Working& w = *working_;
        const std::uint64_t pos = w.base_pos + w.tokens.size();
        float q = 0.0f;
        const TokenId tok = draft_token(*draft_model_, w.context, pos, edge_draft_, &q);
        w.tokens.push_back(tok);
        w.qs.push_back(q);
        w.context.push_back(tok);
        if (fast_verify_enabled() && in_flight_) {
            send_frame(Direction::EdgeToCloud,
                       wire::Frame{w.batch_id, wire::PreVerifyBody{pos, {tok}}});
        }
        if (w.tokens.size() >= cfg_.session.gamma) {
            edge_finalize_draft(false);
            return;
        }
        if (cfg_.truncation.enabled && ewma_round_trip_ &&
            clock_.now() - w.started_at > cfg_.truncation.beta * *ewma_round_trip_) {
            log(EventType::TruncationFired, w.batch_id, w.tokens.size());
            edge_finalize_draft(true);
            return;
        }
        schedule_token_step();
    }

    void edge_finalize_draft(bool truncated) {
        Working w = std::move(*working_);
        working_.reset();
        DraftBatch batch;
        batch.batch_id = w.batch_id;
        batch.base_pos = w.base_pos;
        batch.tokens = std::move(w.tokens);
        batch.chosen_probs = std::move(w.qs);
        batch.truncated = truncated;
        log(EventType::DraftEnd, batch.batch_id, batch.size(), clock_.now() - w.started_at);
        edge_session_.append_speculative(batch);
        if (!in_flight_) {
            edge_send_batch(std::move(batch));
        } else {
            held_ = std::move(batch);
            edge_begin_idle();
        }
    }

    void edge_send_batch(DraftBatch batch) {
        wire::DraftBody body;
        body.base_pos = batch.base_pos;
        body.truncated = batch.truncated;
        body.tokens = batch.tokens;
        body.chosen_probs = batch.chosen_probs;
        const std::uint32_t id = batch.batch_id;
        in_flight_ = InFlight{std::move(batch), clock_.now()};
        send_frame(Direction::EdgeToCloud, wire::Frame{id, std::move(body)});
        edge_maybe_start_draft();
        if (!working_ && !halted_) edge_begin_idle();
    }

    void edge_on_interrupt() {
        if (working_) {
            clock_.cancel(working_->token_event);
            log(EventType::DraftAborted, working_->batch_id, working_->tokens.size());
            working_.reset();
        }
        // Rollback happens when the verdict lands; until then the edge idles.
        edge_begin_idle();
    }

    void edge_on_verdict(std::uint32_t batch_id, const wire::VerdictBody& body) {
        if (!in_flight_ || in_flight_->batch.batch_id != batch_id) {
            throw Error(Errc::OutOfOrder, "verdict for a batch that is not in flight");
        }
        edge_end_idle();  // the wait this verdict ends belongs to its cycle
        const double observed = clock_.now() - in_flight_->sent_at;
        const double d = cfg_.truncation.ewma_decay;
        ewma_round_trip_ =
            ewma_round_trip_ ? (1.0 - d) * *ewma_round_trip_ + d * observed : observed;
        DraftBatch batch = std::move(in_flight_->batch);
        in_flight_.reset();

        if (!body.rejected) {
            if (body.accepted_count != batch.size()) {
                throw Error(Errc::Divergence, "full acceptance with partial count");
            }
            edge_session_.commit(batch_id, batch.size(), std::nullopt);
            log(EventType::VerdictProcessed, batch_id, batch.size(), observed, false);
            for (TokenId t : batch.tokens) log(EventType::Commit, batch_id, t);
            edge_check_halt();
            if (!halted_) {
                if (held_) {
                    DraftBatch next = std::move(*held_);
                    held_.reset();
                    edge_end_idle();
                    edge_send_batch(std::move(next));
                } else {
                    edge_maybe_start_draft();
                }
            }
            return;
        }

        // Rejection: resample locally on the sparse support, commit, roll back.
        const std::size_t j = body.accepted_count;
        const SparseDistribution sparse = SparseDistribution::from_entries(body.sparse_target);
        std::vector<TokenId> ctx(edge_session_.committed());
        ctx.insert(ctx.end(), batch.tokens.begin(),
                   batch.tokens.begin() + static_cast<std::ptrdiff_t>(j));
        const auto& q_row = draft_model_->next_distribution(ctx);
        const double u = edge_resample_.uniform_at(batch.base_pos + j);
        const TokenId corrected = residual_pick(sparse, q_row, u);

        if (working_) {  // interrupt normally got here first; abort defensively
            clock_.cancel(working_->token_event);
            log(EventType::DraftAborted, working_->batch_id, working_->tokens.size());
            working_.reset();
        }
        held_.reset();
        edge_session_.commit(batch_id, j, corrected);
        log(EventType::VerdictProcessed, batch_id, j, observed, true);
        for (std::size_t i = 0; i < j; ++i) log(EventType::Commit, batch_id, batch.tokens[i]);
        log(EventType::Commit, batch_id, corrected, 0.0, true);
        send_frame(Direction::EdgeToCloud, wire::Frame{batch_id, wire::SeedBody{corrected}});
        edge_check_halt();
        if (!halted_) edge_maybe_start_draft();
    }

    void edge_check_halt() {
        const std::uint64_t generated = edge_session_.committed().size() - cfg_.prompt.size();
        if (generated >= cfg_.max_tokens) {
            halted_ = true;
            edge_end_idle();
            if (working_) {
                clock_.cancel(working_->token_event);
                log(EventType::DraftAborted, working_->batch_id, working_->tokens.size());
                working_.reset();
            }
            held_.reset();
        }
    }

    void edge_begin_idle() {
        if (!idle_since_ && seed_seen_ && !halted_ && !working_) {
            idle_since_ = clock_.now();
        }
    }

    void edge_end_idle() {
        if (idle_since_) {
            const double dur = clock_.now() - *idle_since_;
            log(EventType::IdleEnd, 0, 0, dur);
            idle_since_.reset();
        }
    }

    struct Working {
        std::uint32_t batch_id = 0;
        std::uint64_t batch_index = 0;
        std::uint64_t base_pos = 0;
        std::vector<TokenId> context;
        std::vector<TokenId> tokens;
        std::vector<float> qs;
        double started_at = 0.0;
        EventClock::Handle token_event{};
    };

    struct InFlight {
        DraftBatch batch;
        double sent_at = 0.0;
    };

    struct PendingReject {
        std::uint32_t batch_id = 0;
        std::size_t accepted = 0;
    };

    ScenarioConfig cfg_;
    EventClock clock_;
    SimChannel channel_;
    RandomStream edge_draft_;
    RandomStream edge_resample_;
    RandomStream cloud_accept_;
    std::shared_ptr<SequenceModel> draft_model_;
    std::shared_ptr<SequenceModel> target_model_;

    SessionState edge_session_;
    SessionState cloud_session_;
    std::optional<Working> working_;
    std::optional<DraftBatch> held_;
    std::optional<InFlight> in_flight_;
    std::optional<PendingReject> pending_reject_;
    std::map<std::uint64_t, TokenId> preverified_;
    std::optional<double> ewma_round_trip_;
    std::optional<double> idle_since_;
    std::uint32_t next_batch_id_ = 1;
    std::uint64_t batches_started_ = 0;
    bool halted_ = false;
    bool seed_seen_ = false;
    std::vector<TraceEvent> events_;
};

inline RunResult run_scenario(const ScenarioConfig& cfg) { return Simulation(cfg).run(); }

}  // namespace picospec
