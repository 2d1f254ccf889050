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
#include "picospec/models.hpp"

#include <algorithm>
#include <map>
#include <vector>

namespace picospec {

enum class EventType {
    SeedCommitted,    // value = token; marks the decode-loop start
    Commit,           // value = token, flag = corrected token, batch_id set
    DraftStart,       // batch_id
    DraftEnd,         // batch_id, value = gamma', extra = duration ms
    DraftAborted,     // batch_id, value = tokens drafted before the abort
    VerifyStart,      // batch_id
    VerifyEnd,        // batch_id, value = gamma', extra = busy ms
    VerdictProcessed, // batch_id, value = accepted count, flag = rejected,
                      // extra = observed round-trip ms
    IdleStart,
    IdleEnd,          // extra = idle duration ms
    StaleBatchDropped,// batch_id
    TruncationFired,  // batch_id, value = gamma' at the cut
};

struct TraceEvent {
    double t = 0.0;
    EventType type = EventType::Commit;
    std::uint32_t batch_id = 0;
    std::uint64_t value = 0;
    double extra = 0.0;
    bool flag = false;
};

/// Evaluation quantities measured from a run's event transcript. Committed
/// tokens count verdict-driven commits (accepted plus corrections); the seed
/// token marks time zero but is not metered.
struct RunMetrics {
    double throughput_tps = 0.0;   // committed tokens per second of virtual time
    double ttft_ms = 0.0;          // decode-loop start to first committed token
    double tpot_ms = 0.0;          // mean inter-commit interval
    double mean_accept_len = 0.0;  // committed tokens per verdict cycle
    double t_draft_obs_ms = 0.0;   // mean completed-draft duration
    double t_verify_obs_ms = 0.0;  // mean cloud verify busy time
    double bubble_total_ms = 0.0;  // total edge idle during the decode loop
    std::uint64_t stale_batches = 0;
    std::uint64_t committed_tokens = 0;
    std::uint64_t cycles = 0;      // verdicts processed
    std::uint64_t truncations = 0;
    double total_time_ms = 0.0;    // decode-loop start to last commit
};

namespace metrics {

inline RunMetrics collect(std::span<const TraceEvent> events) {
    double t0 = -1.0;
    double first_commit = -1.0;
    double last_commit = -1.0;
    std::uint64_t commits = 0;
    std::uint64_t cycles = 0;
    std::uint64_t stale = 0;
    std::uint64_t truncations = 0;
    double draft_sum = 0.0;
    std::uint64_t draft_n = 0;
    double verify_sum = 0.0;
    std::uint64_t verify_n = 0;
    double idle_sum = 0.0;

    for (const auto& e : events) {
        switch (e.type) {
        case EventType::SeedCommitted:
            t0 = e.t;
            break;
        case EventType::Commit:
            if (first_commit < 0.0) first_commit = e.t;
            last_commit = e.t;
            ++commits;
            break;
        case EventType::VerdictProcessed:
            ++cycles;
            break;
        case EventType::DraftEnd:
            draft_sum += e.extra;
            ++draft_n;
            break;
        case EventType::VerifyEnd:
            verify_sum += e.extra;
            ++verify_n;
            break;
        case EventType::IdleEnd:
            idle_sum += e.extra;
            break;
        case EventType::StaleBatchDropped:
            ++stale;
            break;
        case EventType::TruncationFired:
            ++truncations;
            break;
        default:
            break;
        }
    }
    if (commits == 0 || t0 < 0.0) {
        throw Error(Errc::EmptyRun, "transcript contains no committed tokens");
    }

    RunMetrics m;
    m.committed_tokens = commits;
    m.cycles = cycles;
    m.stale_batches = stale;
    m.truncations = truncations;
    m.total_time_ms = last_commit - t0;
    m.ttft_ms = first_commit - t0;
    m.throughput_tps =
        m.total_time_ms > 0.0 ? static_cast<double>(commits) / (m.total_time_ms / 1000.0) : 0.0;
    m.tpot_ms = commits > 1 ? (last_commit - first_commit) / static_cast<double>(commits - 1) : 0.0;
    m.mean_accept_len = cycles > 0 ? static_cast<double>(commits) / static_cast<double>(cycles) : 0.0;
    m.t_draft_obs_ms = draft_n > 0 ? draft_sum / static_cast<double>(draft_n) : 0.0;
    m.t_verify_obs_ms = verify_n > 0 ? verify_sum / static_cast<double>(verify_n) : 0.0;
    m.bubble_total_ms = idle_sum;
    return m;
}

/// Edge idle time attributed to each verdict cycle, in cycle order.
inline std::vector<double> per_cycle_bubbles(std::span<const TraceEvent> events) {
    std::vector<double> bubbles;
    double pending_idle = 0.0;
    for (const auto& e : events) {
        if (e.type == EventType::IdleEnd) {
            pending_idle += e.extra;
        } else if (e.type == EventType::VerdictProcessed) {
            bubbles.push_back(pending_idle);
            pending_idle = 0.0;
        }
    }
    return bubbles;
}

/// Time between consecutive verdict arrivals at the edge.
inline std::vector<double> cycle_times(std::span<const TraceEvent> events) {
    std::vector<double> times;
    double prev = -1.0;
    for (const auto& e : events) {
        if (e.type == EventType::VerdictProcessed) {
            if (prev >= 0.0) times.push_back(e.t - prev);
            prev = e.t;
        }
    }
    return times;
}

/// Mean total-variation distance between the empirical next-token
/// distribution after each context and the target model's conditional,
/// weighted by how often the context occurs. `transcript` must include
/// whatever prefix the run started from.
inline double transcript_tv_distance(std::span<const TokenId> transcript,
                                     const SequenceModel& target) {
    const std::size_t m = target.order();
    if (transcript.size() <= m) {
        throw Error(Errc::EmptyRun, "transcript shorter than model order");
    }
    std::map<std::vector<TokenId>, std::map<TokenId, std::uint64_t>> counts;
    for (std::size_t i = m; i < transcript.size(); ++i) {
        std::vector<TokenId> ctx(transcript.begin() + static_cast<std::ptrdiff_t>(i - m),
                                 transcript.begin() + static_cast<std::ptrdiff_t>(i));
        ++counts[ctx][transcript[i]];
    }
    double weighted_tv = 0.0;
    std::uint64_t total = 0;
    for (const auto& [ctx, next_counts] : counts) {
        std::uint64_t n = 0;
        for (const auto& [tok, c] : next_counts) n += c;
        const auto& p = target.next_distribution(ctx);
        double tv = 0.0;
        for (std::size_t x = 0; x < p.size(); ++x) {
            auto it = next_counts.find(static_cast<TokenId>(x));
            const double emp =
                it == next_counts.end()
                    ? 0.0
                    : static_cast<double>(it->second) / static_cast<double>(n);
            tv += std::abs(emp - static_cast<double>(p.at(static_cast<TokenId>(x))));
        }
        weighted_tv += 0.5 * tv * static_cast<double>(n);
        total += n;
    }
    return weighted_tv / static_cast<double>(total);
}

}  // namespace metrics
}  // namespace picospec
