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

#include <algorithm>
#include <cmath>

namespace picospec::analytics {

// Closed-form performance model of the collaborative pipeline. All times are
// milliseconds; throughputs are tokens per millisecond. The simulator is
// checked against these formulas, not the other way around.

struct PerfParams {
    double alpha = 0.0;    // per-token acceptance rate
    double gamma = 1.0;    // speculative step size
    double t_draft = 0.0;  // edge time to draft gamma tokens
    double t_verify = 0.0; // cloud time to verify gamma tokens
    double t_rtt = 0.0;    // round-trip incl. serialization
    double t_pre = 0.0;    // pre-verify lead time

    void validate() const {
        if (alpha < 0.0 || alpha > 1.0) throw Error(Errc::DomainError, "alpha out of [0, 1]");
        if (gamma < 1.0) throw Error(Errc::DomainError, "gamma below one");
        if (t_draft < 0.0 || t_verify < 0.0 || t_rtt < 0.0 || t_pre < 0.0) {
            throw Error(Errc::DomainError, "negative time parameter");
        }
    }
};

// Expected tokens committed per speculative cycle. The accepted count is
// truncated-geometric; a miss still commits the corrected token, so
// EL = (1 - alpha^gamma) / (1 - alpha), with the limit gamma as alpha -> 1.
inline double expected_accept_length(double alpha, double gamma) {
    if (alpha < 0.0 || alpha > 1.0) throw Error(Errc::DomainError, "alpha out of [0, 1]");
    if (gamma < 1.0) throw Error(Errc::DomainError, "gamma below one");
    if (alpha >= 1.0 - 1e-9) return gamma;
    return (1.0 - std::pow(alpha, gamma)) / (1.0 - alpha);
}

inline double sync_latency(double t_draft, double t_rtt, double t_verify) {
    return t_draft + t_rtt + t_verify;
}

inline double sync_throughput(const PerfParams& p) {
    p.validate();
    return expected_accept_length(p.alpha, p.gamma) / sync_latency(p.t_draft, p.t_rtt, p.t_verify);
}

// Amortized per-cycle time: a full hit keeps the pipeline overlapped, a miss
// flushes it and reverts to the serial cost.
inline double async_expected_latency(const PerfParams& p) {
    p.validate();
    const double p_hit = std::pow(p.alpha, p.gamma);
    const double t_hit = std::max(p.t_draft, p.t_rtt + p.t_verify);
    const double t_miss = sync_latency(p.t_draft, p.t_rtt, p.t_verify);
    return p_hit * t_hit + (1.0 - p_hit) * t_miss;
}

inline double async_throughput(const PerfParams& p) {
    return expected_accept_length(p.alpha, p.gamma) / async_expected_latency(p);
}

inline double speedup(const PerfParams& p) {
    // EL cancels, so S reduces to the latency ratio.
    return sync_latency(p.t_draft, p.t_rtt, p.t_verify) / async_expected_latency(p);
}

// Upper bound on the speedup, attained compute-bound as alpha -> 1.
inline double speedup_limit(const PerfParams& p) {
    if (p.t_draft <= 0.0) throw Error(Errc::DomainError, "t_draft must be positive");
    return 1.0 + (p.t_rtt + p.t_verify) / p.t_draft;
}

// Edge idle time per overlapped cycle once the pre-verify head start is taken
// into account.
inline double bubble_time(double t_rtt, double t_verify, double t_draft, double t_pre) {
    if (t_rtt < 0.0 || t_verify < 0.0 || t_draft < 0.0 || t_pre < 0.0) {
        throw Error(Errc::DomainError, "negative time parameter");
    }
    return std::max(0.0, t_rtt + t_verify - t_draft - t_pre);
}

}  // namespace picospec::analytics
