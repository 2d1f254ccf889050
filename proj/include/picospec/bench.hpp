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

#include "picospec/analytics.hpp"
#include "picospec/metrics.hpp"
#include "picospec/pipeline.hpp"
#include "picospec/scenario.hpp"
#include "picospec/wire.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace picospec::bench {

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

/// Acceptance rate the analytics predictions use: exact for constant-alpha
/// models, a seeded Monte Carlo estimate otherwise.
inline double estimate_alpha(const ScenarioConfig& cfg, std::size_t samples = 200000) {
    if (cfg.model.kind == ModelSpec::Kind::ConstantAlpha) return cfg.model.alpha;
    auto models = cfg.build_models();
    AlignedPair pair{std::dynamic_pointer_cast<TableModel>(models.target),
                     std::dynamic_pointer_cast<TableModel>(models.draft), 0.0};
    return measure_alpha(pair, samples, 99);
}

/// Model-level times the closed forms take as inputs: drafting and verifying
/// gamma tokens plus the frame-size-aware round trip.
inline analytics::PerfParams derive_params(const ScenarioConfig& cfg, double alpha) {
    analytics::PerfParams p;
    p.alpha = alpha;
    p.gamma = static_cast<double>(cfg.session.gamma);
    p.t_draft = cfg.edge_cost_ms * p.gamma;
    p.t_verify = cfg.cloud_cost_ms * p.gamma;
    const double bw = cfg.channel.bandwidth_bytes_per_ms;
    const double up =
        static_cast<double>(wire::frame_size_model(wire::FrameKind::Draft, cfg.session.gamma)) / bw;
    const double down =
        static_cast<double>(wire::frame_size_model(wire::FrameKind::Verdict, 0)) / bw;
    p.t_rtt = 2.0 * cfg.channel.one_way_latency_ms + up + down;
    return p;
}

inline nlohmann::json metrics_to_json(const RunMetrics& m) {
    return {
        {"throughput_tps", m.throughput_tps},
        {"ttft_ms", m.ttft_ms},
        {"tpot_ms", m.tpot_ms},
        {"mean_accept_len", m.mean_accept_len},
        {"t_draft_obs_ms", m.t_draft_obs_ms},
        {"t_verify_obs_ms", m.t_verify_obs_ms},
        {"bubble_total_ms", m.bubble_total_ms},
        {"stale_batches", m.stale_batches},
        {"committed_tokens", m.committed_tokens},
        {"cycles", m.cycles},
        {"truncations", m.truncations},
        {"total_time_ms", m.total_time_ms},
    };
}

inline nlohmann::json predictions_to_json(const analytics::PerfParams& p) {
    return {
        {"alpha", p.alpha},
        {"el_pred", analytics::expected_accept_length(p.alpha, p.gamma)},
        {"l_sync_pred_ms", analytics::sync_latency(p.t_draft, p.t_rtt, p.t_verify)},
        {"et_async_pred_ms", analytics::async_expected_latency(p)},
        {"r_sync_pred_tps", analytics::sync_throughput(p) * 1000.0},
        {"r_async_pred_tps", analytics::async_throughput(p) * 1000.0},
        {"speedup_pred", analytics::speedup(p)},
        {"speedup_limit", analytics::speedup_limit(p)},
        {"bubble_pred_ms", analytics::bubble_time(p.t_rtt, p.t_verify, p.t_draft, p.t_pre)},
    };
}

inline const std::vector<std::string>& sweep_columns() {
    static const std::vector<std::string> cols = {
        "dim", "value", "mode", "gamma", "K", "throughput_tps", "ttft_ms", "tpot_ms",
        "mean_accept_len", "t_draft_obs_ms", "t_verify_obs_ms", "bubble_total_ms",
        "stale_batches", "committed_tokens", "cycles", "truncations", "total_time_ms",
        "tv_distance", "alpha_est", "el_pred", "l_sync_pred_ms", "et_async_pred_ms",
        "r_sync_pred_tps", "r_async_pred_tps", "speedup_pred", "speedup_limit",
        "bubble_pred_ms"};
    return cols;
}

/// Applies one sweep value to a copy of the scenario.
inline ScenarioConfig apply_sweep_value(const ScenarioConfig& base, const std::string& dim,
                                        double value) {
    ScenarioConfig cfg = base;
    if (dim == "gamma") {
        cfg.session.gamma = static_cast<std::size_t>(value);
    } else if (dim == "K") {
        cfg.session.top_k = static_cast<std::size_t>(value);
    } else if (dim == "rtt") {
        cfg.channel.one_way_latency_ms = value / 2.0;
    } else if (dim == "lambda") {
        if (cfg.model.kind != ModelSpec::Kind::AlignedPair) {
            throw Error(Errc::BadScenario, "lambda sweep needs an aligned_pair model");
        }
        cfg.model.lambda = value;
    } else {
        throw Error(Errc::BadScenario, "unknown sweep dimension: " + dim);
    }
    cfg.validate();
    return cfg;
}

/// One CSV row per sweep value: measurements next to the closed-form
/// predictions for the same parameters.
inline std::string sweep_csv(const ScenarioConfig& base, const std::string& dim,
                             const std::vector<double>& values) {
    if (values.size() < 2) {
        throw Error(Errc::BadScenario, "a sweep needs at least two values");
    }
    std::ostringstream out;
    const auto& cols = sweep_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) {
        out << (i ? "," : "") << cols[i];
    }
    out << "\n";
    for (double v : values) {
        const ScenarioConfig cfg = apply_sweep_value(base, dim, v);
        const RunResult result = run_scenario(cfg);
        const double alpha = estimate_alpha(cfg);
        analytics::PerfParams p = derive_params(cfg, alpha);
        auto models = cfg.build_models();
        std::vector<TokenId> with_prompt(cfg.prompt);
        with_prompt.insert(with_prompt.end(), result.transcript.begin(), result.transcript.end());
        const double tv = metrics::transcript_tv_distance(with_prompt, *models.target);
        const RunMetrics& m = result.metrics;
        out << dim << "," << fmt(v) << "," << mode_name(cfg.mode) << "," << cfg.session.gamma
            << "," << cfg.session.top_k << "," << fmt(m.throughput_tps) << "," << fmt(m.ttft_ms)
            << "," << fmt(m.tpot_ms) << "," << fmt(m.mean_accept_len) << ","
            << fmt(m.t_draft_obs_ms) << "," << fmt(m.t_verify_obs_ms) << ","
            << fmt(m.bubble_total_ms) << "," << m.stale_batches << "," << m.committed_tokens << ","
            << m.cycles << "," << m.truncations << "," << fmt(m.total_time_ms) << "," << fmt(tv)
            << "," << fmt(alpha) << "," << fmt(analytics::expected_accept_length(alpha, p.gamma))
            << "," << fmt(analytics::sync_latency(p.t_draft, p.t_rtt, p.t_verify)) << ","
            << fmt(analytics::async_expected_latency(p)) << ","
            << fmt(analytics::sync_throughput(p) * 1000.0) << ","
            << fmt(analytics::async_throughput(p) * 1000.0) << "," << fmt(analytics::speedup(p))
            << "," << fmt(analytics::speedup_limit(p)) << ","
            << fmt(analytics::bubble_time(p.t_rtt, p.t_verify, p.t_draft, p.t_pre)) << "\n";
    }
    return out.str();
}

/// Transcript file: one token id per line after a config-digest header.
inline void write_transcript(const std::string& path, std::uint64_t digest,
                             std::span<const TokenId> transcript) {
    std::ofstream out(path);
    if (!out) throw Error(Errc::BadScenario, "cannot write transcript file: " + path);
    out << "# digest " << digest << "\n";
    for (TokenId t : transcript) out << t << "\n";
}

}  // namespace picospec::bench
