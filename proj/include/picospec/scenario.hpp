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
#include "picospec/transport.hpp"

#include <json.hpp>

#include <fstream>
#include <memory>
#include <set>
#include <string>
#include <vector>

namespace picospec {

enum class PipelineMode { SyncBaseline, Async, AsyncNoFastVerify, AsyncNoSplitRejection };

inline const char* mode_name(PipelineMode m) {
    switch (m) {
    case PipelineMode::SyncBaseline: return "sync";
    case PipelineMode::Async: return "async";
    case PipelineMode::AsyncNoFastVerify: return "no-fastverify";
    case PipelineMode::AsyncNoSplitRejection: return "no-splitrej";
    }
    return "async";
}

inline PipelineMode mode_from_name(const std::string& s) {
    if (s == "sync") return PipelineMode::SyncBaseline;
    if (s == "async") return PipelineMode::Async;
    if (s == "no-fastverify") return PipelineMode::AsyncNoFastVerify;
    if (s == "no-splitrej") return PipelineMode::AsyncNoSplitRejection;
    throw Error(Errc::BadScenario, "unknown mode: " + s);
}

struct TruncationConfig {
    bool enabled = true;
    double beta = 1.25;
    double ewma_decay = 0.2;

    void validate() const {
        if (!(beta > 0.0)) throw Error(Errc::BadScenario, "truncation beta must be positive");
        if (ewma_decay <= 0.0 || ewma_decay > 1.0) {
            throw Error(Errc::BadScenario, "ewma decay out of (0, 1]");
        }
    }
};

struct ModelSpec {
    enum class Kind { AlignedPair, ConstantAlpha, Tables };

    Kind kind = Kind::AlignedPair;
    std::size_t vocab = 16;
    std::size_t order = 1;
    double lambda = 1.0;
    std::uint64_t seed = 0;
    double alpha = 1.0;
    nlohmann::json target_table;  // Kind::Tables only
    nlohmann::json draft_table;
};

/// Everything a run needs, loadable from a strict JSON file. Unknown keys are
/// rejected so a typo cannot silently fall back to a default.
struct ScenarioConfig {
    ModelSpec model;
    double edge_cost_ms = 25.0;   // t_d per drafted token
    double cloud_cost_ms = 5.0;   // t_v per verified token
    SessionConfig session;
    ChannelConfig channel;
    PipelineMode mode = PipelineMode::Async;
    std::uint64_t max_tokens = 256;
    std::vector<TokenId> prompt;
    TruncationConfig truncation;
    // (from_batch_index, multiplier) pairs, applied in order.
    std::vector<std::pair<std::uint64_t, double>> edge_cost_schedule;

    struct BuiltModels {
        std::shared_ptr<SequenceModel> draft;
        std::shared_ptr<SequenceModel> target;
    };

    BuiltModels build_models() const {
        switch (model.kind) {
        case ModelSpec::Kind::AlignedPair: {
            auto pair = make_aligned_pair(model.vocab, model.order, model.lambda, model.seed,
                                          edge_cost_ms, cloud_cost_ms);
            return {pair.draft, pair.target};
        }
        case ModelSpec::Kind::ConstantAlpha: {
            auto pair = make_constant_alpha_pair(model.alpha, edge_cost_ms, cloud_cost_ms);
            return {pair.draft, pair.target};
        }
        case ModelSpec::Kind::Tables: {
            auto target = std::make_shared<TableModel>(TableModel::from_json(model.target_table));
            auto draft = std::make_shared<TableModel>(TableModel::from_json(model.draft_table));
            target->set_forward_cost_ms(cloud_cost_ms);
            draft->set_forward_cost_ms(edge_cost_ms);
            if (target->vocab_size() != draft->vocab_size()) {
                throw Error(Errc::BadScenario, "draft and target vocab sizes differ");
            }
            return {draft, target};
        }
        }
        throw Error(Errc::BadScenario, "unknown model kind");
    }

    void validate() const {
        session.validate();
        channel.validate();
        truncation.validate();
        if (max_tokens < 1) throw Error(Errc::BadScenario, "max_tokens must be at least one");
        if (edge_cost_ms < 0.0 || cloud_cost_ms < 0.0) {
            throw Error(Errc::BadScenario, "per-token costs must be non-negative");
        }
        for (TokenId t : prompt) {
            if (t >= session.vocab_size) throw Error(Errc::BadScenario, "prompt token out of vocab");
        }
        for (const auto& [from, mult] : edge_cost_schedule) {
            if (!(mult > 0.0)) throw Error(Errc::BadScenario, "cost multiplier must be positive");
            (void)from;
        }
    }

    double edge_cost_at(std::uint64_t batch_index) const {
        double mult = 1.0;
        for (const auto& [from, m] : edge_cost_schedule) {
            if (batch_index >= from) mult = m;
        }
        return edge_cost_ms * mult;
    }

    nlohmann::json to_json() const;
    static ScenarioConfig from_json(const nlohmann::json& j);
    static ScenarioConfig load_file(const std::string& path);

    /// FNV-1a over the canonical JSON dump; exchanged at the socket handshake
    /// so mismatched ends abort instead of silently diverging.
    std::uint64_t digest() const {
        const std::string dump = to_json().dump();
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : dump) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw Error(Errc::BadScenario, "unknown key '" + it.key() + "' in " + where);
        }
    }
}

}  // namespace detail

inline nlohmann::json ScenarioConfig::to_json() const {
    nlohmann::json jmodel;
    switch (model.kind) {
    case ModelSpec::Kind::AlignedPair:
        jmodel = {{"type", "aligned_pair"}, {"V", model.vocab}, {"m", model.order},
                  {"lambda", model.lambda}, {"seed", model.seed}};
        break;
    case ModelSpec::Kind::ConstantAlpha:
        jmodel = {{"type", "constant_alpha"}, {"alpha", model.alpha}};
        break;
    case ModelSpec::Kind::Tables:
        jmodel = {{"type", "tables"}, {"target", model.target_table}, {"draft", model.draft_table}};
        break;
    }
    nlohmann::json schedule = nlohmann::json::array();
    for (const auto& [from, mult] : edge_cost_schedule) {
        schedule.push_back({from, mult});
    }
    nlohmann::json j{
        {"model", std::move(jmodel)},
        {"edge_cost_ms", edge_cost_ms},
        {"cloud_cost_ms", cloud_cost_ms},
        {"session",
         {{"gamma", session.gamma},
          {"K", session.top_k},
          {"seeds",
           {{"edge_draft", session.seeds.edge_draft},
            {"cloud_accept", session.seeds.cloud_accept},
            {"edge_resample", session.seeds.edge_resample},
            {"network", session.seeds.network}}}}},
        {"channel",
         {{"one_way_latency_ms", channel.one_way_latency_ms},
          {"bandwidth_bytes_per_ms", channel.bandwidth_bytes_per_ms},
          {"jitter_std_ms", channel.jitter_std_ms}}},
        {"mode", mode_name(mode)},
        {"max_tokens", max_tokens},
        {"truncation",
         {{"enabled", truncation.enabled},
          {"beta", truncation.beta},
          {"ewma_decay", truncation.ewma_decay}}},
    };
    if (!prompt.empty()) j["prompt"] = prompt;
    if (!edge_cost_schedule.empty()) j["edge_cost_schedule"] = std::move(schedule);
    return j;
}

inline ScenarioConfig ScenarioConfig::from_json(const nlohmann::json& j) {
    detail::reject_unknown_keys(j,
                                {"model", "edge_cost_ms", "cloud_cost_ms", "session", "channel",
                                 "mode", "max_tokens", "prompt", "truncation",
                                 "edge_cost_schedule"},
                                "scenario");
    ScenarioConfig cfg;

    const auto& jm = j.at("model");
    const std::string type = jm.at("type").get<std::string>();
    if (type == "aligned_pair") {
        detail::reject_unknown_keys(jm, {"type", "V", "m", "lambda", "seed"}, "model");
        cfg.model.kind = ModelSpec::Kind::AlignedPair;
        cfg.model.vocab = jm.at("V").get<std::size_t>();
        cfg.model.order = jm.value("m", std::size_t{1});
        cfg.model.lambda = jm.at("lambda").get<double>();
        cfg.model.seed = jm.value("seed", std::uint64_t{0});
    } else if (type == "constant_alpha") {
        detail::reject_unknown_keys(jm, {"type", "alpha"}, "model");
        cfg.model.kind = ModelSpec::Kind::ConstantAlpha;
        cfg.model.alpha = jm.at("alpha").get<double>();
        cfg.model.vocab = 2;
        cfg.model.order = 1;
    } else if (type == "tables") {
        detail::reject_unknown_keys(jm, {"type", "target", "draft"}, "model");
        cfg.model.kind = ModelSpec::Kind::Tables;
        cfg.model.target_table = jm.at("target");
        cfg.model.draft_table = jm.at("draft");
        cfg.model.vocab = jm.at("target").at("V").get<std::size_t>();
        cfg.model.order = jm.at("target").at("m").get<std::size_t>();
    } else {
        throw Error(Errc::BadScenario, "unknown model type: " + type);
    }

    cfg.edge_cost_ms = j.value("edge_cost_ms", cfg.edge_cost_ms);
    cfg.cloud_cost_ms = j.value("cloud_cost_ms", cfg.cloud_cost_ms);

    const auto& js = j.at("session");
    detail::reject_unknown_keys(js, {"gamma", "K", "seeds"}, "session");
    cfg.session.vocab_size = cfg.model.vocab;
    cfg.session.gamma = js.at("gamma").get<std::size_t>();
    cfg.session.top_k = js.at("K").get<std::size_t>();
    if (js.contains("seeds")) {
        const auto& seeds = js.at("seeds");
        detail::reject_unknown_keys(seeds, {"edge_draft", "cloud_accept", "edge_resample", "network"},
                                    "seeds");
        cfg.session.seeds.edge_draft = seeds.value("edge_draft", cfg.session.seeds.edge_draft);
        cfg.session.seeds.cloud_accept = seeds.value("cloud_accept", cfg.session.seeds.cloud_accept);
        cfg.session.seeds.edge_resample =
            seeds.value("edge_resample", cfg.session.seeds.edge_resample);
        cfg.session.seeds.network = seeds.value("network", cfg.session.seeds.network);
    }

    if (j.contains("channel")) {
        const auto& jc = j.at("channel");
        detail::reject_unknown_keys(
            jc, {"one_way_latency_ms", "bandwidth_bytes_per_ms", "jitter_std_ms"}, "channel");
        cfg.channel.one_way_latency_ms = jc.value("one_way_latency_ms", 0.0);
        cfg.channel.bandwidth_bytes_per_ms = jc.value("bandwidth_bytes_per_ms", 1e9);
        cfg.channel.jitter_std_ms = jc.value("jitter_std_ms", 0.0);
    }

    cfg.mode = mode_from_name(j.value("mode", std::string("async")));
    cfg.max_tokens = j.value("max_tokens", cfg.max_tokens);
    if (j.contains("prompt")) cfg.prompt = j.at("prompt").get<std::vector<TokenId>>();

    if (j.contains("truncation")) {
        const auto& jt = j.at("truncation");
        detail::reject_unknown_keys(jt, {"enabled", "beta", "ewma_decay"}, "truncation");
        cfg.truncation.enabled = jt.value("enabled", cfg.truncation.enabled);
        cfg.truncation.beta = jt.value("beta", cfg.truncation.beta);
        cfg.truncation.ewma_decay = jt.value("ewma_decay", cfg.truncation.ewma_decay);
    }

    if (j.contains("edge_cost_schedule")) {
        for (const auto& item : j.at("edge_cost_schedule")) {
            if (!item.is_array() || item.size() != 2) {
                throw Error(Errc::BadScenario, "cost schedule entries are [from_batch, multiplier]");
            }
            cfg.edge_cost_schedule.emplace_back(item[0].get<std::uint64_t>(),
                                                item[1].get<double>());
        }
    }

    cfg.validate();
    return cfg;
}

inline ScenarioConfig ScenarioConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::BadScenario, "cannot open scenario file: " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::BadScenario, "invalid JSON in " + path + ": " + e.what());
    }
    return from_json(j);
}

}  // namespace picospec
