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

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <vector>

namespace picospec {

/// Toy sequence model: a pure function from the last `order()` context tokens
/// to a next-token distribution.
class SequenceModel {
public:
    virtual ~SequenceModel() = default;

    virtual std::size_t vocab_size() const = 0;
    virtual std::size_t order() const = 0;
    /// Simulated per-token forward cost in milliseconds.
    virtual double forward_cost_ms() const = 0;
    virtual const DenseDistribution& next_distribution(std::span<const TokenId> context) const = 0;
};

/// Conditional table keyed by the trailing context window; unseen contexts
/// fall back to a default row (uniform unless configured otherwise).
class TableModel : public SequenceModel {
public:
    TableModel(std::size_t vocab, std::size_t order, double cost_ms = 0.0)
        : vocab_(vocab), order_(order), cost_ms_(cost_ms) {
        std::vector<float> uniform(vocab, static_cast<float>(1.0 / static_cast<double>(vocab)));
        default_row_ = DenseDistribution::validate(std::move(uniform));
    }

    std::size_t vocab_size() const override { return vocab_; }
    std::size_t order() const override { return order_; }
    double forward_cost_ms() const override { return cost_ms_; }
    void set_forward_cost_ms(double c) { cost_ms_ = c; }

    void set_default_row(DenseDistribution row) {
        check_row(row);
        default_row_ = std::move(row);
    }

    void set_row(std::vector<TokenId> context, DenseDistribution row) {
        check_row(row);
        if (context.size() > order_) {
            throw Error(Errc::DomainError, "context longer than model order");
        }
        rows_.insert_or_assign(std::move(context), std::move(row));
    }

    const DenseDistribution& next_distribution(std::span<const TokenId> context) const override {
        const std::size_t take = std::min(order_, context.size());
        auto it = rows_.find(context.last(take));
        return it == rows_.end() ? default_row_ : it->second;
    }

    struct ContextLess {
        using is_transparent = void;
        bool operator()(std::span<const TokenId> a, std::span<const TokenId> b) const {
            return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
        }
    };
    using RowMap = std::map<std::vector<TokenId>, DenseDistribution, ContextLess>;

    const RowMap& rows() const { return rows_; }
    const DenseDistribution& default_row() const { return default_row_; }

    nlohmann::json to_json() const {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& [ctx, dist] : rows_) {
            nlohmann::json probs = nlohmann::json::array();
            for (float p : dist.probs()) probs.push_back(p);
            rows.push_back({{"context", ctx}, {"probs", std::move(probs)}});
        }
        nlohmann::json def = nlohmann::json::array();
        for (float p : default_row_.probs()) def.push_back(p);
        return {{"V", vocab_}, {"m", order_}, {"cost_ms", cost_ms_},
                {"default", std::move(def)}, {"rows", std::move(rows)}};
    }

    static TableModel from_json(const nlohmann::json& j) {
        TableModel model(j.at("V").get<std::size_t>(), j.at("m").get<std::size_t>(),
                         j.value("cost_ms", 0.0));
        if (j.contains("default")) {
            model.set_default_row(parse_row(j.at("default"), model.vocab_));
        }
        for (const auto& row : j.at("rows")) {
            model.set_row(row.at("context").get<std::vector<TokenId>>(),
                          parse_row(row.at("probs"), model.vocab_));
        }
        return model;
    }

private:
    static DenseDistribution parse_row(const nlohmann::json& j, std::size_t vocab) {
        std::vector<float> probs;
        probs.reserve(vocab);
        for (const auto& v : j) probs.push_back(v.get<float>());
        if (probs.size() != vocab) {
            throw Error(Errc::DomainError, "row length does not match vocab size");
        }
        return DenseDistribution::validate(std::move(probs));
    }

    void check_row(const DenseDistribution& row) const {
        if (row.size() != vocab_) {
            throw Error(Errc::DomainError, "row length does not match vocab size");
        }
    }

    std::size_t vocab_;
    std::size_t order_;
    double cost_ms_;
    RowMap rows_;
    DenseDistribution default_row_;
};

/// Target model plus a draft model mixed towards it: draft = λ·target +
/// (1−λ)·noise, row by row. λ is the knob that induces the token acceptance
/// rate: a fully mixed pair (λ=1) accepts every draft.
struct AlignedPair {
    std::shared_ptr<TableModel> target;
    std::shared_ptr<TableModel> draft;
    double lambda = 1.0;
};

namespace detail {

inline double unit_from(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t n) {
    std::vector<double> w(n);
    double sum = 0.0;
    for (auto& x : w) {
        double u = unit_from(rng);
        x = -std::log(1.0 - u);
        sum += x;
    }
    for (auto& x : w) x /= sum;
    return w;
}

inline DenseDistribution to_dense(const std::vector<double>& w) {
    std::vector<float> probs(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) probs[i] = static_cast<float>(w[i]);
    return DenseDistribution::validate(std::move(probs));
}

inline void enumerate_contexts(std::size_t vocab, std::size_t order,
                               const std::function<void(const std::vector<TokenId>&)>& fn) {
    std::vector<TokenId> ctx(order, 0);
    while (true) {
        fn(ctx);
        std::size_t i = 0;
        for (; i < order; ++i) {
            if (++ctx[i] < vocab) break;
            ctx[i] = 0;
        }
        if (i == order) break;
    }
}

}  // namespace detail

/// Builds a (target, draft) pair with every context of length m populated.
/// Deterministic in `seed`; draft rows are renormalized mixes of the target
/// row and an independent noise row.
inline AlignedPair make_aligned_pair(std::size_t vocab, std::size_t order, double lambda,
                                     std::uint64_t seed, double edge_cost_ms = 0.0,
                                     double cloud_cost_ms = 0.0) {
    if (lambda < 0.0 || lambda > 1.0) {
        throw Error(Errc::DomainError, "lambda out of range [0, 1]");
    }
    double table_size = 1.0;
    for (std::size_t i = 0; i < order; ++i) table_size *= static_cast<double>(vocab);
    if (table_size > (1 << 20)) {
        throw Error(Errc::DomainError, "context table too large (V^m over 2^20)");
    }

    auto target = std::make_shared<TableModel>(vocab, order, cloud_cost_ms);
    auto draft = std::make_shared<TableModel>(vocab, order, edge_cost_ms);
    std::mt19937_64 rng(seed);

    detail::enumerate_contexts(vocab, order, [&](const std::vector<TokenId>& ctx) {
        auto t = detail::random_simplex(rng, vocab);
        auto n = detail::random_simplex(rng, vocab);
        std::vector<double> d;
        if (lambda == 1.0) {
            d = t;  // fully aligned pairs are bit-identical, ratios exactly one
        } else {
            d.resize(vocab);
            double sum = 0.0;
            for (std::size_t i = 0; i < vocab; ++i) {
                d[i] = lambda * t[i] + (1.0 - lambda) * n[i];
                sum += d[i];
            }
            for (auto& x : d) x /= sum;
        }
        target->set_row(ctx, detail::to_dense(t));
        draft->set_row(ctx, detail::to_dense(d));
    });

    return AlignedPair{std::move(target), std::move(draft), lambda};
}

/// Pair engineered so every accept test passes with probability exactly
/// min(1, alpha): draft always proposes token 0 with q=1, target puts mass
/// alpha on it. Acceptance is then i.i.d. per position.
inline AlignedPair make_constant_alpha_pair(double alpha, double edge_cost_ms = 0.0,
                                            double cloud_cost_ms = 0.0) {
    if (alpha < 0.0 || alpha > 1.0) {
        throw Error(Errc::DomainError, "alpha out of range [0, 1]");
    }
    auto target = std::make_shared<TableModel>(2, 1, cloud_cost_ms);
    auto draft = std::make_shared<TableModel>(2, 1, edge_cost_ms);
    auto target_row = DenseDistribution::validate(
        {static_cast<float>(alpha), static_cast<float>(1.0 - alpha)});
    auto draft_row = DenseDistribution::validate({1.0f, 0.0f});
    target->set_default_row(target_row);
    draft->set_default_row(draft_row);
    for (TokenId c = 0; c < 2; ++c) {
        target->set_row({c}, target_row);
        draft->set_row({c}, draft_row);
    }
    return AlignedPair{std::move(target), std::move(draft), alpha};
}

/// Monte Carlo estimate of the per-token acceptance probability
/// E[min(1, P(x)/Q(x))] with contexts drawn uniformly and x ~ Q.
inline double measure_alpha(const AlignedPair& pair, std::size_t n_samples,
                            std::uint64_t seed = 0) {
    if (n_samples < 1) {
        throw Error(Errc::DomainError, "need at least one sample");
    }
    const std::size_t vocab = pair.target->vocab_size();
    const std::size_t order = pair.target->order();
    std::mt19937_64 rng(seed);
    std::vector<TokenId> ctx(order);
    double acc = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
        for (auto& c : ctx) {
            c = static_cast<TokenId>(rng() % vocab);
        }
        const auto& q = pair.draft->next_distribution(ctx);
        const auto& p = pair.target->next_distribution(ctx);
        const TokenId x = sample_dense(q, detail::unit_from(rng));
        const double ratio = static_cast<double>(p.at(x)) / static_cast<double>(q.at(x));
        acc += std::min(1.0, ratio);
    }
    return acc / static_cast<double>(n_samples);
}

}  // namespace picospec
