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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace testsupport {

// Test-side oracles: analytic enumerations the implementation is checked
// against. They integrate over the uniform draws instead of sampling, so the
// expected values they produce are exact up to double rounding.

// Truncated geometric pmf of the accepted count per cycle.
inline std::vector<double> truncated_geometric_pmf(double alpha, std::size_t gamma) {
    std::vector<double> pmf(gamma + 1);
    for (std::size_t k = 0; k < gamma; ++k) {
        pmf[k] = std::pow(alpha, static_cast<double>(k)) * (1.0 - alpha);
    }
    pmf[gamma] = std::pow(alpha, static_cast<double>(gamma));
    return pmf;
}

// Exact single-step committed-token distribution of the separate scheme for
// one (P, Q) pair and Top-K size K: draft x ~ Q, accept with min(1, P/Q),
// otherwise resample from the K-truncated residual (with the implementation's
// zero-mass fallback). Integration over the draws is analytic.
inline std::vector<double> speculative_output_distribution(const picospec::DenseDistribution& p,
                                                           const picospec::DenseDistribution& q,
                                                           std::size_t k) {
    using picospec::TokenId;
    const std::size_t v = p.size();
    std::vector<double> out(v, 0.0);
    double reject_mass = 0.0;
    for (std::size_t x = 0; x < v; ++x) {
        const double qx = static_cast<double>(q.at(static_cast<TokenId>(x)));
        const double px = static_cast<double>(p.at(static_cast<TokenId>(x)));
        if (qx <= 0.0) continue;
        const double thr = std::min(1.0, px / qx);
        out[x] += qx * thr;
        reject_mass += qx * (1.0 - thr);
    }
    if (reject_mass <= 0.0) return out;

    const picospec::SparseDistribution sparse = picospec::topk_compress(p, k);
    double residual_total = 0.0;
    std::vector<std::pair<TokenId, double>> residual;
    for (const auto& e : sparse.entries()) {
        const double r =
            std::max(0.0, static_cast<double>(e.prob) - static_cast<double>(q.at(e.id)));
        residual.emplace_back(e.id, r);
        residual_total += r;
    }
    if (residual_total > 0.0) {
        for (const auto& [id, r] : residual) out[id] += reject_mass * r / residual_total;
    } else {
        for (const auto& e : sparse.entries()) {
            out[e.id] += reject_mass * static_cast<double>(e.prob) / sparse.total_mass();
        }
    }
    return out;
}

inline double expected_output_tv(const picospec::DenseDistribution& p,
                                 const picospec::DenseDistribution& q, std::size_t k) {
    const auto out = speculative_output_distribution(p, q, k);
    double tv = 0.0;
    for (std::size_t x = 0; x < out.size(); ++x) {
        tv += std::abs(out[x] - static_cast<double>(p.at(static_cast<picospec::TokenId>(x))));
    }
    return 0.5 * tv;
}

// Exact per-token acceptance probability of a pair under uniformly drawn
// contexts: E[min(1, P(x)/Q(x))] with x ~ Q, enumerated over every context
// of length m and every token.
inline double exact_alpha(const picospec::AlignedPair& pair) {
    using picospec::TokenId;
    const std::size_t v = pair.target->vocab_size();
    const std::size_t m = pair.target->order();
    std::size_t n_ctx = 1;
    for (std::size_t i = 0; i < m; ++i) n_ctx *= v;
    double total = 0.0;
    std::vector<TokenId> ctx(m, 0);
    for (std::size_t c = 0; c < n_ctx; ++c) {
        std::size_t rem = c;
        for (std::size_t i = 0; i < m; ++i) {
            ctx[i] = static_cast<TokenId>(rem % v);
            rem /= v;
        }
        const auto& p = pair.target->next_distribution(ctx);
        const auto& q = pair.draft->next_distribution(ctx);
        for (std::size_t x = 0; x < v; ++x) {
            const double qx = static_cast<double>(q.at(static_cast<TokenId>(x)));
            if (qx <= 0.0) continue;
            const double px = static_cast<double>(p.at(static_cast<TokenId>(x)));
            total += std::min(qx, px);  // q * min(1, p/q)
        }
    }
    return total / static_cast<double>(n_ctx);
}

// Dense distribution from double weights (normalized, cast to f32).
inline picospec::DenseDistribution make_dense(std::vector<double> weights) {
    double sum = 0.0;
    for (double w : weights) sum += w;
    std::vector<float> probs(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
        probs[i] = static_cast<float>(weights[i] / sum);
    }
    return picospec::DenseDistribution::validate(std::move(probs));
}

inline picospec::DenseDistribution random_dense(std::mt19937_64& rng, std::size_t v) {
    std::vector<double> w(v);
    for (auto& x : w) {
        x = -std::log(1.0 - static_cast<double>(rng() >> 11) * 0x1.0p-53);
    }
    return make_dense(std::move(w));
}

}  // namespace testsupport
