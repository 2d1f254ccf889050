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
#include <numeric>
#include <optional>
#include <vector>

namespace picospec {

/// A speculative segment: tokens drafted from `base_pos` plus the draft
/// probabilities q_i of the chosen tokens. Only these scalars go uplink; the
/// cloud never sees the full draft distribution.
struct DraftBatch {
    std::uint32_t batch_id = 0;
    std::uint64_t base_pos = 0;
    std::vector<TokenId> tokens;
    std::vector<float> chosen_probs;
    bool truncated = false;

    std::size_t size() const { return tokens.size(); }

    void validate() const {
        if (tokens.empty()) {
            throw Error(Errc::DomainError, "draft batch must contain at least one token");
        }
        if (tokens.size() != chosen_probs.size()) {
            throw Error(Errc::DomainError, "token and probability counts differ");
        }
        for (float q : chosen_probs) {
            if (!(q > 0.0f)) {
                throw Error(Errc::DomainError, "drafted token has non-positive draft probability");
            }
        }
    }
};

enum class VerdictKind { AllAccepted, Rejected };

/// Cloud verification outcome. The sparse target distribution is present only
/// on rejection; downlink stays empty on a full hit.
struct Verdict {
    std::uint32_t batch_id = 0;
    std::size_t accepted_count = 0;
    VerdictKind kind = VerdictKind::AllAccepted;
    std::optional<SparseDistribution> sparse_target;
};

/// Acceptance rule: keep the drafted token iff u < min(1, p/q).
inline bool accept_test(double p, double q, double u) {
    if (!(q > 0.0)) {
        throw Error(Errc::DomainError, "accept test requires q > 0");
    }
    if (p < 0.0 || u < 0.0 || u >= 1.0) {
        throw Error(Errc::DomainError, "accept test requires p >= 0 and u in [0, 1)");
    }
    return u < std::min(1.0, p / q);
}

/// Keeps the K highest-probability entries, ties broken by lower token id.
/// Zero-mass entries are never included, so K'=min(K, #positive).
inline SparseDistribution topk_compress(const DenseDistribution& dist, std::size_t k) {
    if (k < 1 || k > dist.size()) {
        throw Error(Errc::DomainError, "top-k out of range [1, V]");
    }
    std::vector<TokenId> ids;
    ids.reserve(dist.size());
    for (std::size_t i = 0; i < dist.size(); ++i) {
        if (dist.at(static_cast<TokenId>(i)) > 0.0f) {
            ids.push_back(static_cast<TokenId>(i));
        }
    }
    const std::size_t keep = std::min(k, ids.size());
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(),
                      [&](TokenId a, TokenId b) {
                          const float pa = dist.at(a);
                          const float pb = dist.at(b);
                          return pa > pb || (pa == pb && a < b);
                      });
    std::vector<SparseEntry> entries;
    entries.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
        entries.push_back(SparseEntry{ids[i], dist.at(ids[i])});
    }
    return SparseDistribution::from_entries(std::move(entries));
}

namespace detail {

/// Inverse-CDF pick over weighted entries sorted by ascending id, double
/// accumulator. Both the sparse path and the dense reference reduce to this
/// exact summation order, which is what makes them bit-identical.
struct WeightedEntry {
    TokenId id;
    double weight;
};

inline TokenId pick_by_weight(const std::vector<WeightedEntry>& entries, double total, double u) {
    const double threshold = u * total;
    double acc = 0.0;
    TokenId last = entries.front().id;
    for (const auto& e : entries) {
        if (e.weight > 0.0) {
            acc += e.weight;
            last = e.id;
            if (threshold < acc) return last;
        }
    }
    return last;
}

}  // namespace detail

/// Residual resampling on the sparse support: r(id) = max(0, P(id) − Q(id)),
/// normalized, inverse-CDF sampled with the supplied uniform draw. When the
/// residual mass is zero the corrected token is drawn from the renormalized
/// sparse target itself.
inline TokenId residual_pick(const SparseDistribution& sparse_p, const DenseDistribution& q,
                             double u) {
    if (sparse_p.empty()) {
        throw Error(Errc::DomainError, "sparse target is empty");
    }
    std::vector<SparseEntry> support(sparse_p.entries().begin(), sparse_p.entries().end());
    std::sort(support.begin(), support.end(),
              [](const SparseEntry& a, const SparseEntry& b) { return a.id < b.id; });
    std::vector<detail::WeightedEntry> residual;
    residual.reserve(support.size());
    double total = 0.0;
    for (const auto& e : support) {
        const double r =
            std::max(0.0, static_cast<double>(e.prob) - static_cast<double>(q.at(e.id)));
        residual.push_back({e.id, r});
        total += r;
    }
    if (total > 0.0) {
        return detail::pick_by_weight(residual, total, u);
    }
    // Zero residual mass: fall back to the sparse target renormalized.
    total = 0.0;
    for (std::size_t i = 0; i < support.size(); ++i) {
        residual[i].weight = static_cast<double>(support[i].prob);
        total += residual[i].weight;
    }
    return detail::pick_by_weight(residual, total, u);
}

inline TokenId residual_resample(const SparseDistribution& sparse_p, const DenseDistribution& q,
                                 RandomStream& stream) {
    return residual_pick(sparse_p, q, stream.next_uniform());
}

/// Drafts one token at an absolute position: x ~ Q(context) using the
/// position-keyed draw. Returns the token and writes its draft probability.
inline TokenId draft_token(const SequenceModel& draft, std::span<const TokenId> context,
                           std::uint64_t position, RandomStream& edge_draft, float* q_out) {
    const auto& q = draft.next_distribution(context);
    const TokenId tok = sample_dense(q, edge_draft.uniform_at(position));
    if (q_out != nullptr) {
        *q_out = q.at(tok);
    }
    return tok;
}

/// Cloud-side verification: computes the target distribution at each drafted
/// position (context = committed tokens plus the batch prefix), applies the
/// accept test sequentially with draws keyed by absolute position, and on the
/// first failure returns the Top-K compressed target distribution.
inline Verdict cloud_verify(const DraftBatch& batch, const SequenceModel& target,
                            std::span<const TokenId> committed, std::size_t k,
                            RandomStream& accept_stream) {
    batch.validate();
    if (batch.base_pos != committed.size()) {
        throw Error(Errc::StaleBatch, "batch base " + std::to_string(batch.base_pos) +
                                          " does not match committed length " +
                                          std::to_string(committed.size()));
    }
    std::vector<TokenId> ctx(committed.begin(), committed.end());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& p = target.next_distribution(ctx);
        const double u = accept_stream.uniform_at(batch.base_pos + i);
        const bool ok = accept_test(static_cast<double>(p.at(batch.tokens[i])),
                                    static_cast<double>(batch.chosen_probs[i]), u);
        if (!ok) {
            return Verdict{batch.batch_id, i, VerdictKind::Rejected, topk_compress(p, k)};
        }
        ctx.push_back(batch.tokens[i]);
    }
    return Verdict{batch.batch_id, batch.size(), VerdictKind::AllAccepted, std::nullopt};
}

struct StreamSet {
    RandomStream edge_draft;
    RandomStream cloud_accept;
    RandomStream edge_resample;

    explicit StreamSet(const StreamSeeds& seeds)
        : edge_draft(seeds.edge_draft, StreamLabel::EdgeDraft),
          cloud_accept(seeds.cloud_accept, StreamLabel::CloudAccept),
          edge_resample(seeds.edge_resample, StreamLabel::EdgeResample) {}
};

struct StepResult {
    std::vector<TokenId> accepted;
    std::optional<TokenId> corrected;

    std::size_t committed_count() const { return accepted.size() + (corrected ? 1 : 0); }
};

/// Reference speculative sampling step over full dense distributions, used as
/// the lossless oracle for the separate scheme. Draw keying is identical to
/// the distributed path: drafts, accept tests and the residual draw are all
/// addressed by absolute position. Full acceptance yields exactly the drafted
/// tokens; no bonus token is sampled, since the next batch is already drafted
/// from the tail context.
inline StepResult vanilla_step_reference(const SequenceModel& draft, const SequenceModel& target,
                                         std::span<const TokenId> context, std::size_t gamma,
                                         StreamSet& streams) {
    if (gamma < 1) {
        throw Error(Errc::DomainError, "gamma must be at least one");
    }
    const std::uint64_t base = context.size();
    std::vector<TokenId> ctx(context.begin(), context.end());
    std::vector<TokenId> drafted;
    drafted.reserve(gamma);
    for (std::size_t i = 0; i < gamma; ++i) {
        const auto& q = draft.next_distribution(ctx);
        const TokenId tok = sample_dense(q, streams.edge_draft.uniform_at(base + i));
        drafted.push_back(tok);
        ctx.push_back(tok);
    }

    StepResult result;
    std::vector<TokenId> verify_ctx(context.begin(), context.end());
    for (std::size_t i = 0; i < gamma; ++i) {
        const auto& p = target.next_distribution(verify_ctx);
        const auto& q = draft.next_distribution(verify_ctx);
        const double u = streams.cloud_accept.uniform_at(base + i);
        if (accept_test(static_cast<double>(p.at(drafted[i])),
                        static_cast<double>(q.at(drafted[i])), u)) {
            result.accepted.push_back(drafted[i]);
            verify_ctx.push_back(drafted[i]);
            continue;
        }
        // Rejected at i: sample the corrected token from the dense residual
        // norm(max(0, P − Q)), ascending ids, double accumulation.
        std::vector<detail::WeightedEntry> residual;
        residual.reserve(p.size());
        double total = 0.0;
        for (std::size_t x = 0; x < p.size(); ++x) {
            const double r =
                std::max(0.0, static_cast<double>(p.at(static_cast<TokenId>(x))) -
                                  static_cast<double>(q.at(static_cast<TokenId>(x))));
            residual.push_back({static_cast<TokenId>(x), r});
            total += r;
        }
        const double u_fix = streams.edge_resample.uniform_at(base + i);
        if (total > 0.0) {
            result.corrected = detail::pick_by_weight(residual, total, u_fix);
        } else {
            // Zero residual mass implies P == Q on the support; sample P itself.
            total = 0.0;
            for (auto& e : residual) {
                e.weight = static_cast<double>(p.at(e.id));
                total += e.weight;
            }
            result.corrected = detail::pick_by_weight(residual, total, u_fix);
        }
        return result;
    }
    return result;
}

/// One step of the separate scheme driven outside the pipeline: draft a batch,
/// verify it on the cloud, resample locally on rejection. Exercises the same
/// primitives the discrete-event pipeline composes.
inline StepResult separate_step(const SequenceModel& draft, const SequenceModel& target,
                                std::span<const TokenId> context, std::size_t gamma, std::size_t k,
                                StreamSet& streams, std::uint32_t batch_id = 1) {
    DraftBatch batch;
    batch.batch_id = batch_id;
    batch.base_pos = context.size();
    std::vector<TokenId> ctx(context.begin(), context.end());
    for (std::size_t i = 0; i < gamma; ++i) {
        float q = 0.0f;
        const TokenId tok = draft_token(draft, ctx, batch.base_pos + i, streams.edge_draft, &q);
        batch.tokens.push_back(tok);
        batch.chosen_probs.push_back(q);
        ctx.push_back(tok);
    }
    const Verdict verdict = cloud_verify(batch, target, context, k, streams.cloud_accept);

    StepResult result;
    result.accepted.assign(batch.tokens.begin(),
                           batch.tokens.begin() + static_cast<std::ptrdiff_t>(verdict.accepted_count));
    if (verdict.kind == VerdictKind::Rejected) {
        std::vector<TokenId> reject_ctx(context.begin(), context.end());
        reject_ctx.insert(reject_ctx.end(), result.accepted.begin(), result.accepted.end());
        const auto& q = draft.next_distribution(reject_ctx);
        const double u =
            streams.edge_resample.uniform_at(batch.base_pos + verdict.accepted_count);
        result.corrected = residual_pick(*verdict.sparse_target, q, u);
    }
    return result;
}

/// Samples the seed token the cloud emits after prefill. Uses the accept
/// stream at the seed position, which batch verification never touches
/// (batches start one past the seed).
inline TokenId sample_seed_token(const SequenceModel& target, std::span<const TokenId> prompt,
                                 RandomStream& cloud_accept) {
    const auto& p = target.next_distribution(prompt);
    return sample_dense(p, cloud_accept.uniform_at(prompt.size()));
}

/// Multi-step reference transcript: prompt, seed token, then vanilla steps
/// until at least `max_new_tokens` tokens (seed included) exist past the
/// prompt. Always runs at least one step and stops only on step boundaries,
/// mirroring the pipeline's stopping rule.
inline std::vector<TokenId> run_vanilla_reference(const SequenceModel& draft,
                                                  const SequenceModel& target,
                                                  std::span<const TokenId> prompt,
                                                  std::size_t gamma, StreamSet& streams,
                                                  std::size_t max_new_tokens) {
    std::vector<TokenId> committed(prompt.begin(), prompt.end());
    committed.push_back(sample_seed_token(target, prompt, streams.cloud_accept));
    do {
        const StepResult step = vanilla_step_reference(draft, target, committed, gamma, streams);
        committed.insert(committed.end(), step.accepted.begin(), step.accepted.end());
        if (step.corrected) {
            committed.push_back(*step.corrected);
        }
    } while (committed.size() - prompt.size() < max_new_tokens);
    return committed;
}

}  // namespace picospec
