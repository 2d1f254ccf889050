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

#include <deque>
#include <map>
#include <optional>
#include <vector>

namespace picospec {

/// Rollback-able per-actor session state: an append-only committed prefix plus
/// a contiguous run of in-flight speculative batches with positional
/// checkpoints. Committing a batch promotes its accepted prefix; anything the
/// commit leaves dangling past the new frontier is discarded wholesale.
class SessionState {
public:
    SessionState() = default;
    explicit SessionState(std::vector<TokenId> committed) : committed_(std::move(committed)) {}

    const std::vector<TokenId>& committed() const { return committed_; }
    const std::deque<DraftBatch>& speculative() const { return speculative_; }
    const std::map<std::uint32_t, std::uint64_t>& checkpoints() const { return checkpoints_; }

    std::uint64_t frontier_length() const {
        std::uint64_t len = committed_.size();
        for (const auto& b : speculative_) len += b.size();
        return len;
    }

    bool has_batch(std::uint32_t batch_id) const { return checkpoints_.count(batch_id) != 0; }

    /// Seed and corrected tokens enter here; the committed prefix only grows.
    void append_committed(TokenId token) { committed_.push_back(token); }

    void append_speculative(DraftBatch batch) {
        batch.validate();
        if (batch.base_pos != frontier_length()) {
            throw Error(Errc::Discontiguous,
                        "batch base " + std::to_string(batch.base_pos) +
                            " does not match frontier " + std::to_string(frontier_length()));
        }
        if (!checkpoints_.empty() && batch.batch_id <= checkpoints_.rbegin()->first) {
            throw Error(Errc::Discontiguous, "batch ids must be strictly increasing");
        }
        checkpoints_.emplace(batch.batch_id, batch.base_pos);
        speculative_.push_back(std::move(batch));
    }

    struct CommitResult {
        std::size_t committed_delta = 0;
        std::size_t discarded_batches = 0;
    };

    /// Promotes the first `accepted` tokens of the oldest in-flight batch,
    /// appends the corrected token if present, and rolls back every batch left
    /// beyond the new frontier.
    CommitResult commit(std::uint32_t batch_id, std::size_t accepted,
                        std::optional<TokenId> corrected) {
        if (!has_batch(batch_id)) {
            throw Error(Errc::UnknownBatch, "batch " + std::to_string(batch_id) + " not in flight");
        }
        if (speculative_.empty() || speculative_.front().batch_id != batch_id) {
            throw Error(Errc::OutOfOrder,
                        "batch " + std::to_string(batch_id) + " committed before an older one");
        }
        DraftBatch batch = std::move(speculative_.front());
        speculative_.pop_front();
        checkpoints_.erase(batch_id);
        if (accepted > batch.size()) {
            throw Error(Errc::DomainError, "accepted count exceeds batch size");
        }
        CommitResult result;
        committed_.insert(committed_.end(), batch.tokens.begin(),
                          batch.tokens.begin() + static_cast<std::ptrdiff_t>(accepted));
        result.committed_delta = accepted;
        if (corrected) {
            committed_.push_back(*corrected);
            ++result.committed_delta;
        }
        // Rollback: a retained run must start exactly at the new frontier;
        // after a correction every later batch is beyond it and goes away.
        while (!speculative_.empty() && speculative_.front().base_pos != committed_.size()) {
            checkpoints_.erase(speculative_.front().batch_id);
            speculative_.pop_front();
            ++result.discarded_batches;
        }
        return result;
    }

    /// The last `m` tokens of committed ⧺ speculative, the context the next
    /// pre-draft starts from.
    std::vector<TokenId> frontier_context(std::size_t m) const {
        std::vector<TokenId> all(committed_.begin(), committed_.end());
        for (const auto& b : speculative_) {
            all.insert(all.end(), b.tokens.begin(), b.tokens.end());
        }
        if (all.size() <= m) return all;
        return std::vector<TokenId>(all.end() - static_cast<std::ptrdiff_t>(m), all.end());
    }

    /// Full committed ⧺ speculative view.
    std::vector<TokenId> frontier_tokens() const { return frontier_context(SIZE_MAX); }

private:
    std::vector<TokenId> committed_;
    std::deque<DraftBatch> speculative_;
    std::map<std::uint32_t, std::uint64_t> checkpoints_;
};

}  // namespace picospec
