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

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace picospec {

using TokenId = std::uint32_t;

// Wire format uses 16-bit token ids, which caps the vocabulary.
inline constexpr std::size_t kMaxVocab = 65536;

enum class Errc {
    NegativeMass,
    NotNormalized,
    DomainError,
    StaleBatch,
    Discontiguous,
    UnknownBatch,
    OutOfOrder,
    Overflow,
    Truncated,
    BadKind,
    LengthMismatch,
    ConnectionRefused,
    PeerClosed,
    Divergence,
    EmptyRun,
    BadScenario,
};

inline const char* errc_name(Errc c) {
    switch (c) {
    case Errc::NegativeMass: return "NegativeMass";
    case Errc::NotNormalized: return "NotNormalized";
    case Errc::DomainError: return "DomainError";
    case Errc::StaleBatch: return "StaleBatch";
    case Errc::Discontiguous: return "Discontiguous";
    case Errc::UnknownBatch: return "UnknownBatch";
    case Errc::OutOfOrder: return "OutOfOrder";
    case Errc::Overflow: return "Overflow";
    case Errc::Truncated: return "Truncated";
    case Errc::BadKind: return "BadKind";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::ConnectionRefused: return "ConnectionRefused";
    case Errc::PeerClosed: return "PeerClosed";
    case Errc::Divergence: return "Divergence";
    case Errc::EmptyRun: return "EmptyRun";
    case Errc::BadScenario: return "BadScenario";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& msg)
        : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

// Probability vectors sum to one within this tolerance. Entries are stored as
// 32-bit floats (the same representation that goes on the wire), so the check
// is bounded by per-entry rounding, not by vector length.
inline constexpr double kMassTolerance = 1e-6;

// ---------------------------------------------------------------------------
// Seeded random streams
// ---------------------------------------------------------------------------

enum class StreamLabel : std::uint8_t {
    EdgeDraft = 0,
    CloudAccept = 1,
    EdgeResample = 2,
    Network = 3,
};

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline constexpr std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

/// Counter-based uniform generator, partitioned by (seed, label).
///
/// Draw i is a pure function of (seed, label, i), so a draw can be addressed
/// by index without consuming preceding ones. The protocol code keys draws by
/// absolute token position; that keeps edge and cloud transcripts aligned even
/// when the edge drafts ahead and later throws speculative work away.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, StreamLabel label)
        : key_(mix64(mix64(seed + kGolden) ^ ((static_cast<std::uint64_t>(label) + 1) * kGolden))),
          label_(label) {}

    /// Uniform draw in [0, 1) at an explicit index.
    double uniform_at(std::uint64_t index) {
        ++reads_;
        return to_unit(word_at(index));
    }

    /// Sequential uniform draw in [0, 1); advances the cursor.
    double next_uniform() { return uniform_at(cursor_++); }

    std::uint64_t word_at(std::uint64_t index) const { return mix64(key_ + (index + 1) * kGolden); }

    /// Number of draws consumed so far (keyed and sequential).
    std::uint64_t draws() const { return reads_; }

    StreamLabel label() const { return label_; }

private:
    static double to_unit(std::uint64_t w) {
        return static_cast<double>(w >> 11) * 0x1.0p-53;
    }

    std::uint64_t key_;
    StreamLabel label_;
    std::uint64_t cursor_ = 0;
    std::uint64_t reads_ = 0;
};

// ---------------------------------------------------------------------------
// Probability containers
// ---------------------------------------------------------------------------

/// Full next-token distribution over a vocabulary of size V.
class DenseDistribution {
public:
    DenseDistribution() = default;

    /// Validates a raw probability vector.
    static DenseDistribution validate(std::vector<float> probs) {
        double sum = 0.0;
        for (float p : probs) {
            if (p < 0.0f) {
                throw Error(Errc::NegativeMass, "probability entry below zero");
            }
            sum += static_cast<double>(p);
        }
        if (sum < 1.0 - kMassTolerance || sum > 1.0 + kMassTolerance) {
            throw Error(Errc::NotNormalized, "probability mass is " + std::to_string(sum));
        }
        DenseDistribution d;
        d.probs_ = std::move(probs);
        d.total_ = sum;
        return d;
    }

    std::size_t size() const { return probs_.size(); }
    float at(TokenId id) const { return probs_[id]; }
    std::span<const float> probs() const { return probs_; }
    double total_mass() const { return total_; }

    bool operator==(const DenseDistribution& other) const { return probs_ == other.probs_; }

private:
    std::vector<float> probs_;
    double total_ = 0.0;
};

struct SparseEntry {
    TokenId id;
    float prob;

    bool operator==(const SparseEntry& other) const {
        return id == other.id && prob == other.prob;
    }
};

/// Top-K compressed distribution: positive entries sorted by descending
/// probability, ties broken by lower token id.
class SparseDistribution {
public:
    SparseDistribution() = default;

    static SparseDistribution from_entries(std::vector<SparseEntry> entries) {
        double sum = 0.0;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (!(entries[i].prob > 0.0f)) {
                throw Error(Errc::DomainError, "sparse entry must have positive mass");
            }
            if (i > 0) {
                if (entries[i].prob > entries[i - 1].prob) {
                    throw Error(Errc::DomainError, "sparse entries must be non-increasing");
                }
            }
            sum += static_cast<double>(entries[i].prob);
        }
        for (std::size_t i = 0; i < entries.size(); ++i) {
            for (std::size_t j = i + 1; j < entries.size(); ++j) {
                if (entries[i].id == entries[j].id) {
                    throw Error(Errc::DomainError, "duplicate token id in sparse distribution");
                }
            }
        }
        if (sum > 1.0 + kMassTolerance) {
            throw Error(Errc::NotNormalized, "sparse mass exceeds one: " + std::to_string(sum));
        }
        SparseDistribution s;
        s.entries_ = std::move(entries);
        s.total_ = sum;
        return s;
    }

    std::span<const SparseEntry> entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    double total_mass() const { return total_; }

    /// Probability of a token id, zero outside the support.
    float prob_of(TokenId id) const {
        for (const auto& e : entries_) {
            if (e.id == id) return e.prob;
        }
        return 0.0f;
    }

    bool operator==(const SparseDistribution& other) const { return entries_ == other.entries_; }

private:
    std::vector<SparseEntry> entries_;
    double total_ = 0.0;
};

/// Inverse-CDF sample from a dense distribution. Accumulates in ascending
/// token-id order with a double accumulator; every caller that has to agree
/// bit-for-bit with another sampling route relies on exactly this order.
inline TokenId sample_dense(const DenseDistribution& dist, double u) {
    const double threshold = u * dist.total_mass();
    double acc = 0.0;
    TokenId last_positive = 0;
    bool seen_positive = false;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        const float p = dist.at(static_cast<TokenId>(i));
        if (p > 0.0f) {
            acc += static_cast<double>(p);
            last_positive = static_cast<TokenId>(i);
            seen_positive = true;
            if (threshold < acc) {
                return last_positive;
            }
        }
    }
    if (!seen_positive) {
        throw Error(Errc::DomainError, "cannot sample from all-zero distribution");
    }
    return last_positive;
}

// ---------------------------------------------------------------------------
// Session configuration
// ---------------------------------------------------------------------------

struct StreamSeeds {
    std::uint64_t edge_draft = 1;
    std::uint64_t cloud_accept = 2;
    std::uint64_t edge_resample = 3;
    std::uint64_t network = 4;
};

struct SessionConfig {
    std::size_t vocab_size = 2;
    std::size_t gamma = 4;
    std::size_t top_k = 2;
    StreamSeeds seeds;

    void validate() const {
        if (vocab_size < 2 || vocab_size > kMaxVocab) {
            throw Error(Errc::DomainError, "vocab size out of range");
        }
        if (gamma < 1 || gamma > 64) {
            throw Error(Errc::DomainError, "gamma out of range [1, 64]");
        }
        if (top_k < 1 || top_k > vocab_size) {
            throw Error(Errc::DomainError, "top-k out of range [1, V]");
        }
    }
};

}  // namespace picospec
