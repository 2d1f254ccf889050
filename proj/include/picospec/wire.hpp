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

#include <bit>
#include <cstring>
#include <optional>
#include <variant>
#include <vector>

namespace picospec::wire {

// Frame layout (little-endian, fixed widths, decodable in place):
//
//   header: kind(1) ⧺ batch_id(4) ⧺ body_len(2)                      7 bytes
//   Prefill body:   digest(8) ⧺ count(2) ⧺ count × token_id(2)
//   Seed body:      token_id(2)
//   Draft body:     base_pos(4) ⧺ count(1) ⧺ truncated(1)
//                   ⧺ count × [token_id(2) ⧺ q(4, f32)]
//   PreVerify body: base_pos(4) ⧺ count(1) ⧺ count × token_id(2)
//   Verdict body:   accepted(1) ⧺ flag(1)
//                   ⧺ if rejected: K'(2) ⧺ K' × [token_id(2) ⧺ prob(4, f32)]
//   Interrupt body: rollback_pos(4)
//
// Probabilities travel as raw 32-bit floats so the values the edge samples
// against are bit-identical to the ones the cloud computed. Token ids are 16
// bits, which caps V at 65536. See docs/protocol.md for worked examples.

enum class FrameKind : std::uint8_t {
    Prefill = 0,
    Seed = 1,
    Draft = 2,
    PreVerify = 3,
    Verdict = 4,
    Interrupt = 5,
};

inline constexpr std::size_t kHeaderSize = 7;

struct PrefillBody {
    std::uint64_t config_digest = 0;
    std::vector<TokenId> prompt;

    bool operator==(const PrefillBody&) const = default;
};

struct SeedBody {
    TokenId token = 0;

    bool operator==(const SeedBody&) const = default;
};

struct DraftBody {
    std::uint64_t base_pos = 0;
    bool truncated = false;
    std::vector<TokenId> tokens;
    std::vector<float> chosen_probs;

    bool operator==(const DraftBody&) const = default;
};

struct PreVerifyBody {
    std::uint64_t base_pos = 0;
    std::vector<TokenId> tokens;

    bool operator==(const PreVerifyBody&) const = default;
};

struct VerdictBody {
    std::uint8_t accepted_count = 0;
    bool rejected = false;
    std::vector<SparseEntry> sparse_target;  // present iff rejected

    bool operator==(const VerdictBody&) const = default;
};

struct InterruptBody {
    std::uint64_t rollback_pos = 0;

    bool operator==(const InterruptBody&) const = default;
};

struct Frame {
    std::uint32_t batch_id = 0;
    std::variant<PrefillBody, SeedBody, DraftBody, PreVerifyBody, VerdictBody, InterruptBody> body;

    FrameKind kind() const { return static_cast<FrameKind>(body.index()); }

    bool operator==(const Frame&) const = default;
};

namespace detail {

class Writer {
public:
    explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint64_t v, const char* what) {
        if (v > 0xFFFF) throw Error(Errc::Overflow, std::string(what) + " exceeds 16 bits");
        out_.push_back(static_cast<std::uint8_t>(v & 0xFF));
        out_.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    }
    void u32(std::uint64_t v, const char* what) {
        if (v > 0xFFFFFFFFULL) throw Error(Errc::Overflow, std::string(what) + " exceeds 32 bits");
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v), "float bits"); }

private:
    std::vector<std::uint8_t>& out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t u8() { return take(1)[0]; }
    std::uint16_t u16() {
        auto b = take(2);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }
    std::uint32_t u32() {
        auto b = take(4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        auto b = take(8);
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }

    std::size_t remaining() const { return data_.size() - pos_; }

private:
    std::span<const std::uint8_t> take(std::size_t n) {
        if (pos_ + n > data_.size()) {
            throw Error(Errc::Truncated, "frame ends before field");
        }
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Closed-form frame size in bytes; `n` is the token count for Prefill, Draft
/// and PreVerify, the sparse entry count K' for a rejected Verdict (n=0 means
/// an all-accepted verdict), and is ignored for Seed and Interrupt.
inline std::size_t frame_size_model(FrameKind kind, std::size_t n = 0) {
    switch (kind) {
    case FrameKind::Prefill: return kHeaderSize + 10 + 2 * n;
    case FrameKind::Seed: return kHeaderSize + 2;
    case FrameKind::Draft: return kHeaderSize + 6 + 6 * n;
    case FrameKind::PreVerify: return kHeaderSize + 5 + 2 * n;
    case FrameKind::Verdict: return n == 0 ? kHeaderSize + 2 : kHeaderSize + 4 + 6 * n;
    case FrameKind::Interrupt: return kHeaderSize + 4;
    }
    throw Error(Errc::BadKind, "unknown frame kind");
}

inline std::vector<std::uint8_t> encode(const Frame& frame) {
    std::vector<std::uint8_t> out;
    detail::Writer w(out);
    w.u8(static_cast<std::uint8_t>(frame.kind()));
    w.u32(frame.batch_id, "batch id");
    w.u16(0, "body length placeholder");

    std::visit(
        [&](const auto& body) {
            using T = std::decay_t<decltype(body)>;
            if constexpr (std::is_same_v<T, PrefillBody>) {
                w.u64(body.config_digest);
                w.u16(body.prompt.size(), "prompt count");
                for (TokenId t : body.prompt) w.u16(t, "token id");
            } else if constexpr (std::is_same_v<T, SeedBody>) {
                w.u16(body.token, "token id");
            } else if constexpr (std::is_same_v<T, DraftBody>) {
                if (body.tokens.size() != body.chosen_probs.size()) {
                    throw Error(Errc::DomainError, "token and probability counts differ");
                }
                w.u32(body.base_pos, "base position");
                if (body.tokens.size() > 0xFF) throw Error(Errc::Overflow, "draft count exceeds 8 bits");
                w.u8(static_cast<std::uint8_t>(body.tokens.size()));
                w.u8(body.truncated ? 1 : 0);
                for (std::size_t i = 0; i < body.tokens.size(); ++i) {
                    w.u16(body.tokens[i], "token id");
                    w.f32(body.chosen_probs[i]);
                }
            } else if constexpr (std::is_same_v<T, PreVerifyBody>) {
                w.u32(body.base_pos, "base position");
                if (body.tokens.size() > 0xFF) throw Error(Errc::Overflow, "token count exceeds 8 bits");
                w.u8(static_cast<std::uint8_t>(body.tokens.size()));
                for (TokenId t : body.tokens) w.u16(t, "token id");
            } else if constexpr (std::is_same_v<T, VerdictBody>) {
                w.u8(body.accepted_count);
                w.u8(body.rejected ? 1 : 0);
                if (body.rejected) {
                    w.u16(body.sparse_target.size(), "sparse entry count");
                    for (const auto& e : body.sparse_target) {
                        w.u16(e.id, "token id");
                        w.f32(e.prob);
                    }
                } else if (!body.sparse_target.empty()) {
                    throw Error(Errc::DomainError, "accepted verdict carries sparse entries");
                }
            } else if constexpr (std::is_same_v<T, InterruptBody>) {
                w.u32(body.rollback_pos, "rollback position");
            }
        },
        frame.body);

    const std::size_t body_len = out.size() - kHeaderSize;
    if (body_len > 0xFFFF) throw Error(Errc::Overflow, "body length exceeds 16 bits");
    out[5] = static_cast<std::uint8_t>(body_len & 0xFF);
    out[6] = static_cast<std::uint8_t>((body_len >> 8) & 0xFF);
    return out;
}

inline Frame decode(std::span<const std::uint8_t> data) {
    if (data.size() < kHeaderSize) {
        throw Error(Errc::Truncated, "input shorter than frame header");
    }
    detail::Reader header(data.first(kHeaderSize));
    const std::uint8_t kind_byte = header.u8();
    if (kind_byte > static_cast<std::uint8_t>(FrameKind::Interrupt)) {
        throw Error(Errc::BadKind, "kind byte " + std::to_string(kind_byte));
    }
    const FrameKind kind = static_cast<FrameKind>(kind_byte);
    Frame frame;
    frame.batch_id = header.u32();
    const std::uint16_t body_len = header.u16();
    if (data.size() < kHeaderSize + body_len) {
        throw Error(Errc::Truncated, "declared body length exceeds input");
    }
    detail::Reader r(data.subspan(kHeaderSize, body_len));

    switch (kind) {
    case FrameKind::Prefill: {
        PrefillBody body;
        body.config_digest = r.u64();
        const std::uint16_t count = r.u16();
        if (body_len != 10 + 2 * static_cast<std::size_t>(count)) {
            throw Error(Errc::LengthMismatch, "prefill body length");
        }
        for (std::uint16_t i = 0; i < count; ++i) body.prompt.push_back(r.u16());
        frame.body = std::move(body);
        break;
    }
    case FrameKind::Seed: {
        if (body_len != 2) throw Error(Errc::LengthMismatch, "seed body length");
        frame.body = SeedBody{r.u16()};
        break;
    }
    case FrameKind::Draft: {
        DraftBody body;
        body.base_pos = r.u32();
        const std::uint8_t count = r.u8();
        body.truncated = r.u8() != 0;
        if (body_len != 6 + 6 * static_cast<std::size_t>(count)) {
            throw Error(Errc::LengthMismatch, "draft body length");
        }
        for (std::uint8_t i = 0; i < count; ++i) {
            body.tokens.push_back(r.u16());
            body.chosen_probs.push_back(r.f32());
        }
        frame.body = std::move(body);
        break;
    }
    case FrameKind::PreVerify: {
        PreVerifyBody body;
        body.base_pos = r.u32();
        const std::uint8_t count = r.u8();
        if (body_len != 5 + 2 * static_cast<std::size_t>(count)) {
            throw Error(Errc::LengthMismatch, "pre-verify body length");
        }
        for (std::uint8_t i = 0; i < count; ++i) body.tokens.push_back(r.u16());
        frame.body = std::move(body);
        break;
    }
    case FrameKind::Verdict: {
        VerdictBody body;
        body.accepted_count = r.u8();
        const std::uint8_t flag = r.u8();
        if (flag > 1) throw Error(Errc::BadKind, "verdict flag " + std::to_string(flag));
        body.rejected = flag == 1;
        if (body.rejected) {
            const std::uint16_t count = r.u16();
            if (body_len != 4 + 6 * static_cast<std::size_t>(count)) {
                throw Error(Errc::LengthMismatch, "verdict body length");
            }
            for (std::uint16_t i = 0; i < count; ++i) {
                const TokenId id = r.u16();
                const float prob = r.f32();
                body.sparse_target.push_back(SparseEntry{id, prob});
            }
        } else if (body_len != 2) {
            throw Error(Errc::LengthMismatch, "verdict body length");
        }
        frame.body = std::move(body);
        break;
    }
    case FrameKind::Interrupt: {
        if (body_len != 4) throw Error(Errc::LengthMismatch, "interrupt body length");
        frame.body = InterruptBody{r.u32()};
        break;
    }
    }
    return frame;
}

}  // namespace picospec::wire
