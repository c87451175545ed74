// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "instedit/ipr.hpp"

namespace instedit {

inline constexpr std::size_t kDefaultContextLength = 16;

enum class TokenRole { Start, Text, End, Padding };

/// Lowercased whitespace tokens of `text`.
std::vector<std::string> tokenize(std::string_view text);

/// 16-bit hashed vocabulary id of one lowercase word.
std::uint16_t token_id(std::string_view word);

/// A tokenized caption laid out in a fixed context: start token, text tokens,
/// end token, padding. Text beyond n_ctx - 2 tokens is truncated.
class Caption {
public:
    explicit Caption(std::string_view text, std::size_t context_length = kDefaultContextLength);

    static Caption empty(std::size_t context_length = kDefaultContextLength) { return Caption("", context_length); }

    /// Normalized text: lowercase tokens joined by single spaces (before truncation).
    const std::string& text() const { return text_; }
    bool is_empty() const { return token_ids_.empty(); }
    std::span<const std::uint16_t> token_ids() const { return token_ids_; }
    std::size_t context_length() const { return n_ctx_; }

    TokenRole role(std::size_t position) const;

    /// Token layout for redistribution; absent for the empty caption.
    std::optional<TokenLayout> layout() const;

    bool operator==(const Caption& other) const { return text_ == other.text_ && n_ctx_ == other.n_ctx_; }

private:
    std::string text_;
    std::vector<std::uint16_t> token_ids_;
    std::size_t n_ctx_ = kDefaultContextLength;
};

}  // namespace instedit
