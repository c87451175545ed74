// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "instedit/caption.hpp"

#include <cctype>
#include <sstream>

#include "instedit/errors.hpp"

namespace instedit {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            if (!current.empty()) {
                words.push_back(std::move(current));
                current.clear();
            }
        } else {
            current.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!current.empty()) {
        words.push_back(std::move(current));
    }
    return words;
}

std::uint16_t token_id(std::string_view word) {
    // FNV-1a, folded to 16 bits.
    std::uint32_t h = 2166136261u;
    for (char ch : word) {
        h ^= static_cast<unsigned char>(ch);
        h *= 16777619u;
    }
    return static_cast<std::uint16_t>((h >> 16) ^ (h & 0xffffu));
}

Caption::Caption(std::string_view text, std::size_t context_length) : n_ctx_(context_length) {
    INSTEDIT_CHECK(context_length >= 3, ConfigError, "caption context needs room for start, end and one token");
    const auto words = tokenize(text);
    std::ostringstream joined;
    for (std::size_t i = 0; i < words.size(); ++i) {
        joined << (i ? " " : "") << words[i];
        if (token_ids_.size() + 2 < n_ctx_) {
            token_ids_.push_back(token_id(words[i]));
        }
    }
    text_ = joined.str();
}

TokenRole Caption::role(std::size_t position) const {
    INSTEDIT_CHECK(position < n_ctx_, DataError, "token position beyond caption context");
    if (position == 0) {
        return TokenRole::Start;
    }
    if (position <= token_ids_.size()) {
        return TokenRole::Text;
    }
    if (position == token_ids_.size() + 1) {
        return TokenRole::End;
    }
    return TokenRole::Padding;
}

std::optional<TokenLayout> Caption::layout() const {
    if (is_empty()) {
        return std::nullopt;
    }
    return TokenLayout::for_text_tokens(token_ids_.size(), n_ctx_);
}

}  // namespace instedit
