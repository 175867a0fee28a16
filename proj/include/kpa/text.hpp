#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace kpa {

enum class TokenizerMode { Whitespace, Char };

TokenizerMode tokenizer_mode_from_string(std::string_view name);
std::string to_string(TokenizerMode mode);

// Whitespace mode: lowercased maximal runs of alphanumeric bytes; ASCII
// punctuation splits tokens and is dropped; multi-byte UTF-8 sequences are
// treated as token characters so CJK text survives intact.
// Char mode: one token per UTF-8 code point, skipping ASCII whitespace.
std::vector<std::string> tokenize(std::string_view text, TokenizerMode mode = TokenizerMode::Whitespace);

std::string_view trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);

// FNV-1a over bytes; stable across platforms.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 14695981039346656037ull);

// Derive a sub-seed for a named stream (per stage/question/generator).
std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag);

std::string to_hex(std::uint64_t value);

}  // namespace kpa
