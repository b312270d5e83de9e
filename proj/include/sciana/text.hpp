#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace sciana {

using Json = nlohmann::ordered_json;

/// Evaluation tokenizer shared by every lexical metric, length rewards and
/// corpus length thresholds.
///
/// Lowercases, segments on Unicode word boundaries and drops punctuation.
/// Digits joined by '.' or ',' stay a single token ("94.5"), and each CJK
/// ideograph or kana is its own token.
std::vector<std::string> tokenize(std::string_view text);

std::size_t token_count(std::string_view text);

std::string trim(std::string_view text);
std::string to_lower_ascii(std::string_view text);

/// Collapses every run of whitespace to a single space and trims the ends.
std::string normalize_whitespace(std::string_view text);

bool valid_utf8(std::string_view text) noexcept;

/// Cuts `text` to at most `max_bytes` without splitting a UTF-8 sequence.
std::string truncate_utf8(std::string_view text, std::size_t max_bytes);

/// Single-pass `{name}` substitution. Braces that do not name a known key
/// are copied through untouched, so LaTeX bodies survive rendering.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

std::vector<std::string> split_blocks(std::string_view text);

bool starts_with(std::string_view text, std::string_view prefix) noexcept;
bool contains(std::string_view text, std::string_view needle) noexcept;

std::uint64_t fnv1a64(std::string_view data) noexcept;
std::uint64_t splitmix64(std::uint64_t x) noexcept;

std::string sha256_hex(std::string_view data);
std::string base64_encode(std::string_view bytes);
// Throws Error(InvalidArgument) on malformed input.
std::string base64_decode(std::string_view text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace sciana
