#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sciana/document.hpp"

namespace sciana::detail {

struct RawElement {
  ElementKind kind = ElementKind::paragraph;
  Span span;
  std::optional<std::string> label;
  std::optional<std::string> caption;
  std::optional<std::string> image_ref;
  std::string title;
  int level = 0;
};

struct ScanResult {
  std::vector<RawElement> elements;
  // Same length as the raw source; comments blanked out.
  std::string clean;
  std::string title;
};

// Both throw Error(MalformedSource).
ScanResult scan_latex(const std::string& raw, std::vector<std::string>& diagnostics);
ScanResult scan_xml(const std::string& raw, std::vector<std::string>& diagnostics);

std::string blank_latex_comments(std::string_view src);

// Reads a balanced `{...}` group starting at `pos` (which must point at '{').
// Returns the inner text and moves `pos` past the closing brace.
std::optional<std::string> read_group(std::string_view s, std::size_t& pos, char open = '{', char close = '}');

// First argument of `\name{...}` in `s`, if any.
std::optional<std::string> command_argument(std::string_view s, std::string_view name);

std::string decode_entities(std::string_view s);
std::string strip_tags(std::string_view s);

}  // namespace sciana::detail
