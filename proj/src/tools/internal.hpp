#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sciana/tools.hpp"

namespace sciana::detail {

// Tool-level failure carrying the ToolResult error kind.
class ToolFailure : public std::runtime_error {
 public:
  ToolFailure(std::string kind, const std::string& message) : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

std::string param_string(const Json& p, const char* name, std::string fallback = {});
long long param_int(const Json& p, const char* name, long long fallback);

// Inner text of the first `<name ...>...</name>` in `s` starting at `from`.
std::string first_tag(std::string_view s, std::string_view name, std::size_t from = 0);
// Inner text of every `<name ...>...</name>` block.
std::vector<std::string> all_tags(std::string_view s, std::string_view name);

// Visible text of an HTML page: scripts and styles dropped, tags removed, entities decoded.
std::string html_to_text(std::string_view html);

enum class SniffedFormat { pdf, xml, latex, html, text };
SniffedFormat sniff(std::string_view body);

std::string element_heading(const DocElement& el);
// Complete readable text of an element, nested content included.
std::string element_text(const PaperDocument& doc, const DocElement& el);

}  // namespace sciana::detail
