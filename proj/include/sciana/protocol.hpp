#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sciana {

enum class TagErrorKind { missing, unbalanced };

struct TagError {
  TagErrorKind kind = TagErrorKind::missing;
  std::string tag;
};

struct TagParse {
  std::map<std::string, std::string> tags;
  std::optional<TagError> error;

  bool ok() const noexcept { return !error.has_value(); }
  const std::string* find(std::string_view name) const;
};

/// Extracts top-level lowercase `<name>...</name>` pairs. The first occurrence
/// of a name wins; same-name nesting is depth-counted so the outermost pair
/// is returned with inner markup kept verbatim. Text outside pairs is ignored.
/// An opener with no matching closer, or a closer with no opener, marks that
/// name unbalanced. The error reports the first required tag that is absent.
TagParse parse_tags(std::string_view text, const std::vector<std::string>& required = {});

struct Grade {
  int value = 0;
  // Set when the raw value fell outside 0..2 and was clamped.
  bool clamped = false;
};

/// First integer in the tag content, clamped into 0..2.
std::optional<Grade> parse_grade(std::string_view content);

inline constexpr std::array<const char*, 5> kGradeTags = {"accuracy", "completeness", "format", "writing",
                                                          "faithfulness"};

/// Follow-up message for the single repair attempt after a tag error.
std::string format_reminder(const std::vector<std::string>& required);

/// Lines of a plan that start with a single "*" (after leading spaces), marker removed.
std::vector<std::string> plan_bullets(std::string_view plan);

}  // namespace sciana
