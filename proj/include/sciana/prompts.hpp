#pragma once

#include <string>
#include <string_view>

namespace sciana {

/// Agent and judge templates compiled in from prompts/*.txt.
/// Names: judge, planner, expert, solver, critic. Throws Error(NotFound) otherwise.
std::string_view builtin_prompt(std::string_view name);

struct PromptSet {
  std::string judge;
  std::string planner;
  std::string expert;
  std::string solver;
  std::string critic;

  static PromptSet builtin();
  /// Built-in templates with any `<dir>/<name>.txt` file taking precedence.
  static PromptSet with_overrides(const std::string& dir);
};

}  // namespace sciana
