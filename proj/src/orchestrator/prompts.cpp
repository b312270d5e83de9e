#include "sciana/prompts.hpp"

#include <filesystem>

#include "sciana/error.hpp"
#include "sciana/text.hpp"

namespace sciana {

namespace embedded {
extern const char* const kJudge;
extern const char* const kPlanner;
extern const char* const kExpert;
extern const char* const kSolver;
extern const char* const kCritic;
}  // namespace embedded

std::string_view builtin_prompt(std::string_view name) {
  if (name == "judge") return embedded::kJudge;
  if (name == "planner") return embedded::kPlanner;
  if (name == "expert") return embedded::kExpert;
  if (name == "solver") return embedded::kSolver;
  if (name == "critic") return embedded::kCritic;
  throw Error(ErrorCode::NotFound, "no prompt named " + std::string(name));
}

PromptSet PromptSet::builtin() {
  return {std::string(embedded::kJudge), std::string(embedded::kPlanner), std::string(embedded::kExpert),
          std::string(embedded::kSolver), std::string(embedded::kCritic)};
}

PromptSet PromptSet::with_overrides(const std::string& dir) {
  PromptSet p = builtin();
  auto load = [&](const char* name, std::string& slot) {
    const auto path = std::filesystem::path(dir) / (std::string(name) + ".txt");
    if (std::filesystem::exists(path)) slot = read_file(path.string());
  };
  load("judge", p.judge);
  load("planner", p.planner);
  load("expert", p.expert);
  load("solver", p.solver);
  load("critic", p.critic);
  return p;
}

}  // namespace sciana
