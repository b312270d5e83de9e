#pragma once

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sciana/evaluation.hpp"
#include "sciana/tools.hpp"

namespace sciana {

enum class Agent { planner, expert, solver, critic };
std::string_view to_string(Agent a) noexcept;
Agent parse_agent(std::string_view s);

/// Tags an agent's response must carry. The expert accepts either a tool call
/// (think, tool, params) or a summary (think, summary).
std::vector<std::string> required_tags(Agent a);

/// 1 when the response parses under the agent's tag protocol, else 0. Critic
/// grades must also read as integers and expert params as a JSON object.
int format_reward(std::string_view z, Agent a);

/// 1 on set equality, else the F1 of precision and recall over the option sets.
/// Throws Error(EmptyGold).
double multichoice_f1(const std::set<std::string>& pred, const std::set<std::string>& gold);

/// Option ids named in a selection: upper-case tokens of one or two letters.
std::set<std::string> extract_options(std::string_view text);

/// Zero on a tool mismatch, else the fraction of gold parameters matched.
/// Free-text parameters match after lowercasing and whitespace normalisation.
double expert_accuracy(const ToolCall& call, const ToolCall& gold, const ToolRegistry& registry);

/// Inclusive band 0.5|ref| <= |z| <= 1.5|ref| over evaluation tokens.
/// Throws Error(EmptyReference).
int length_reward(std::string_view z, std::string_view ref);

struct AgentWeights {
  std::vector<std::string> names;
  std::vector<double> values;
};

struct RewardWeights {
  AgentWeights planner{{"Pf", "Pacc"}, {0.5, 0.5}};
  AgentWeights expert{{"Ef", "Eacc"}, {0.5, 0.5}};
  AgentWeights solver{{"Sf", "Slen", "Sacc"}, {0.2, 0.2, 0.6}};
  AgentWeights critic{{"Cf", "Cacc"}, {0.5, 0.5}};

  const AgentWeights& of(Agent a) const;
  /// Throws Error(InvalidConfig) unless every agent's weights are non-negative and sum to 1.
  void validate() const;
};

RewardWeights reward_weights_from_json(const Json& j);
Json to_json(const RewardWeights& w);

struct RewardBreakdown {
  Agent agent = Agent::solver;
  std::vector<std::string> names;
  std::vector<double> components;
  std::vector<double> weights;
  double total = 0.0;
};

Json to_json(const RewardBreakdown& b);

/// Weighted sum of the components. Throws Error(InvalidArgument) on a length mismatch.
RewardBreakdown combine(Agent agent, const AgentWeights& w, std::vector<double> components);

/// Text the length and semantic terms score: the answer tag when present, else the raw text.
std::string answer_text(std::string_view z);

RewardBreakdown solver_reward(std::string_view z, std::string_view ref, const RewardWeights& w, Embedder& embedder);

/// Selected options are read from the primary tag (plan for the planner,
/// feedback for the critic). Unparseable outputs score 0 on accuracy as well.
RewardBreakdown planner_reward(std::string_view z, const std::set<std::string>& gold, const RewardWeights& w);
RewardBreakdown critic_reward(std::string_view z, const std::set<std::string>& gold, const RewardWeights& w);

/// Tool call carried by an expert response, if any.
std::optional<ToolCall> parse_expert_call(std::string_view z);

RewardBreakdown expert_reward(std::string_view z, const ToolCall& gold, const ToolRegistry& registry,
                              const RewardWeights& w);

/// (r - mean) / (population std + eps). Throws Error(GroupTooSmall) when K < 2.
std::vector<double> group_advantages(const std::vector<double>& rewards, double eps = 1e-8);

struct PreferenceCandidate {
  std::string id;
  std::string text;
  Json provenance = Json::object();
};

struct PreferenceVerdict {
  std::string id;
  bool kept = false;
  bool failed = false;
  std::string error;
  std::optional<DeltaReport> deltas;
};

struct PreferenceOutcome {
  std::vector<PreferenceCandidate> kept;
  std::vector<PreferenceVerdict> verdicts;
  std::size_t failed = 0;
};

/// Runs one candidate end to end and returns its corpus aggregates.
using CandidateRunner = std::function<Aggregates(const PreferenceCandidate&)>;

/// Keeps a candidate only when S_Lex, S_Sem and S_Avg all strictly improve on
/// the baseline. Candidates whose run throws are dropped and counted.
PreferenceOutcome preference_filter(const std::vector<PreferenceCandidate>& candidates, const CandidateRunner& run,
                                    const Aggregates& baseline);

struct PreferenceOption {
  std::string id;
  std::string text;
};

struct PreferenceRecord {
  std::string prompt;
  std::vector<PreferenceOption> options;
  std::vector<std::string> gold_option_ids;
  Json provenance = Json::object();
};

Json to_json(const PreferenceRecord& r);

/// Letters options A, B, ... in a seeded order over baseline and kept
/// reference candidates; the kept ones are the gold ids.
PreferenceRecord build_preference_record(std::string prompt, const std::vector<PreferenceCandidate>& baseline,
                                         const std::vector<PreferenceCandidate>& kept, std::uint64_t seed,
                                         Json provenance = Json::object());

/// Selection prompt for planner or critic preference items.
std::string selection_prompt(Agent agent, std::string_view task, const std::vector<PreferenceOption>& options);

}  // namespace sciana
