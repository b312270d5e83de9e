#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sciana/corpus.hpp"
#include "sciana/gateway.hpp"
#include "sciana/prompts.hpp"
#include "sciana/rewards.hpp"
#include "sciana/tools.hpp"

namespace sciana {

enum class Variant { baseline, omnion, symnion, anagent, anagent_critic, custom };
std::string_view to_string(Variant v) noexcept;
Variant parse_variant(std::string_view s);

struct Requirements {
  std::optional<std::size_t> length_target;
  // self-contained | internal | external | mixed
  std::optional<std::string> width;
  // shallow | in-depth
  std::optional<std::string> depth;

  bool empty() const noexcept { return !length_target && !width && !depth; }
};

/// Few-shot exemplars per agent, used in pool order.
struct ExemplarPool {
  std::map<Agent, std::vector<std::string>> items;

  /// JSONL lines of {"agent": ..., "text": ...}.
  static ExemplarPool load(const std::string& path);
};

struct StageSwitches {
  bool planner = true;
  bool expert = true;
  bool critic = true;
  // Hands the tool catalogue to the Solver instead of the Expert.
  bool solver_tools = false;
};

StageSwitches stages_for(Variant v);

struct PipelineConfig {
  int M_p = 1;
  int M_e = 5;
  int M_s = 2;
  int M_c = 1;
  Variant variant = Variant::anagent_critic;
  StageSwitches stages;
  std::map<Agent, BackendSpec> backends;
  std::size_t k_shot = 0;
  std::string exemplar_path;
  Requirements requirements;
  std::size_t plan_limit = 1000;
  std::size_t summary_len = 2000;
  std::size_t feedback_limit = 1000;
  std::string summary_structure =
      "**Key Findings**: ...\n**Relevant Contexts**: ...\n**Domain Knowledge**: ...\n**References**: ...";
  // Empty lists the whole registry.
  std::vector<std::string> tools;
  // When true the forced summary after the last Expert turn is counted as its own call.
  bool forced_summary_extra_call = false;
  bool attach_images = true;
  ChatParams chat;

  /// Throws Error(InvalidConfig).
  void validate() const;
  /// Upper bound on model_call_count for the active stages.
  int call_budget() const;
};

PipelineConfig pipeline_config_from_json(const Json& j);
Json to_json(const PipelineConfig& c);

struct Plan {
  std::vector<std::string> subtasks;
  std::string raw_think;
  bool failed = false;
  std::string error;

  std::string render() const;
};

struct KnowledgeEntry {
  int turn = 0;
  // Tool name, "summary", or "format" for unparseable turns.
  std::string source;
  std::string content;
  bool error = false;
};

struct KnowledgeBase {
  std::vector<KnowledgeEntry> entries;
  std::optional<std::string> summary;

  /// Entries recorded at or before `turn`.
  std::vector<KnowledgeEntry> at(int turn) const;
  /// Text handed to the Solver and Critic.
  std::string render() const;
};

struct ExpertTurn {
  int turn = 0;
  std::optional<ToolCall> call;
  std::optional<ToolResult> result;
  std::optional<SchemaViolation> violation;
  std::string text;
  bool repaired = false;
  bool forced_summary = false;
  std::size_t knowledge_size = 0;
};

struct CritiqueReport {
  std::array<int, 5> grades{};
  std::array<bool, 5> clamped{};
  std::string feedback;
  std::string raw_think;
  bool feedback_truncated = false;
  // Feedback came from feedback_override rather than the Critic.
  bool substituted = false;

  bool perfect() const noexcept;
};

struct SolveAttempt {
  std::string text;
  bool parsed = true;
  bool repaired = false;
  int tool_turns = 0;
};

struct CallRecord {
  Agent agent = Agent::solver;
  // Requests sent for this counted call: 1, plus a repair or forced follow-up.
  int requests = 1;
  std::string prompt_sha256;
  std::vector<std::string> replies;
};

struct AgentTranscript {
  std::string instance_id;
  Variant variant = Variant::anagent_critic;
  Plan plan;
  std::vector<ExpertTurn> expert_turns;
  KnowledgeBase knowledge;
  std::vector<std::string> solutions;
  std::vector<bool> solution_parsed;
  std::vector<CritiqueReport> critiques;
  std::vector<std::string> failures;
  std::string final_answer;
  int model_call_count = 0;
  int request_count = 0;
  std::vector<CallRecord> calls;
};

Json to_json(const AgentTranscript& t);
AgentTranscript transcript_from_json(const Json& j);

/// Chat clients per agent. Agents without a client fall back to `fallback`.
struct AgentClients {
  std::map<Agent, std::shared_ptr<ChatClient>> by_agent;
  std::shared_ptr<ChatClient> fallback;

  ChatClient& of(Agent a) const;
};

struct PipelineEnv {
  AgentClients clients;
  PromptSet prompts = PromptSet::builtin();
  ExemplarPool exemplars;
  ToolExecutor* executor = nullptr;
  ToolContext tool_context;
  // Directory that instance image_ref paths resolve against.
  std::string image_dir = ".";
  // Candidate substitution for preference filtering: replaces the Planner
  // output, or the feedback of the first critique.
  std::optional<std::vector<std::string>> plan_override;
  std::optional<std::string> feedback_override;
};

/// Query, requirement sentences and serialized inputs.
std::string render_task_problem(const AnalysisInstance& inst, const Requirements& req);
std::string requirement_sentences(const Requirements& req);
std::string render_few_shot(const ExemplarPool& pool, Agent agent, std::size_t k);
std::string feedback_block(const std::string& feedback);

std::string render_planner_prompt(const AnalysisInstance& inst, const PipelineConfig& cfg, const PipelineEnv& env);
std::string render_expert_prompt(const AnalysisInstance& inst, const Plan& plan, const PipelineConfig& cfg,
                                 const PipelineEnv& env, int turn);
std::string render_solver_prompt(const AnalysisInstance& inst, const Plan& plan, const KnowledgeBase& kb,
                                 const std::optional<std::string>& feedback, const PipelineConfig& cfg,
                                 const PipelineEnv& env, int tool_turns_left);
std::string render_critic_prompt(const AnalysisInstance& inst, const Plan& plan, const KnowledgeBase& kb,
                                 const std::string& solution, const PipelineConfig& cfg, const PipelineEnv& env);

/// Stage functions append to `t` and account for calls. Only BackendUnavailable escapes.
Plan plan(const AnalysisInstance& inst, const PipelineConfig& cfg, const PipelineEnv& env, AgentTranscript& t);
KnowledgeBase expert_loop(const AnalysisInstance& inst, const Plan& plan, const PipelineConfig& cfg,
                          const PipelineEnv& env, AgentTranscript& t);
SolveAttempt solve(const AnalysisInstance& inst, const Plan& plan, const KnowledgeBase& kb,
                   const std::optional<std::string>& feedback, const PipelineConfig& cfg, const PipelineEnv& env,
                   AgentTranscript& t, int& tool_budget);
std::optional<CritiqueReport> critique(const std::string& solution, const AnalysisInstance& inst, const Plan& plan,
                                       const KnowledgeBase& kb, const PipelineConfig& cfg, const PipelineEnv& env,
                                       AgentTranscript& t);

AgentTranscript run_pipeline(const AnalysisInstance& inst, const PipelineConfig& cfg, const PipelineEnv& env);

/// Deterministic offline stand-in for every agent, the judge and the label prompts.
/// Replies are well-formed and derived from the request text alone.
std::string mock_reply(const std::vector<ChatTurn>& turns);
std::shared_ptr<ChatClient> make_mock_client();

}  // namespace sciana
