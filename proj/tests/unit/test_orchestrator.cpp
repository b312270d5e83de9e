#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "scenarios.hpp"
#include "sciana/orchestrator.hpp"

namespace sciana {
namespace {

using test::Fault;
using test::Scenario;

int calls_of(const AgentTranscript& t, Agent a) {
  int n = 0;
  for (const auto& c : t.calls) n += c.agent == a;
  return n;
}

std::size_t count_of(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

// One scripted backend shared by every agent, answering from a queue.
struct Scripted {
  std::shared_ptr<ScriptedChatBackend> backend = std::make_shared<ScriptedChatBackend>();
  PipelineEnv env;
  PipelineConfig cfg;

  explicit Scripted(Variant v = Variant::anagent_critic) {
    env.clients.fallback = std::make_shared<ChatClient>(backend, RetryPolicy{0, 0.0, 1.0});
    cfg.variant = v;
    cfg.stages = stages_for(v);
    cfg.attach_images = false;
  }
};

TEST(ScenarioMatrix, FiftyCasesAllSound) {
  const auto matrix = test::scenario_matrix();
  ASSERT_EQ(matrix.size(), 50u);
  for (const auto& s : matrix) {
    const auto run = test::run_scenario(s);
    EXPECT_LE(run.transcript.model_call_count, 9) << s.name();
    EXPECT_TRUE(test::check_run(run).empty()) << s.name() << ": " << test::check_run(run).front();
  }
}

TEST(ScenarioMatrix, HappyPathShape) {
  const auto run = test::run_scenario({Variant::anagent_critic, Fault::none});
  const auto& t = run.transcript;
  EXPECT_EQ(calls_of(t, Agent::planner), 1);
  EXPECT_EQ(calls_of(t, Agent::expert), 2);
  EXPECT_EQ(calls_of(t, Agent::solver), 1);
  EXPECT_EQ(calls_of(t, Agent::critic), 1);
  ASSERT_EQ(t.critiques.size(), 1u);
  EXPECT_TRUE(t.critiques[0].perfect());
  EXPECT_EQ(t.plan.subtasks.size(), 2u);
  ASSERT_EQ(t.expert_turns.size(), 2u);
  ASSERT_TRUE(t.expert_turns[0].result.has_value());
  EXPECT_EQ(t.expert_turns[0].result->status, ToolStatus::ok);
  EXPECT_TRUE(t.failures.empty());
}

TEST(ScenarioMatrix, ExhaustionSpendsEveryTurn) {
  const auto run = test::run_scenario({Variant::anagent_critic, Fault::exhaustion});
  const auto& t = run.transcript;
  EXPECT_EQ(calls_of(t, Agent::expert), 5);
  EXPECT_EQ(t.model_call_count, 9);
  ASSERT_EQ(t.expert_turns.size(), 5u);
  EXPECT_TRUE(t.expert_turns.back().forced_summary);
  ASSERT_TRUE(t.knowledge.summary.has_value());
  EXPECT_NE(t.knowledge.summary->find("forced summary"), std::string::npos);
  // The forced summary is a second request inside the fifth call.
  EXPECT_EQ(run.backend_requests.at(Agent::expert), 6u);
}

TEST(ScenarioMatrix, ForcedSummaryAsSeparateCall) {
  Scenario s{Variant::anagent_critic, Fault::exhaustion, true};
  const auto run = test::run_scenario(s);
  EXPECT_EQ(calls_of(run.transcript, Agent::expert), 6);
  EXPECT_EQ(run.transcript.model_call_count, 10);
  EXPECT_EQ(run.cfg.call_budget(), 10);
  EXPECT_TRUE(test::check_run(run).empty());
}

TEST(ScenarioMatrix, VariantStagePresence) {
  struct Want {
    Variant v;
    bool planner, expert, critic;
  };
  for (const auto& w : {Want{Variant::baseline, false, false, false}, Want{Variant::omnion, false, false, false},
                        Want{Variant::symnion, false, true, false}, Want{Variant::anagent, true, true, false},
                        Want{Variant::anagent_critic, true, true, true}}) {
    const auto t = test::run_scenario({w.v, Fault::revision}).transcript;
    EXPECT_EQ(calls_of(t, Agent::planner) > 0, w.planner) << to_string(w.v);
    EXPECT_EQ(calls_of(t, Agent::expert) > 0, w.expert) << to_string(w.v);
    EXPECT_EQ(calls_of(t, Agent::critic) > 0, w.critic) << to_string(w.v);
    EXPECT_EQ(t.solutions.size(), w.critic ? 2u : 1u) << to_string(w.v);
  }
}

TEST(ScenarioMatrix, OmnionToolTurnsGoThroughTheSolver) {
  const auto t = test::run_scenario({Variant::omnion, Fault::exhaustion}).transcript;
  EXPECT_TRUE(t.expert_turns.empty());
  EXPECT_TRUE(t.plan.subtasks.empty());
  EXPECT_EQ(calls_of(t, Agent::solver), 6);
  EXPECT_LE(t.model_call_count, PipelineConfig{}.M_e + PipelineConfig{}.M_s);
  EXPECT_TRUE(t.solution_parsed.front());
}

TEST(ScenarioMatrix, ToolFailuresBecomeKnowledgeErrors) {
  const auto schema = test::run_scenario({Variant::symnion, Fault::tool_schema}).transcript;
  ASSERT_FALSE(schema.expert_turns.empty());
  ASSERT_TRUE(schema.expert_turns[0].violation.has_value());
  EXPECT_EQ(schema.expert_turns[0].violation->kind, "unknown_tool");
  EXPECT_TRUE(schema.knowledge.entries[0].error);

  const auto web = test::run_scenario({Variant::symnion, Fault::tool_error}).transcript;
  ASSERT_TRUE(web.expert_turns[0].result.has_value());
  EXPECT_EQ(web.expert_turns[0].result->status, ToolStatus::error);
  EXPECT_TRUE(web.knowledge.summary.has_value());
}

TEST(ScenarioMatrix, TagFailuresDegradeGracefully) {
  const auto p = test::run_scenario({Variant::anagent, Fault::planner_tags}).transcript;
  EXPECT_TRUE(p.plan.failed);
  ASSERT_EQ(p.plan.subtasks.size(), 1u);
  EXPECT_EQ(p.failures.front().rfind("plan_failure", 0), 0u);

  const auto s = test::run_scenario({Variant::baseline, Fault::solver_tags}).transcript;
  EXPECT_FALSE(s.solution_parsed.front());
  EXPECT_EQ(s.final_answer, "The router is better.");

  const auto c = test::run_scenario({Variant::anagent_critic, Fault::critic_tags}).transcript;
  EXPECT_TRUE(c.critiques.empty());
  EXPECT_EQ(c.solutions.size(), 1u);
}

TEST(ScenarioMatrix, BackendErrorsAreRecordedNotFatal) {
  const auto run = test::run_scenario({Variant::anagent_critic, Fault::backend_errors});
  const auto& t = run.transcript;
  EXPECT_FALSE(t.final_answer.empty());
  EXPECT_GE(t.failures.size(), 4u);
  EXPECT_GT(t.request_count, t.model_call_count);
}

TEST(Plan, ThreeBullets) {
  Scripted s;
  s.backend->reply("<think>t</think><plan>\n* one\n* two\n* three\n</plan>");
  AgentTranscript t;
  const auto p = plan(test::table_instance(), s.cfg, s.env, t);
  EXPECT_EQ(p.subtasks, (std::vector<std::string>{"one", "two", "three"}));
  EXPECT_EQ(t.model_call_count, 1);
}

TEST(Plan, MissingPlanTwiceDegrades) {
  Scripted s;
  s.backend->reply("<think>t</think>").reply("still nothing");
  AgentTranscript t;
  const auto p = plan(test::table_instance(), s.cfg, s.env, t);
  EXPECT_TRUE(p.failed);
  EXPECT_EQ(p.subtasks.size(), 1u);
  EXPECT_EQ(t.model_call_count, 1);
  EXPECT_EQ(t.request_count, 2);
}

TEST(Plan, FewShotBlockBeforeTask) {
  Scripted s;
  s.cfg.k_shot = 1;
  s.env.exemplars.items[Agent::planner] = {"EXEMPLAR ONE", "EXEMPLAR TWO"};
  const auto inst = test::table_instance();
  const auto prompt = render_planner_prompt(inst, s.cfg, s.env);
  EXPECT_EQ(count_of(prompt, "**Example "), 1u);
  EXPECT_EQ(count_of(prompt, "EXEMPLAR ONE"), 1u);
  EXPECT_EQ(count_of(prompt, "EXEMPLAR TWO"), 0u);
  EXPECT_LT(prompt.find("EXEMPLAR ONE"), prompt.find(inst.query));
  s.cfg.k_shot = 3;
  EXPECT_THROW(render_planner_prompt(inst, s.cfg, s.env), Error);
  s.cfg.k_shot = 0;
  EXPECT_EQ(count_of(render_planner_prompt(inst, s.cfg, s.env), "**Example "), 0u);
}

TEST(Prompt, RequirementSentences) {
  Requirements r;
  r.length_target = 120;
  r.width = "internal";
  r.depth = "in-depth";
  const auto text = render_task_problem(test::table_instance(), r);
  EXPECT_NE(text.find("around 120 words"), std::string::npos);
  EXPECT_NE(text.find("width should be internal"), std::string::npos);
  EXPECT_NE(text.find("in-depth"), std::string::npos);
  EXPECT_NE(text.find("Label: tab:wer"), std::string::npos);
}

TEST(ExpertLoop, ToolThenSummary) {
  Scripted s;
  s.backend->reply(R"(<think>t</think><tool>context_finder</tool><params>{"query":"tab:wer"}</params>)")
      .reply("<think>t</think><summary>**Key Findings**: done</summary>");
  ToolExecutor exec(ToolRegistry::standard(), ToolSettings{});
  s.env.executor = &exec;
  s.env.tool_context.document = test::latex_sample();
  AgentTranscript t;
  const auto kb = expert_loop(test::table_instance(), Plan{}, s.cfg, s.env, t);
  ASSERT_EQ(t.expert_turns.size(), 2u);
  ASSERT_EQ(kb.entries.size(), 2u);
  EXPECT_EQ(kb.entries[0].source, "context_finder");
  EXPECT_FALSE(kb.entries[0].error);
  EXPECT_NE(kb.entries[0].content.find("Load-aware"), std::string::npos);
  EXPECT_EQ(kb.summary, "**Key Findings**: done");
  EXPECT_EQ(kb.at(1).size(), 1u);
  EXPECT_EQ(kb.at(2).size(), 2u);
  EXPECT_EQ(t.model_call_count, 2);
  // The second turn continues the same conversation.
  const auto second = s.backend->requests()[1];
  EXPECT_EQ(second.size(), 3u);
  EXPECT_NE(second.back().content.find("This is TURN 2."), std::string::npos);
}

TEST(ExpertLoop, InvalidParamsRecordedAndLoopContinues) {
  Scripted s;
  s.backend->reply(R"(<think>t</think><tool>arxiv_searcher</tool><params>{"query":"x","max_results":"five"}</params>)")
      .reply("<think>t</think><summary>ok</summary>");
  AgentTranscript t;
  const auto kb = expert_loop(test::table_instance(), Plan{}, s.cfg, s.env, t);
  ASSERT_EQ(t.expert_turns.size(), 2u);
  ASSERT_TRUE(t.expert_turns[0].violation.has_value());
  EXPECT_EQ(t.expert_turns[0].violation->kind, "type");
  EXPECT_TRUE(kb.entries[0].error);
  EXPECT_EQ(kb.summary, "ok");
}

TEST(ExpertLoop, ForcedSummaryAccountingBothWays) {
  for (bool extra : {false, true}) {
    Scripted s;
    s.cfg.M_e = 3;
    s.cfg.forced_summary_extra_call = extra;
    for (int i = 0; i < 3; ++i) {
      s.backend->reply(R"(<think>t</think><tool>no_such_tool</tool><params>{}</params>)");
    }
    s.backend->reply("<think>t</think><summary>forced</summary>");
    AgentTranscript t;
    const auto kb = expert_loop(test::table_instance(), Plan{}, s.cfg, s.env, t);
    EXPECT_EQ(kb.summary, "forced");
    EXPECT_EQ(t.model_call_count, extra ? 4 : 3);
    EXPECT_EQ(t.request_count, 4);
    EXPECT_TRUE(t.expert_turns.back().forced_summary);
  }
}

TEST(Solve, ScriptedAnswer) {
  Scripted s;
  s.backend->reply("<think>t</think><answer>A</answer>");
  AgentTranscript t;
  int budget = 0;
  const auto y = solve(test::table_instance(), Plan{}, KnowledgeBase{}, std::nullopt, s.cfg, s.env, t, budget);
  EXPECT_EQ(y.text, "A");
  EXPECT_TRUE(y.parsed);
}

TEST(Solve, MissingAnswerTwiceReturnsRaw) {
  Scripted s;
  s.backend->reply("draft one").reply("draft two");
  AgentTranscript t;
  int budget = 0;
  const auto y = solve(test::table_instance(), Plan{}, KnowledgeBase{}, std::nullopt, s.cfg, s.env, t, budget);
  EXPECT_FALSE(y.parsed);
  EXPECT_EQ(y.text, "draft two");
  EXPECT_EQ(t.model_call_count, 1);
}

TEST(Solve, FeedbackBlockVerbatim) {
  Scripted s;
  const std::string fb = "Mention Quechua; cite Table~\\ref{tab:wer} {exactly}.";
  const auto prompt =
      render_solver_prompt(test::table_instance(), Plan{}, KnowledgeBase{}, fb, s.cfg, s.env, 0);
  EXPECT_NE(prompt.find(feedback_block(fb)), std::string::npos);
  EXPECT_NE(prompt.find(fb), std::string::npos);
  const auto none = render_solver_prompt(test::table_instance(), Plan{}, KnowledgeBase{}, std::nullopt, s.cfg, s.env, 0);
  EXPECT_EQ(none.find("**Critic Feedback"), std::string::npos);
}

const char* const kImperfect =
    "<think>c</think><accuracy>2</accuracy><completeness>1</completeness><format>2</format><writing>2</writing>"
    "<faithfulness>1</faithfulness><feedback>Discuss Quechua.</feedback>";

TEST(Critique, ClampsOutOfRangeGrades) {
  Scripted s;
  s.backend->reply("<think>c</think><accuracy>3</accuracy><completeness>1</completeness><format>2</format>"
                   "<writing>2</writing><faithfulness>1</faithfulness><feedback>f</feedback>");
  AgentTranscript t;
  const auto r = critique("y", test::table_instance(), Plan{}, KnowledgeBase{}, s.cfg, s.env, t);
  ASSERT_TRUE(r.has_value());
  EXPECT_EQ(r->grades[0], 2);
  EXPECT_TRUE(r->clamped[0]);
  EXPECT_FALSE(r->clamped[1]);
}

TEST(Critique, FeedbackTruncatedByCharacters) {
  Scripted s;
  s.cfg.feedback_limit = 4;
  s.backend->reply("<think>c</think><accuracy>1</accuracy><completeness>1</completeness><format>2</format>"
                   "<writing>2</writing><faithfulness>1</faithfulness><feedback>ééééé</feedback>");
  AgentTranscript t;
  const auto r = critique("y", test::table_instance(), Plan{}, KnowledgeBase{}, s.cfg, s.env, t);
  ASSERT_TRUE(r.has_value());
  EXPECT_TRUE(r->feedback_truncated);
  EXPECT_EQ(r->feedback, "éééé");
}

TEST(Pipeline, PerfectGradesStopEarly) {
  Scripted s;
  s.backend->reply("<think>t</think><plan>* a</plan>")
      .reply("<think>t</think><summary>k</summary>")
      .reply("<think>t</think><answer>first</answer>")
      .reply("<think>c</think><accuracy>2</accuracy><completeness>2</completeness><format>2</format>"
             "<writing>2</writing><faithfulness>2</faithfulness><feedback>none</feedback>");
  const auto t = run_pipeline(test::table_instance(), s.cfg, s.env);
  EXPECT_EQ(t.solutions.size(), 1u);
  EXPECT_EQ(t.final_answer, "first");
  EXPECT_EQ(t.model_call_count, 4);
}

TEST(Pipeline, FeedbackForwardedToSecondSolve) {
  Scripted s;
  s.backend->reply("<think>t</think><plan>* a</plan>")
      .reply("<think>t</think><summary>k</summary>")
      .reply("<think>t</think><answer>first</answer>")
      .reply(kImperfect)
      .reply("<think>t</think><answer>second</answer>");
  const auto t = run_pipeline(test::table_instance(), s.cfg, s.env);
  ASSERT_EQ(t.solutions.size(), 2u);
  EXPECT_EQ(t.final_answer, "second");
  ASSERT_EQ(t.critiques.size(), 1u);
  EXPECT_EQ(t.critiques[0].grades, (std::array<int, 5>{2, 1, 2, 2, 1}));
  const auto last = s.backend->requests().back().front().content;
  EXPECT_NE(last.find(feedback_block("Discuss Quechua.")), std::string::npos);
  EXPECT_EQ(last.find("first"), std::string::npos);
}

TEST(Pipeline, CriticDisabledMeansOneSolve) {
  Scripted s(Variant::anagent);
  s.backend->respond_with(mock_reply);
  const auto t = run_pipeline(test::table_instance(), s.cfg, s.env);
  EXPECT_EQ(t.solutions.size(), 1u);
  EXPECT_TRUE(t.critiques.empty());
  Scripted c;
  c.cfg.M_c = 0;
  c.cfg.stages.critic = true;
  c.backend->respond_with(mock_reply);
  EXPECT_EQ(run_pipeline(test::table_instance(), c.cfg, c.env).solutions.size(), 1u);
}

TEST(Pipeline, OverridesForPreferenceRuns) {
  Scripted s;
  s.backend->respond_with(mock_reply);
  s.env.plan_override = std::vector<std::string>{"use this plan"};
  s.env.feedback_override = "substituted feedback";
  const auto t = run_pipeline(test::table_instance(), s.cfg, s.env);
  EXPECT_EQ(calls_of(t, Agent::planner), 0);
  EXPECT_EQ(t.plan.subtasks, (std::vector<std::string>{"use this plan"}));
  ASSERT_EQ(t.critiques.size(), 1u);
  EXPECT_TRUE(t.critiques[0].substituted);
  EXPECT_EQ(t.solutions.size(), 2u);
}

TEST(Pipeline, BackendUnavailableEscapes) {
  Scripted s;
  s.backend->fault(ErrorCode::TransientFailure);
  try {
    run_pipeline(test::table_instance(), s.cfg, s.env);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BackendUnavailable);
  }
}

TEST(Pipeline, MockClientIsDeterministic) {
  PipelineConfig cfg;
  cfg.attach_images = false;
  PipelineEnv env;
  env.clients.fallback = make_mock_client();
  const auto a = to_json(run_pipeline(test::table_instance(), cfg, env));
  const auto b = to_json(run_pipeline(test::table_instance(), cfg, env));
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_LE(a["model_call_count"].get<int>(), cfg.call_budget());
}

TEST(Transcript, JsonRoundTrip) {
  const auto run = test::run_scenario({Variant::anagent_critic, Fault::revision});
  const auto j = to_json(run.transcript);
  EXPECT_EQ(to_json(transcript_from_json(j)).dump(), j.dump());
}

TEST(PipelineConfig, JsonAndValidation) {
  const auto c = pipeline_config_from_json(
      Json{{"variant", "anagent"}, {"turns", {{"planner", 2}, {"expert", 4}}}, {"k_shot", 1}});
  EXPECT_EQ(c.M_p, 2);
  EXPECT_EQ(c.M_e, 4);
  EXPECT_FALSE(c.stages.critic);
  EXPECT_EQ(c.call_budget(), 2 + 4 + 2);
  EXPECT_EQ(pipeline_config_from_json(to_json(c)).M_e, 4);
  EXPECT_THROW(pipeline_config_from_json(Json{{"variant", "nope"}}), Error);
  EXPECT_THROW(pipeline_config_from_json(Json{{"turns", {{"solver", 0}}}}), Error);
  EXPECT_THROW(pipeline_config_from_json(Json{{"variant", "anagent"}, {"stages", {{"critic", true}}}}), Error);
  EXPECT_THROW(pipeline_config_from_json(Json{{"requirements", {{"width", "wide"}}}}), Error);
  EXPECT_EQ(PipelineConfig{}.call_budget(), 9);
}

TEST(ExemplarPool, LoadsJsonl) {
  const auto dir = test::fresh_dir("exemplars");
  const auto path = (dir / "pool.jsonl").string();
  std::ofstream(path) << R"({"agent":"planner","text":"p1"})" << "\n\n" << R"({"agent":"critic","text":"c1"})" << "\n";
  const auto pool = ExemplarPool::load(path);
  EXPECT_EQ(pool.items.at(Agent::planner), (std::vector<std::string>{"p1"}));
  EXPECT_EQ(pool.items.at(Agent::critic).size(), 1u);
  std::ofstream(path) << "{broken\n";
  EXPECT_THROW(ExemplarPool::load(path), Error);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace sciana
