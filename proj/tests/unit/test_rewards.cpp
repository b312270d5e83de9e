#include <gtest/gtest.h>

#include <random>

#include "sciana/rewards.hpp"

namespace sciana {
namespace {

const char* const kCritic =
    "<think>t</think><accuracy>2</accuracy><completeness>1</completeness><format>2</format><writing>2</writing>"
    "<faithfulness>1</faithfulness><feedback>A, C</feedback>";

TEST(FormatReward, PerAgentTagSets) {
  EXPECT_EQ(format_reward("<think>a</think><plan>* x</plan>", Agent::planner), 1);
  EXPECT_EQ(format_reward("<think>a</think>* x", Agent::planner), 0);
  EXPECT_EQ(format_reward(kCritic, Agent::critic), 1);
  EXPECT_EQ(format_reward("<think>t</think><accuracy>two</accuracy><completeness>1</completeness><format>2</format>"
                          "<writing>2</writing><faithfulness>1</faithfulness><feedback>A</feedback>",
                          Agent::critic),
            0);
  EXPECT_EQ(format_reward("<think>a</think><answer>b</answer>", Agent::solver), 1);
  EXPECT_EQ(format_reward("<think>a</think><answer>b", Agent::solver), 0);
}

TEST(FormatReward, ExpertCallOrSummary) {
  EXPECT_EQ(format_reward("<think>a</think><summary>s</summary>", Agent::expert), 1);
  EXPECT_EQ(format_reward(R"(<think>a</think><tool>arxiv_searcher</tool><params>{"query":"x"}</params>)", Agent::expert),
            1);
  EXPECT_EQ(format_reward("<think>a</think><tool>arxiv_searcher</tool><params>not json</params>", Agent::expert), 0);
  EXPECT_EQ(format_reward("<think>a</think>", Agent::expert), 0);
}

TEST(MultichoiceF1, Examples) {
  EXPECT_EQ(multichoice_f1({"A", "B"}, {"A", "B"}), 1.0);
  EXPECT_NEAR(multichoice_f1({"A", "B", "D"}, {"A", "B", "C"}), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(multichoice_f1({"A"}, {"A", "B"}), 2.0 / 3.0, 1e-12);
  EXPECT_EQ(multichoice_f1({}, {"A"}), 0.0);
  EXPECT_EQ(multichoice_f1({"C"}, {"A"}), 0.0);
  try {
    multichoice_f1({"A"}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyGold);
  }
}

TEST(ExtractOptions, UppercaseLettersOnly) {
  EXPECT_EQ(extract_options("A, C and AB; not abc or ABC"), (std::set<std::string>{"A", "C", "AB"}));
  EXPECT_TRUE(extract_options("none selected").empty());
}

TEST(ExpertAccuracy, ToolMismatchAndParamFraction) {
  const auto reg = ToolRegistry::standard();
  ToolCall gold{"arxiv_searcher", {{"query", "Graph  Neural"}, {"max_results", 5}}, 1};
  EXPECT_EQ(expert_accuracy({"pubmed_searcher", gold.params, 1}, gold, *reg), 0.0);
  EXPECT_EQ(expert_accuracy({"arxiv_searcher", {{"query", "graph neural"}, {"max_results", 5.0}}, 1}, gold, *reg), 1.0);
  EXPECT_EQ(expert_accuracy({"arxiv_searcher", {{"query", "graph neural"}}, 1}, gold, *reg), 0.5);
}

TEST(ExpertAccuracy, TwoOfFourParams) {
  const auto reg = ToolRegistry::standard();
  ToolCall gold{"web_searcher",
                {{"query", "q"}, {"max_results", 3}, {"date_restrict", "y1"}, {"search_level", "basic"}},
                1};
  ToolCall got{"web_searcher", {{"query", "Q"}, {"max_results", 3}, {"date_restrict", "m6"}}, 1};
  EXPECT_DOUBLE_EQ(expert_accuracy(got, gold, *reg), 0.5);
}

TEST(ExpertReward, InvalidCallHasNoFormatCredit) {
  const auto reg = ToolRegistry::standard();
  ToolCall gold{"arxiv_searcher", {{"query", "graph"}}, 1};
  const auto ok = expert_reward(R"(<think>t</think><tool>arxiv_searcher</tool><params>{"query":"graph"}</params>)",
                                gold, *reg, RewardWeights{});
  EXPECT_DOUBLE_EQ(ok.total, 1.0);
  const auto bad = expert_reward(
      R"(<think>t</think><tool>arxiv_searcher</tool><params>{"query":"graph","max_results":"five"}</params>)", gold,
      *reg, RewardWeights{});
  EXPECT_EQ(bad.components[0], 0.0);
  EXPECT_EQ(bad.components[1], 1.0);
}

std::string words(std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += "w" + std::to_string(i) + " ";
  return s;
}

TEST(LengthReward, InclusiveBand) {
  EXPECT_EQ(length_reward(words(50), words(100)), 1);
  EXPECT_EQ(length_reward(words(49), words(100)), 0);
  EXPECT_EQ(length_reward(words(150), words(100)), 1);
  EXPECT_EQ(length_reward(words(151), words(100)), 0);
  try {
    length_reward("x", "   ");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyReference);
  }
}

TEST(SolverReward, IdentityScoresOne) {
  HashStubEmbedder e(32, 1);
  const std::string z = "<think>t</think><answer>the router lowers error on every language</answer>";
  const auto b = solver_reward(z, z, RewardWeights{}, e);
  EXPECT_EQ(b.components, (std::vector<double>{1, 1, 1}));
  EXPECT_DOUBLE_EQ(b.total, 1.0);
}

TEST(SolverReward, UntaggedLosesFormatOnly) {
  HashStubEmbedder e(32, 1);
  const std::string ref = "the router lowers error on every language";
  const auto b = solver_reward(ref, ref, RewardWeights{}, e);
  EXPECT_EQ(b.components[0], 0.0);
  EXPECT_NEAR(b.total, 0.2 * 1 + 0.6 * 1, 1e-12);
}

TEST(SolverReward, DisjointOrthogonalTokens) {
  TableEmbedder e({{"a", {1, 0, 0, 0}}, {"b", {0, 1, 0, 0}}, {"c", {0, 0, 1, 0}}, {"d", {0, 0, 0, 1}}}, 4);
  const auto b = solver_reward("<think>t</think><answer>c d</answer>", "a b", RewardWeights{}, e);
  EXPECT_EQ(b.components, (std::vector<double>{1, 1, 0}));
  EXPECT_NEAR(b.total, 0.2 + 0.2, 1e-12);
}

TEST(SelectionReward, PlannerAndCritic) {
  RewardWeights w;
  EXPECT_DOUBLE_EQ(planner_reward("<think>t</think><plan>A, B</plan>", {"A", "B"}, w).total, 1.0);
  EXPECT_NEAR(planner_reward("<think>t</think><plan>A B D</plan>", {"A", "B", "C"}, w).total, 0.5 + 0.5 * 2.0 / 3.0,
              1e-12);
  EXPECT_EQ(planner_reward("A B", {"A", "B"}, w).total, 0.0);
  EXPECT_NEAR(critic_reward(kCritic, {"A", "C"}, w).total, 1.0, 1e-12);
}

TEST(RewardWeights, ValidateAndJson) {
  RewardWeights w;
  EXPECT_NO_THROW(w.validate());
  const auto back = reward_weights_from_json(to_json(w));
  EXPECT_EQ(back.solver.values, w.solver.values);
  EXPECT_THROW(reward_weights_from_json(Json{{"solver", {{"Sf", 0.5}}}}), Error);
  RewardWeights neg;
  neg.planner.values = {1.5, -0.5};
  EXPECT_THROW(neg.validate(), Error);
}

TEST(Combine, LengthMismatchThrows) {
  EXPECT_THROW(combine(Agent::planner, RewardWeights{}.planner, {1.0}), Error);
}

TEST(GroupAdvantages, Examples) {
  const auto a = group_advantages({1, 2, 3});
  EXPECT_NEAR(a[0], -1.2247, 1e-4);
  EXPECT_NEAR(a[1], 0.0, 1e-12);
  EXPECT_NEAR(a[2], 1.2247, 1e-4);
  for (double x : group_advantages({0.4, 0.4, 0.4})) EXPECT_EQ(x, 0.0);
  const auto b = group_advantages({0, 1});
  EXPECT_NEAR(b[0], -1.0, 1e-7);
  EXPECT_NEAR(b[1], 1.0, 1e-7);
  try {
    group_advantages({1.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::GroupTooSmall);
  }
}

TEST(GroupAdvantages, ShiftAndScaleInvariant) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int g = 0; g < 100; ++g) {
    std::vector<double> r(8);
    for (auto& x : r) x = u(rng);
    r[0] = 0.0;
    r[1] = 1.0;
    auto s = r;
    for (auto& x : s) x = 3.0 * x - 7.0;
    const auto a = group_advantages(r), b = group_advantages(s);
    double mean = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      EXPECT_NEAR(a[i], b[i], 1e-6);
      mean += a[i];
    }
    EXPECT_NEAR(mean / 8.0, 0.0, 1e-9);
  }
}

TEST(PreferenceFilter, StrictImprovementOnAllThree) {
  const Aggregates base{{}, 10.0, 40.0, 25.0};
  const std::map<std::string, Aggregates> reports = {
      {"up", {{}, 11.0, 41.0, 26.0}}, {"avg_equal", {{}, 11.0, 39.0, 25.0}}, {"lex_down", {{}, 9.0, 45.0, 27.0}}};
  std::vector<PreferenceCandidate> cands;
  for (const auto& [id, _] : reports) cands.push_back({id, "text " + id, Json::object()});
  cands.push_back({"boom", "x", Json::object()});
  const auto out = preference_filter(
      cands,
      [&](const PreferenceCandidate& c) {
        if (c.id == "boom") throw Error(ErrorCode::BackendUnavailable, "down");
        return reports.at(c.id);
      },
      base);
  ASSERT_EQ(out.kept.size(), 1u);
  EXPECT_EQ(out.kept[0].id, "up");
  EXPECT_EQ(out.failed, 1u);
  EXPECT_EQ(out.verdicts.size(), 4u);
}

TEST(PreferenceRecord, SeededLetteringAndGoldIds) {
  const std::vector<PreferenceCandidate> base = {{"b1", "plan one", {}}, {"b2", "plan two", {}}};
  const std::vector<PreferenceCandidate> kept = {{"r1", "better plan", {}}};
  const auto r1 = build_preference_record("task", base, kept, 7);
  const auto r2 = build_preference_record("task", base, kept, 7);
  EXPECT_EQ(to_json(r1), to_json(r2));
  ASSERT_EQ(r1.options.size(), 3u);
  EXPECT_EQ(r1.options[0].id, "A");
  EXPECT_EQ(r1.options[2].id, "C");
  ASSERT_EQ(r1.gold_option_ids.size(), 1u);
  const auto& gid = r1.gold_option_ids[0];
  for (const auto& o : r1.options) {
    if (o.id == gid) {
      EXPECT_EQ(o.text, "better plan");
    }
  }
  EXPECT_EQ(r1.provenance["options"][gid]["role"], "reference");
}

TEST(SelectionPrompt, ListsOptionsAndTags) {
  const auto p = selection_prompt(Agent::planner, "Analyse Table 1.", {{"A", "plan a"}, {"B", "plan b"}});
  EXPECT_NE(p.find("(A)\nplan a"), std::string::npos);
  EXPECT_NE(p.find("<plan>"), std::string::npos);
  const auto c = selection_prompt(Agent::critic, "Analyse Table 1.", {{"A", "critique a"}});
  EXPECT_NE(c.find("<feedback>"), std::string::npos);
}

}  // namespace
}  // namespace sciana
