#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "sciana/evaluation.hpp"
#include "sciana/prompts.hpp"

namespace sciana {
namespace {

MetricVector uniform(double v) {
  MetricVector m;
  m.rouge_l = m.bleu = m.word_overlap = m.cosine = m.embedding_f1 = m.meteor = v;
  return m;
}

TEST(AggregateMeans, BaselineRow) {
  const auto a = aggregate_means({56.34, 59.74, 19.47, 16.74, 3.39, 11.49});
  EXPECT_NEAR(a.s_sem, 45.18, 0.01);
  EXPECT_NEAR(a.s_lex, 10.54, 0.01);
  EXPECT_NEAR(a.s_avg, 27.86, 0.01);
}

TEST(Aggregate, AllOnesAndAllZeros) {
  const auto ones = aggregate({uniform(1.0), uniform(1.0)});
  EXPECT_DOUBLE_EQ(ones.aggregates.s_lex, 100.0);
  EXPECT_DOUBLE_EQ(ones.aggregates.s_sem, 100.0);
  EXPECT_DOUBLE_EQ(ones.aggregates.s_avg, 100.0);
  const auto zeros = aggregate({uniform(0.0)});
  EXPECT_EQ(zeros.aggregates.s_avg, 0.0);
  EXPECT_EQ(zeros.aggregates.s_lex, 0.0);
}

TEST(Aggregate, EmptyInputThrows) {
  try {
    aggregate({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
}

TEST(Aggregate, PermutationInvariantBitForBit) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<MetricVector> vs;
  for (int i = 0; i < 57; ++i) {
    MetricVector m;
    m.rouge_l = u(rng);
    m.bleu = u(rng);
    m.word_overlap = u(rng);
    m.cosine = u(rng);
    m.embedding_f1 = u(rng);
    m.meteor = u(rng);
    vs.push_back(m);
  }
  const auto base = aggregate(vs).aggregates;
  for (int k = 0; k < 20; ++k) {
    std::shuffle(vs.begin(), vs.end(), rng);
    const auto a = aggregate(vs).aggregates;
    EXPECT_EQ(a.s_avg, base.s_avg);
    EXPECT_EQ(a.s_lex, base.s_lex);
    EXPECT_EQ(a.s_sem, base.s_sem);
  }
}

TEST(Aggregate, IdsMustMatchVectors) {
  EXPECT_THROW(aggregate({uniform(1.0)}, {"a", "b"}), Error);
}

TEST(Delta, TableExample) {
  const auto d = delta(29.93, 27.86);
  EXPECT_EQ(d.abs, 29.93 - 27.86);
  EXPECT_NEAR(d.abs, 2.07, 1e-12);
  EXPECT_NEAR(d.rel, 7.43, 0.01);
}

TEST(Delta, EqualAndZeroBaseline) {
  const auto d = delta(12.5, 12.5);
  EXPECT_EQ(d.abs, 0.0);
  EXPECT_EQ(d.rel, 0.0);
  try {
    delta(3.0, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DivisionByZeroBaseline);
  }
}

TEST(Judge, PercentagesOfScriptedGrades) {
  const auto [pct, s] = judge_percentages({2, 1, 2, 2, 1});
  EXPECT_EQ(pct, (std::array<double, 5>{100, 50, 100, 100, 50}));
  EXPECT_DOUBLE_EQ(s, 80.0);
  EXPECT_DOUBLE_EQ(judge_percentages({2, 2, 2, 2, 2}).second, 100.0);
}

TEST(Judge, AggregateAcrossEntries) {
  const auto r = aggregate_judge({{"a", {2, 1, 2, 2, 1}}, {"b", {0, 1, 2, 0, 1}}}, {"c"});
  EXPECT_DOUBLE_EQ(r.dimensions[0], 50.0);
  EXPECT_DOUBLE_EQ(r.dimensions[1], 50.0);
  EXPECT_DOUBLE_EQ(r.dimensions[2], 100.0);
  EXPECT_DOUBLE_EQ(r.s_mllm, (50 + 50 + 100 + 50 + 50) / 5.0);
  EXPECT_EQ(to_json(r)["excluded_count"], 1);
}

std::shared_ptr<ChatClient> scripted(std::shared_ptr<ScriptedChatBackend> b) {
  return std::make_shared<ChatClient>(b, RetryPolicy{0, 0.0, 1.0});
}

const char* const kGrades =
    "<think>ok</think><accuracy>2</accuracy><completeness>1</completeness><format>2</format><writing>2</writing>"
    "<faithfulness>1</faithfulness>";

TEST(JudgeFiveDim, ParsesGrades) {
  auto b = std::make_shared<ScriptedChatBackend>();
  b->reply(kGrades);
  const auto e = judge_five_dim("x", "table", "gold", "cand", *scripted(b), builtin_prompt("judge"));
  EXPECT_EQ(e.grades, (std::array<int, 5>{2, 1, 2, 2, 1}));
  EXPECT_EQ(e.retries, 0);
  const auto prompt = b->requests().front().front().content;
  EXPECT_NE(prompt.find("gold"), std::string::npos);
  EXPECT_NE(prompt.find("cand"), std::string::npos);
}

TEST(JudgeFiveDim, RetriesOnceThenSucceeds) {
  auto b = std::make_shared<ScriptedChatBackend>();
  b->reply("<accuracy>2</accuracy>").reply(kGrades);
  const auto e = judge_five_dim("x", "figure", "g", "c", *scripted(b), builtin_prompt("judge"));
  EXPECT_EQ(e.retries, 1);
  EXPECT_EQ(b->calls(), 2u);
}

TEST(JudgeFiveDim, ClampsOutOfRangeGrades) {
  auto b = std::make_shared<ScriptedChatBackend>();
  b->reply("<accuracy>3</accuracy><completeness>1</completeness><format>2</format><writing>2</writing>"
           "<faithfulness>-1</faithfulness>");
  const auto e = judge_five_dim("x", "table", "g", "c", *scripted(b), builtin_prompt("judge"));
  EXPECT_TRUE(e.clamped);
  EXPECT_EQ(e.grades[0], 2);
  EXPECT_EQ(e.grades[4], 0);
}

TEST(JudgeFiveDim, UnparseableTwiceThrows) {
  auto b = std::make_shared<ScriptedChatBackend>();
  b->reply("no grades").reply("still none");
  try {
    judge_five_dim("x", "table", "g", "c", *scripted(b), builtin_prompt("judge"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::JudgeUnparseable);
  }
}

TEST(ScoreReport, JsonRoundTrip) {
  ScoreReport r = aggregate({uniform(0.5), uniform(0.25)}, {"a", "b"});
  r.deltas = delta(r.aggregates, aggregate_means({10, 10, 10, 10, 10, 10}));
  const auto back = score_report_from_json(to_json(r));
  EXPECT_EQ(back.ids, r.ids);
  EXPECT_DOUBLE_EQ(back.aggregates.s_avg, r.aggregates.s_avg);
  ASSERT_TRUE(back.deltas.has_value());
  EXPECT_DOUBLE_EQ(back.deltas->s_avg.rel, r.deltas->s_avg.rel);
}

TEST(ScoreReport, SummaryTableColumns) {
  const auto table = summary_table(aggregate({uniform(1.0)}), "ours");
  for (const char* col : {"Cosine", "BERT", "Meteor", "Rouge-L", "Bleu", "Word", "S_Sem", "S_Lex", "S_Avg", "100.00"}) {
    EXPECT_NE(table.find(col), std::string::npos) << col;
  }
}

}  // namespace
}  // namespace sciana
