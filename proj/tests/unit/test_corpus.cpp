#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "sciana/corpus.hpp"
#include "sciana/error.hpp"

namespace sciana {
namespace {

using Ids = std::vector<std::string>;

ReferenceGraph line_graph() {
  // A <-> B <-> C, with an external citation on C.
  ReferenceGraph g;
  for (const char* n : {"A", "B", "C"}) g.add_node(n);
  g.add_edge("A", "B");
  g.add_edge("B", "A");
  g.add_edge("B", "C");
  g.add_edge("C", "B");
  g.add_external("C", "cite:k");
  return g;
}

TEST(RetrieveContext, LineGraphLevels) {
  const auto g = line_graph();
  auto c = retrieve_context(g, "A", 1);
  EXPECT_EQ(c.levels, (std::vector<Ids>{{"B"}}));
  c = retrieve_context(g, "A", 2);
  EXPECT_EQ(c.levels, (std::vector<Ids>{{"B"}, {"C"}}));
  c = retrieve_context(g, "B", 1);
  EXPECT_EQ(c.levels, (std::vector<Ids>{{"A", "C"}}));
  c = retrieve_context(g, "A", 3, true);
  EXPECT_EQ(c.levels, (std::vector<Ids>{{"B"}, {"C"}, {"cite:k"}}));
  EXPECT_TRUE(retrieve_context(g, "A", 0).levels.empty());
}

TEST(RetrieveContext, Errors) {
  const auto g = line_graph();
  try {
    retrieve_context(g, "Z", 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownTarget);
  }
  EXPECT_THROW(retrieve_context(g, "A", -1), Error);
}

TEST(RetrieveContext, LevelsAreDistancesAndDisjoint) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 9);
    ReferenceGraph g;
    for (int i = 0; i < n; ++i) g.add_node(std::to_string(i));
    std::vector<std::pair<int, int>> edges;
    const int m = static_cast<int>(rng() % (2 * n + 1));
    for (int k = 0; k < m; ++k) {
      const int a = static_cast<int>(rng() % n), b = static_cast<int>(rng() % n);
      g.add_edge(std::to_string(a), std::to_string(b));
      edges.emplace_back(a, b);
    }
    const int root = static_cast<int>(rng() % n);
    const int depth = static_cast<int>(rng() % 4);
    const auto want = oracle::distance_levels(n, edges, root, depth);
    const auto got = retrieve_context(g, std::to_string(root), depth);
    ASSERT_EQ(got.levels.size(), static_cast<std::size_t>(depth));
    for (int d = 0; d < depth; ++d) {
      std::set<int> ids;
      for (const auto& s : got.levels[d]) ids.insert(std::stoi(s));
      EXPECT_EQ(ids.size(), got.levels[d].size());
      EXPECT_EQ(ids, std::set<int>(want[d].begin(), want[d].end()));
    }
  }
}

TEST(FilterPaper, Reasons) {
  PipelineThresholds t;
  auto doc = *test::latex_sample();
  EXPECT_TRUE(filter_paper(doc, t).accepted);
  auto old = doc;
  old.meta.year = 2023;
  EXPECT_EQ(filter_paper(old, t).reason, "year");
  auto broken = doc;
  broken.parse_failed = true;
  EXPECT_EQ(filter_paper(broken, t).reason, "parse_failure");
  auto locked = doc;
  locked.meta.access_ok = false;
  EXPECT_EQ(filter_paper(locked, t).reason, "access_failure");
  t.allowed_domains = {"biology"};
  EXPECT_EQ(filter_paper(doc, t).reason, "domain");
  t.allowed_domains = {"computer_science"};
  t.required_keywords = {"MIXTURE of experts"};
  EXPECT_TRUE(filter_paper(doc, t).accepted);
  t.required_keywords = {"protein folding"};
  EXPECT_EQ(filter_paper(doc, t).reason, "keyword");
}

TEST(FilterElement, Reasons) {
  PipelineThresholds t;
  DocElement el;
  el.kind = ElementKind::section;
  EXPECT_EQ(filter_element(el, SourceFormat::latex, t).reason, "not_data");
  el.kind = ElementKind::table;
  el.body = "  ";
  EXPECT_EQ(filter_element(el, SourceFormat::latex, t).reason, "empty");
  el.body = "\\begin{table}\\begin{tabular}{c} x \\end{table}";
  EXPECT_EQ(filter_element(el, SourceFormat::latex, t).reason, "format_error");
  el.body = "\\begin{table} x \\end{table}";
  EXPECT_TRUE(filter_element(el, SourceFormat::latex, t).accepted);
  t.require_caption = true;
  EXPECT_EQ(filter_element(el, SourceFormat::latex, t).reason, "missing_caption");
  el.caption = "Scores";
  EXPECT_TRUE(filter_element(el, SourceFormat::latex, t).accepted);
  DocElement fig;
  fig.kind = ElementKind::figure;
  fig.image_ref = "a.png";
  EXPECT_TRUE(filter_element(fig, SourceFormat::latex, PipelineThresholds{}).accepted);
}

TEST(BuildInstance, SampleTableGoldAndContext) {
  const auto& doc = *test::latex_sample();
  const auto g = build_reference_graph(doc);
  const auto* table = doc.find_by_label("tab:wer");
  PipelineThresholds t;
  const auto ctx = retrieve_context(g, table->element_id, 1);
  const auto out = build_instance(doc, g, *table, ctx, t);
  ASSERT_TRUE(out.instance.has_value()) << out.reason;
  const auto& inst = *out.instance;
  EXPECT_EQ(inst.instance_id, "arxiv-2503.01234:table#1");
  // Both blocks that mention the table, in document order.
  const auto first = inst.gold.find("compares the load-aware router");
  const auto second = inst.gold.find("shows expert utilisation");
  ASSERT_NE(first, std::string::npos);
  ASSERT_NE(second, std::string::npos);
  EXPECT_LT(first, second);
  EXPECT_EQ(inst.gold.find("Balanced routing"), std::string::npos);
  EXPECT_EQ(inst.source.context.find("compares the load-aware router"), std::string::npos);
  EXPECT_EQ(inst.labels.width, "internal");
  EXPECT_EQ(inst.labels.data_type, "table");
  EXPECT_EQ(inst.labels.format, "latex");
  EXPECT_EQ(inst.labels.domain.broad, "computer_science");
  EXPECT_EQ(inst.lengths.gold, token_count(inst.gold));
  EXPECT_NE(inst.query.find("Sparse Expert Routing"), std::string::npos);
  EXPECT_NE(inst.query.find("table"), std::string::npos);
  EXPECT_EQ(inst.source.context_levels, ctx.levels);
}

TEST(BuildInstance, RejectReasons) {
  const auto& doc = *test::latex_sample();
  const auto g = build_reference_graph(doc);
  const auto* table = doc.find_by_label("tab:wer");
  const auto ctx = retrieve_context(g, table->element_id, 1);
  PipelineThresholds t;
  t.min_gold_len = 500;
  t.max_gold_len = 1000;
  EXPECT_EQ(build_instance(doc, g, *table, ctx, t).reason, "too_short");
  t = PipelineThresholds{};
  t.max_gold_len = 30;
  t.min_gold_len = 5;
  EXPECT_EQ(build_instance(doc, g, *table, ctx, t).reason, "too_long");
  t = PipelineThresholds{};
  t.max_context_len = 3;
  EXPECT_EQ(build_instance(doc, g, *table, ctx, t).reason, "context_too_long");
  auto emb = *table;
  emb.embedded = true;
  EXPECT_EQ(build_instance(doc, g, emb, ctx, PipelineThresholds{}).reason, "embedded");
  const auto* eq = doc.find_by_label("eq:budget");
  const auto eq_ctx = retrieve_context(g, eq->element_id, 1);
  const auto* fig = doc.find_by_label("fig:util");
  auto lonely = *fig;
  lonely.element_id = "figure#9";
  EXPECT_EQ(build_instance(doc, g, lonely, eq_ctx, PipelineThresholds{}).reason, "missing_gold");
}

TEST(ClassifyWidth, AllCombinations) {
  EXPECT_EQ(classify_width({}), Width::self_contained);
  EXPECT_EQ(classify_width({{"a", true}, {"b", true}}), Width::internal);
  EXPECT_EQ(classify_width({{"bib#1", false}}), Width::external);
  EXPECT_EQ(classify_width({{"a", true}, {"bib#1", false}}), Width::mixed);
}

TEST(ClassifyRule, DataTypesAndDomain) {
  auto inst = test::table_instance();
  inst.inputs.push_back(inst.inputs.front());
  inst.inputs.back().kind = ElementKind::figure;
  inst.source.meta.domains.clear();
  classify_rule(inst);
  EXPECT_EQ(inst.labels.data_type, "mixed");
  EXPECT_EQ(inst.labels.domain.broad, "unknown");
  inst.inputs.erase(inst.inputs.begin());
  classify_rule(inst);
  EXPECT_EQ(inst.labels.data_type, "figure");
}

std::shared_ptr<ChatClient> judge_with(std::shared_ptr<ScriptedChatBackend> b) {
  return std::make_shared<ChatClient>(b, RetryPolicy{0, 0.0, 1.0});
}

TEST(ClassifyMllm, ParsesAndRetries) {
  auto b = std::make_shared<ScriptedChatBackend>();
  b->reply("<depth>In-Depth</depth>").reply("not sure").reply("<objective>experiment</objective>");
  auto inst = test::table_instance();
  auto judge = judge_with(b);
  classify_mllm(inst, *judge);
  EXPECT_EQ(inst.labels.depth, "in_depth");
  EXPECT_EQ(inst.labels.objective, "experiment");
  EXPECT_EQ(b->calls(), 3u);
  EXPECT_EQ(b->requests()[0].front().content.rfind("LABEL TASK: analysis depth.", 0), 0u);
  EXPECT_NE(b->requests()[0].front().content.find(inst.gold), std::string::npos);
}

TEST(ClassifyMllm, TwoBadRepliesLeaveUnknown) {
  auto b = std::make_shared<ScriptedChatBackend>();
  b->reply("?").reply("??").reply("<objective>methodology</objective>");
  auto inst = test::table_instance();
  auto judge = judge_with(b);
  classify_mllm(inst, *judge);
  EXPECT_EQ(inst.labels.depth, "unknown");
  EXPECT_EQ(inst.labels.objective, "methodology");
}

std::vector<AnalysisInstance> synthetic(std::size_t n) {
  std::vector<AnalysisInstance> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto inst = test::table_instance();
    inst.instance_id = "p" + std::to_string(i) + ":table#1";
    inst.source.meta.year = i % 3 == 0 ? 2024 : 2025;
    out.push_back(inst);
  }
  return out;
}

TEST(SplitEval, PartitionAndDeterminism) {
  const auto all = synthetic(60);
  const auto a = split_eval(all, 2025, 42, 10);
  const auto b = split_eval(all, 2025, 42, 10);
  EXPECT_EQ(a.eval.size(), 10u);
  EXPECT_EQ(a.train.size(), 50u);
  std::set<std::string> ids;
  for (const auto& x : a.eval) {
    EXPECT_EQ(x.year(), 2025);
    ids.insert(x.instance_id);
  }
  for (const auto& x : a.train) ids.insert(x.instance_id);
  EXPECT_EQ(ids.size(), all.size());
  ASSERT_EQ(a.eval.size(), b.eval.size());
  for (std::size_t i = 0; i < a.eval.size(); ++i) EXPECT_EQ(a.eval[i].instance_id, b.eval[i].instance_id);
  const auto c = split_eval(all, 2025, 43, 10);
  bool differs = false;
  for (std::size_t i = 0; i < c.eval.size(); ++i) differs = differs || c.eval[i].instance_id != a.eval[i].instance_id;
  EXPECT_TRUE(differs);
  EXPECT_EQ(split_eval(all, 2025, 1, 0).eval.size(), 40u);
  EXPECT_TRUE(split_eval(all, 1999, 1, 0).eval.empty());
}

TEST(SplitEval, InputOrderKept) {
  const auto s = split_eval(synthetic(30), 2025, 5, 7);
  auto index = [](const AnalysisInstance& x) { return std::stoi(x.instance_id.substr(1)); };
  EXPECT_TRUE(std::is_sorted(s.eval.begin(), s.eval.end(),
                             [&](const auto& l, const auto& r) { return index(l) < index(r); }));
  EXPECT_TRUE(std::is_sorted(s.train.begin(), s.train.end(),
                             [&](const auto& l, const auto& r) { return index(l) < index(r); }));
}

std::vector<PaperDocument> samples() {
  return {load_document((test::samples_dir() / "sparse_routing.tex").string()),
          load_document((test::samples_dir() / "soil_microbiome.xml").string())};
}

TEST(BuildCorpus, SamplesConserve) {
  const auto r = build_corpus(samples(), PipelineThresholds{});
  EXPECT_TRUE(r.report.conserved());
  EXPECT_EQ(r.report.papers_in, 2u);
  EXPECT_EQ(r.report.instances_emitted, r.instances.size());
  EXPECT_GE(r.instances.size(), 3u);
  std::set<std::string> ids;
  for (const auto& inst : r.instances) {
    EXPECT_TRUE(ids.insert(inst.instance_id).second);
    EXPECT_FALSE(inst.gold.empty());
    EXPECT_FALSE(inst.labels.width.empty());
  }
  const auto j = r.report.to_json();
  EXPECT_EQ(j["papers_in"], 2);
}

TEST(BuildCorpus, WorkerCountDoesNotChangeOutput) {
  const auto docs = samples();
  const auto a = build_corpus(docs, PipelineThresholds{}, 1);
  const auto b = build_corpus(docs, PipelineThresholds{}, 4);
  ASSERT_EQ(a.instances.size(), b.instances.size());
  for (std::size_t i = 0; i < a.instances.size(); ++i) {
    EXPECT_EQ(to_json(a.instances[i]).dump(), to_json(b.instances[i]).dump());
  }
}

TEST(BuildCorpus, SourceCapAndMaxSamples) {
  auto docs = samples();
  for (auto& d : docs) {
    d.meta.collection_query = "same";
    d.meta.year = 2024;
  }
  PipelineThresholds t;
  t.max_sources_per_query = 1;
  auto r = build_corpus(docs, t);
  EXPECT_EQ(r.report.paper_rejects["source_cap"], 1u);
  EXPECT_TRUE(r.report.conserved());
  for (auto& d : docs) d.meta.year = 2025;
  r = build_corpus(docs, t);
  EXPECT_EQ(r.report.papers_accepted, 2u);
  t.max_samples = 1;
  r = build_corpus(docs, t);
  EXPECT_EQ(r.instances.size(), 1u);
  EXPECT_GE(r.report.instance_rejects["max_samples"], 1u);
  EXPECT_TRUE(r.report.conserved());
}

TEST(BuildCorpus, RejectedPapersCounted) {
  auto docs = samples();
  docs[1].meta.year = 2020;
  const auto r = build_corpus(docs, PipelineThresholds{});
  EXPECT_EQ(r.report.paper_rejects.at("year"), 1u);
  EXPECT_TRUE(r.report.conserved());
}

TEST(Instances, JsonlRoundTrip) {
  const auto r = build_corpus(samples(), PipelineThresholds{});
  const auto dir = test::fresh_dir("inst");
  const auto path = (dir / "i.jsonl").string();
  write_instances(path, r.instances);
  const auto back = read_instances(path);
  ASSERT_EQ(back.size(), r.instances.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(to_json(back[i]).dump(), to_json(r.instances[i]).dump());
  write_file(path, "{\"instance_id\":1}\n");
  EXPECT_THROW(read_instances(path), Error);
  std::filesystem::remove_all(dir);
}

TEST(Thresholds, Validation) {
  EXPECT_THROW(thresholds_from_json(Json{{"min_gold_len", 50}, {"max_gold_len", 40}}), Error);
  EXPECT_THROW(thresholds_from_json(Json{{"context_depth", -1}}), Error);
  const auto t = thresholds_from_json(Json{{"min_year", 2025}, {"allowed_domains", {"biology"}}});
  EXPECT_EQ(t.min_year, 2025);
  EXPECT_EQ(thresholds_from_json(to_json(t)).allowed_domains, Ids{"biology"});
}

}  // namespace
}  // namespace sciana
