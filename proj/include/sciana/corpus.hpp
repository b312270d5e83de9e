#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sciana/document.hpp"
#include "sciana/gateway.hpp"

namespace sciana {

struct ContextSet {
  // levels[i] holds the nodes first reached at distance i + 1.
  std::vector<std::vector<std::string>> levels;
  int depth = 0;
};

/// Level sets of a breadth-first expansion over in and out edges, with the
/// visited set seeded by the target. Nodes inside a level keep discovery order.
/// External citation keys attached to frontier nodes join the next level as leaves.
ContextSet retrieve_context(const ReferenceGraph& graph, std::string_view target, int depth,
                            bool include_external = false);

struct PipelineThresholds {
  int min_year = 2024;
  int max_sources_per_query = 200;
  std::size_t min_gold_len = 20;
  std::size_t max_gold_len = 1500;
  std::size_t max_context_len = 12000;
  std::size_t max_samples = 100000;
  int context_depth = 1;
  bool require_caption = false;
  // Empty lists disable the predicate.
  std::vector<std::string> allowed_domains;
  std::vector<std::string> required_keywords;
  std::string query_template =
      "Write a scientific analysis of the given {data_noun} from the paper \"{title}\", grounded in the data "
      "and its surrounding context.";

  void validate() const;
};

PipelineThresholds thresholds_from_json(const Json& j);
Json to_json(const PipelineThresholds& t);

struct Verdict {
  bool accepted = true;
  std::string reason;

  static Verdict accept() { return {true, {}}; }
  static Verdict reject(std::string why) { return {false, std::move(why)}; }
};

/// Reasons: access_failure, parse_failure, year, domain, keyword.
Verdict filter_paper(const PaperDocument& doc, const PipelineThresholds& t);

/// Reasons: not_data, empty, format_error, missing_caption.
Verdict filter_element(const DocElement& el, SourceFormat format, const PipelineThresholds& t);

enum class DataType { table, figure, mixed };
enum class Width { self_contained, internal, external, mixed };

std::string_view to_string(DataType v) noexcept;
std::string_view to_string(Width v) noexcept;

struct InstanceLabels {
  std::string data_type;
  std::string format;
  std::string source_kind;
  DomainLabel domain;
  std::string width;
  std::string depth = "unknown";
  std::string objective = "unknown";
};

struct InputElement {
  std::string element_id;
  ElementKind kind = ElementKind::table;
  std::optional<std::string> label;
  std::optional<std::string> caption;
  std::string body;
  std::optional<std::string> image_ref;
};

struct GoldReference {
  std::string target;
  bool internal = false;
};

struct InstanceSource {
  PaperMeta meta;
  std::string context;
  std::vector<std::vector<std::string>> context_levels;
  // Source file, relative to the instance file; empty when unknown.
  std::string path;
};

struct InstanceLengths {
  std::size_t inputs = 0;
  std::size_t context = 0;
  std::size_t gold = 0;
};

struct AnalysisInstance {
  std::string instance_id;
  std::vector<InputElement> inputs;
  InstanceSource source;
  std::string query;
  std::string gold;
  std::vector<GoldReference> gold_refs;
  InstanceLabels labels;
  InstanceLengths lengths;

  int year() const noexcept { return source.meta.year; }
};

Json to_json(const AnalysisInstance& inst);
AnalysisInstance instance_from_json(const Json& j);
std::vector<AnalysisInstance> read_instances(const std::string& path);
void write_instances(const std::string& path, const std::vector<AnalysisInstance>& instances);

struct BuildOutcome {
  std::optional<AnalysisInstance> instance;
  std::string reason;
};

/// Gold is every prose block of a distance-1 referring section or paragraph
/// that mentions the target, in document order. Those blocks are removed from
/// the serialized context. Reasons: embedded, missing_gold, too_short,
/// too_long, context_too_long.
BuildOutcome build_instance(const PaperDocument& doc, const ReferenceGraph& graph, const DocElement& target,
                            const ContextSet& ctx, const PipelineThresholds& t);

Width classify_width(const std::vector<GoldReference>& refs);

/// Fills data_type, format, source_kind, domain and width from the instance alone.
void classify_rule(AnalysisInstance& inst);

/// Asks the judge for depth and objective with a constrained-choice prompt.
/// A malformed reply is retried once; after that the label stays "unknown".
void classify_mllm(AnalysisInstance& inst, ChatClient& judge);

struct SplitResult {
  std::vector<AnalysisInstance> train;
  std::vector<AnalysisInstance> eval;
};

/// Eval draws from year == eval_year, keeping the `max_eval` instances with the
/// smallest seeded hash of their id (all of them when max_eval is 0). Everything
/// else is train, so the two parts partition the input. Input order is kept.
SplitResult split_eval(const std::vector<AnalysisInstance>& instances, int eval_year, std::uint64_t seed,
                       std::size_t max_eval = 0);

struct StageReport {
  std::size_t papers_in = 0;
  std::size_t papers_accepted = 0;
  std::map<std::string, std::size_t> paper_rejects;
  std::size_t elements_in = 0;
  std::map<std::string, std::size_t> element_rejects;
  std::size_t instances_built = 0;
  std::map<std::string, std::size_t> instance_rejects;
  std::size_t instances_emitted = 0;

  /// Every input is accounted for by exactly one accept or reject at each stage.
  bool conserved() const;
  Json to_json() const;
};

struct CorpusResult {
  std::vector<AnalysisInstance> instances;
  StageReport report;
};

/// Runs paper filtering, extraction, instance construction and rule labels over
/// the given documents. Source caps are applied per collection query in input
/// order; documents in 2025 or later get twice the cap.
CorpusResult build_corpus(const std::vector<PaperDocument>& docs, const PipelineThresholds& t, unsigned workers = 1);

}  // namespace sciana
