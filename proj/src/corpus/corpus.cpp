#include <algorithm>
#include <fstream>
#include <set>

#include "sciana/corpus.hpp"
#include "sciana/error.hpp"
#include "sciana/parallel.hpp"

namespace sciana {

ContextSet retrieve_context(const ReferenceGraph& graph, std::string_view target, int depth, bool include_external) {
  if (!graph.has_node(target)) throw Error(ErrorCode::UnknownTarget, "no element '" + std::string(target) + "'");
  if (depth < 0) throw Error(ErrorCode::InvalidArgument, "context depth must be >= 0");
  ContextSet ctx;
  ctx.depth = depth;
  std::set<std::string, std::less<>> visited{std::string(target)};
  std::vector<std::string> frontier{std::string(target)};
  for (int i = 1; i <= depth; ++i) {
    std::vector<std::string> next;
    for (const auto& node : frontier) {
      auto visit = [&](const std::string& n) {
        if (visited.insert(n).second) next.push_back(n);
      };
      for (const auto& n : graph.in_edges(node)) visit(n);
      for (const auto& n : graph.out_edges(node)) visit(n);
      if (include_external) {
        for (const auto& n : graph.external_refs(node)) visit(n);
      }
    }
    ctx.levels.push_back(next);
    frontier = std::move(next);
  }
  return ctx;
}

void PipelineThresholds::validate() const {
  if (min_year <= 0 || max_sources_per_query <= 0 || min_gold_len == 0 || max_context_len == 0 ||
      max_samples == 0 || context_depth < 0) {
    throw Error(ErrorCode::InvalidConfig, "corpus thresholds must be positive");
  }
  if (min_gold_len >= max_gold_len) throw Error(ErrorCode::InvalidConfig, "min_gold_len must be below max_gold_len");
}

PipelineThresholds thresholds_from_json(const Json& j) {
  PipelineThresholds t;
  t.min_year = j.value("min_year", t.min_year);
  t.max_sources_per_query = j.value("max_sources_per_query", t.max_sources_per_query);
  t.min_gold_len = j.value("min_gold_len", t.min_gold_len);
  t.max_gold_len = j.value("max_gold_len", t.max_gold_len);
  t.max_context_len = j.value("max_context_len", t.max_context_len);
  t.max_samples = j.value("max_samples", t.max_samples);
  t.context_depth = j.value("context_depth", t.context_depth);
  t.require_caption = j.value("require_caption", t.require_caption);
  t.allowed_domains = j.value("allowed_domains", t.allowed_domains);
  t.required_keywords = j.value("required_keywords", t.required_keywords);
  t.query_template = j.value("query_template", t.query_template);
  t.validate();
  return t;
}

Json to_json(const PipelineThresholds& t) {
  return Json{{"min_year", t.min_year},
              {"max_sources_per_query", t.max_sources_per_query},
              {"min_gold_len", t.min_gold_len},
              {"max_gold_len", t.max_gold_len},
              {"max_context_len", t.max_context_len},
              {"max_samples", t.max_samples},
              {"context_depth", t.context_depth},
              {"require_caption", t.require_caption},
              {"allowed_domains", t.allowed_domains},
              {"required_keywords", t.required_keywords},
              {"query_template", t.query_template}};
}

Verdict filter_paper(const PaperDocument& doc, const PipelineThresholds& t) {
  if (!doc.meta.access_ok) return Verdict::reject("access_failure");
  if (doc.parse_failed) return Verdict::reject("parse_failure");
  if (doc.meta.year < t.min_year) return Verdict::reject("year");
  if (!t.allowed_domains.empty()) {
    const bool hit = std::any_of(doc.meta.domains.begin(), doc.meta.domains.end(), [&](const DomainLabel& d) {
      return std::find(t.allowed_domains.begin(), t.allowed_domains.end(), d.broad) != t.allowed_domains.end();
    });
    if (!hit) return Verdict::reject("domain");
  }
  if (!t.required_keywords.empty()) {
    std::string hay = to_lower_ascii(doc.meta.title);
    for (const auto& k : doc.meta.keywords) hay += "\n" + to_lower_ascii(k);
    const bool hit = std::any_of(t.required_keywords.begin(), t.required_keywords.end(),
                                 [&](const std::string& k) { return contains(hay, to_lower_ascii(k)); });
    if (!hit) return Verdict::reject("keyword");
  }
  return Verdict::accept();
}

Verdict filter_element(const DocElement& el, SourceFormat format, const PipelineThresholds& t) {
  if (el.kind != ElementKind::table && el.kind != ElementKind::figure) return Verdict::reject("not_data");
  const bool has_image = el.image_ref && !trim(*el.image_ref).empty();
  if (trim(el.body).empty() && !has_image) return Verdict::reject("empty");
  if (!markup_balanced(format, el.body)) return Verdict::reject("format_error");
  if (t.require_caption && (!el.caption || trim(*el.caption).empty())) return Verdict::reject("missing_caption");
  return Verdict::accept();
}

std::string_view to_string(DataType v) noexcept {
  switch (v) {
    case DataType::table: return "table";
    case DataType::figure: return "figure";
    case DataType::mixed: return "mixed";
  }
  return "mixed";
}

std::string_view to_string(Width v) noexcept {
  switch (v) {
    case Width::self_contained: return "self_contained";
    case Width::internal: return "internal";
    case Width::external: return "external";
    case Width::mixed: return "mixed";
  }
  return "mixed";
}

namespace {

Json optional_json(const std::optional<std::string>& s) { return s ? Json(*s) : Json(nullptr); }

std::optional<std::string> optional_from(const Json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<std::string>();
}

std::string render_element(const DocElement& el, std::string_view text) {
  std::string head = "[" + std::string(to_string(el.kind)) + " " + el.element_id;
  if (el.label) head += " | " + *el.label;
  head += "]";
  if (!el.title.empty()) head += " " + el.title;
  if (el.caption) head += "\nCaption: " + *el.caption;
  return head + "\n" + std::string(text);
}

}  // namespace

Json to_json(const AnalysisInstance& inst) {
  Json inputs = Json::array();
  for (const auto& in : inst.inputs) {
    inputs.push_back({{"element_id", in.element_id},
                      {"kind", to_string(in.kind)},
                      {"label", optional_json(in.label)},
                      {"caption", optional_json(in.caption)},
                      {"body", in.body},
                      {"image_ref", optional_json(in.image_ref)}});
  }
  Json refs = Json::array();
  for (const auto& r : inst.gold_refs) refs.push_back({{"target", r.target}, {"internal", r.internal}});
  return Json{{"instance_id", inst.instance_id},
              {"inputs", std::move(inputs)},
              {"source",
               {{"meta", to_json(inst.source.meta)},
                {"context", inst.source.context},
                {"context_levels", inst.source.context_levels},
                {"path", inst.source.path}}},
              {"query", inst.query},
              {"gold", inst.gold},
              {"gold_refs", std::move(refs)},
              {"labels",
               {{"data_type", inst.labels.data_type},
                {"format", inst.labels.format},
                {"source_kind", inst.labels.source_kind},
                {"domain", {{"broad", inst.labels.domain.broad}, {"fine", inst.labels.domain.fine}}},
                {"width", inst.labels.width},
                {"depth", inst.labels.depth},
                {"objective", inst.labels.objective}}},
              {"lengths",
               {{"inputs", inst.lengths.inputs}, {"context", inst.lengths.context}, {"gold", inst.lengths.gold}}}};
}

AnalysisInstance instance_from_json(const Json& j) {
  try {
    AnalysisInstance inst;
    inst.instance_id = j.at("instance_id").get<std::string>();
    for (const auto& in : j.at("inputs")) {
      InputElement e;
      e.element_id = in.at("element_id").get<std::string>();
      e.kind = parse_element_kind(in.at("kind").get<std::string>());
      e.label = optional_from(in, "label");
      e.caption = optional_from(in, "caption");
      e.body = in.value("body", "");
      e.image_ref = optional_from(in, "image_ref");
      inst.inputs.push_back(std::move(e));
    }
    const auto& src = j.at("source");
    inst.source.meta = meta_from_json(src.at("meta"));
    inst.source.context = src.value("context", "");
    inst.source.path = src.value("path", "");
    if (src.contains("context_levels")) {
      inst.source.context_levels = src["context_levels"].get<std::vector<std::vector<std::string>>>();
    }
    inst.query = j.value("query", "");
    inst.gold = j.value("gold", "");
    if (j.contains("gold_refs")) {
      for (const auto& r : j["gold_refs"]) inst.gold_refs.push_back({r.at("target").get<std::string>(), r.at("internal").get<bool>()});
    }
    if (j.contains("labels")) {
      const auto& l = j["labels"];
      inst.labels.data_type = l.value("data_type", "");
      inst.labels.format = l.value("format", "");
      inst.labels.source_kind = l.value("source_kind", "");
      if (l.contains("domain")) inst.labels.domain = {l["domain"].value("broad", ""), l["domain"].value("fine", "")};
      inst.labels.width = l.value("width", "");
      inst.labels.depth = l.value("depth", "unknown");
      inst.labels.objective = l.value("objective", "unknown");
    }
    if (j.contains("lengths")) {
      const auto& l = j["lengths"];
      inst.lengths = {l.value("inputs", std::size_t{0}), l.value("context", std::size_t{0}),
                      l.value("gold", std::size_t{0})};
    }
    return inst;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed instance record: ") + e.what());
  }
}

std::vector<AnalysisInstance> read_instances(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::vector<AnalysisInstance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(instance_from_json(Json::parse(line)));
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::InvalidArgument, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_instances(const std::string& path, const std::vector<AnalysisInstance>& instances) {
  std::string out;
  for (const auto& inst : instances) out += to_json(inst).dump() + "\n";
  write_file(path, out);
}

BuildOutcome build_instance(const PaperDocument& doc, const ReferenceGraph& graph, const DocElement& target,
                            const ContextSet& ctx, const PipelineThresholds& t) {
  if (target.embedded) return {std::nullopt, "embedded"};

  // Gold blocks, keyed by the referring element so the context can omit them.
  std::map<std::string, std::set<std::size_t>> gold_blocks;
  std::vector<std::string> gold_parts;
  std::vector<GoldReference> refs;
  std::set<std::string> seen_refs;
  for (const auto& el : doc.elements) {
    if (el.kind != ElementKind::section && el.kind != ElementKind::paragraph) continue;
    const auto& ins = graph.in_edges(target.element_id);
    if (std::find(ins.begin(), ins.end(), el.element_id) == ins.end()) continue;
    const auto blocks = split_blocks(el.prose);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto block_refs = extract_references(doc, blocks[b], el.element_id);
      if (std::find(block_refs.begin(), block_refs.end(), target.element_id) == block_refs.end()) continue;
      gold_blocks[el.element_id].insert(b);
      gold_parts.push_back(clean_prose(doc.format, blocks[b]));
      for (const auto& r : block_refs) {
        if (r == target.element_id || !seen_refs.insert(r).second) continue;
        const auto* hit = doc.find(r);
        refs.push_back({r, hit != nullptr && hit->kind != ElementKind::bib_entry});
      }
    }
  }
  if (gold_parts.empty()) return {std::nullopt, "missing_gold"};

  AnalysisInstance inst;
  for (std::size_t i = 0; i < gold_parts.size(); ++i) {
    if (i > 0) inst.gold += "\n\n";
    inst.gold += gold_parts[i];
  }
  inst.lengths.gold = token_count(inst.gold);
  if (inst.lengths.gold < t.min_gold_len) return {std::nullopt, "too_short"};
  if (inst.lengths.gold > t.max_gold_len) return {std::nullopt, "too_long"};

  std::string context;
  for (const auto& level : ctx.levels) {
    for (const auto& id : level) {
      const auto* el = doc.find(id);
      if (el == nullptr) continue;
      std::string text;
      if (el->kind == ElementKind::section || el->kind == ElementKind::paragraph) {
        const auto blocks = split_blocks(el->prose);
        const auto skip = gold_blocks.find(id);
        for (std::size_t b = 0; b < blocks.size(); ++b) {
          if (skip != gold_blocks.end() && skip->second.count(b) > 0) continue;
          const auto cleaned = clean_prose(doc.format, blocks[b]);
          if (cleaned.empty()) continue;
          if (!text.empty()) text += "\n\n";
          text += cleaned;
        }
      } else if (el->kind == ElementKind::bib_entry) {
        text = clean_prose(doc.format, el->body);
      } else {
        text = el->body;
      }
      if (!context.empty()) context += "\n\n";
      context += render_element(*el, text);
    }
  }
  inst.lengths.context = token_count(context);
  if (inst.lengths.context > t.max_context_len) return {std::nullopt, "context_too_long"};

  InputElement in;
  in.element_id = target.element_id;
  in.kind = target.kind;
  in.label = target.label;
  in.caption = target.caption;
  in.body = target.body;
  in.image_ref = target.image_ref;
  inst.lengths.inputs = token_count(target.body);
  inst.inputs.push_back(std::move(in));

  inst.instance_id = doc.meta.paper_id + ":" + target.element_id;
  inst.source.meta = doc.meta;
  inst.source.context = std::move(context);
  inst.source.context_levels = ctx.levels;
  inst.gold_refs = std::move(refs);
  inst.query = render_template(t.query_template,
                               {{"data_noun", std::string(to_string(target.kind))}, {"title", doc.meta.title}});
  inst.labels.format = std::string(to_string(doc.format));
  classify_rule(inst);
  return {std::move(inst), {}};
}

Width classify_width(const std::vector<GoldReference>& refs) {
  if (refs.empty()) return Width::self_contained;
  const bool all_internal = std::all_of(refs.begin(), refs.end(), [](const GoldReference& r) { return r.internal; });
  const bool all_external = std::none_of(refs.begin(), refs.end(), [](const GoldReference& r) { return r.internal; });
  if (all_internal) return Width::internal;
  if (all_external) return Width::external;
  return Width::mixed;
}

void classify_rule(AnalysisInstance& inst) {
  bool tables = false;
  bool figures = false;
  for (const auto& in : inst.inputs) {
    tables = tables || in.kind == ElementKind::table;
    figures = figures || in.kind == ElementKind::figure;
  }
  const DataType dt = tables && figures ? DataType::mixed : (figures ? DataType::figure : DataType::table);
  inst.labels.data_type = std::string(to_string(dt));
  if (inst.labels.format.empty()) inst.labels.format = "latex";
  inst.labels.source_kind = std::string(to_string(inst.source.meta.source_kind));
  inst.labels.domain = inst.source.meta.domains.empty() ? DomainLabel{"unknown", "unknown"}
                                                        : inst.source.meta.domains.front();
  inst.labels.width = std::string(to_string(classify_width(inst.gold_refs)));
}

namespace {

const char* kDepthPrompt =
    "LABEL TASK: analysis depth.\n"
    "Read the reference analysis of a scientific {data_type} below and decide whether it is a shallow "
    "description of what the data shows or an in-depth analysis that interprets causes, implications or "
    "comparisons.\n\nReference analysis:\n{gold}\n\n"
    "Reply with exactly one of: shallow, in_depth. Enclose it as <depth>...</depth>.";

const char* kObjectivePrompt =
    "LABEL TASK: analysis objective.\n"
    "Read the reference analysis of a scientific {data_type} below and decide whether its objective is "
    "methodology (explaining or justifying how a method works) or experiment (reporting and interpreting "
    "experimental results).\n\nReference analysis:\n{gold}\n\n"
    "Reply with exactly one of: methodology, experiment. Enclose it as <objective>...</objective>.";

std::optional<std::string> parse_choice(std::string reply, const std::string& tag,
                                        const std::vector<std::pair<std::string, std::vector<std::string>>>& options) {
  reply = to_lower_ascii(reply);
  const auto open = reply.find("<" + tag + ">");
  const auto close = reply.find("</" + tag + ">");
  if (open != std::string::npos && close != std::string::npos && close > open) {
    reply = reply.substr(open + tag.size() + 2, close - open - tag.size() - 2);
  }
  std::optional<std::string> found;
  for (const auto& [value, spellings] : options) {
    for (const auto& s : spellings) {
      if (contains(reply, s)) {
        if (found && *found != value) return std::nullopt;
        found = value;
      }
    }
  }
  return found;
}

std::string ask(ChatClient& judge, const std::string& prompt, const std::string& tag,
                const std::vector<std::pair<std::string, std::vector<std::string>>>& options) {
  std::vector<ChatTurn> turns{{Role::user, prompt, {}}};
  for (int attempt = 0; attempt < 2; ++attempt) {
    const auto reply = judge.chat(turns).text;
    if (auto v = parse_choice(reply, tag, options)) return *v;
    if (attempt == 0) {
      turns.push_back({Role::assistant, reply.empty() ? std::string("(empty)") : reply, {}});
      turns.push_back({Role::user, "Answer with a single allowed value inside <" + tag + "></" + tag + ">.", {}});
    }
  }
  return "unknown";
}

}  // namespace

void classify_mllm(AnalysisInstance& inst, ChatClient& judge) {
  const std::map<std::string, std::string> vars{{"data_type", inst.labels.data_type}, {"gold", inst.gold}};
  inst.labels.depth = ask(judge, render_template(kDepthPrompt, vars), "depth",
                          {{"in_depth", {"in_depth", "in-depth", "in depth"}}, {"shallow", {"shallow"}}});
  inst.labels.objective = ask(judge, render_template(kObjectivePrompt, vars), "objective",
                              {{"methodology", {"methodology"}}, {"experiment", {"experiment"}}});
}

SplitResult split_eval(const std::vector<AnalysisInstance>& instances, int eval_year, std::uint64_t seed,
                       std::size_t max_eval) {
  std::vector<std::pair<std::uint64_t, std::size_t>> candidates;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (instances[i].year() == eval_year) {
      candidates.emplace_back(splitmix64(seed ^ fnv1a64(instances[i].instance_id)), i);
    }
  }
  std::sort(candidates.begin(), candidates.end());
  if (max_eval > 0 && candidates.size() > max_eval) candidates.resize(max_eval);
  std::vector<bool> chosen(instances.size(), false);
  for (const auto& c : candidates) chosen[c.second] = true;
  SplitResult out;
  for (std::size_t i = 0; i < instances.size(); ++i) (chosen[i] ? out.eval : out.train).push_back(instances[i]);
  return out;
}

namespace {
std::size_t sum(const std::map<std::string, std::size_t>& m) {
  std::size_t s = 0;
  for (const auto& [_, n] : m) s += n;
  return s;
}
}  // namespace

bool StageReport::conserved() const {
  return papers_in == papers_accepted + sum(paper_rejects) && elements_in == instances_built + sum(element_rejects) &&
         instances_built == instances_emitted + sum(instance_rejects);
}

Json StageReport::to_json() const {
  return Json{{"papers_in", papers_in},
              {"papers_accepted", papers_accepted},
              {"paper_rejects", paper_rejects},
              {"elements_in", elements_in},
              {"element_rejects", element_rejects},
              {"instances_built", instances_built},
              {"instance_rejects", instance_rejects},
              {"instances_emitted", instances_emitted},
              {"conserved", conserved()}};
}

CorpusResult build_corpus(const std::vector<PaperDocument>& docs, const PipelineThresholds& t, unsigned workers) {
  t.validate();
  CorpusResult result;
  auto& rep = result.report;
  rep.papers_in = docs.size();

  std::vector<const PaperDocument*> accepted;
  std::map<std::string, std::pair<int, int>> per_query;  // (pre-2025, 2025+)
  for (const auto& doc : docs) {
    const auto v = filter_paper(doc, t);
    if (!v.accepted) {
      ++rep.paper_rejects[v.reason];
      continue;
    }
    auto& counts = per_query[doc.meta.collection_query];
    const bool recent = doc.meta.year >= 2025;
    int& used = recent ? counts.second : counts.first;
    const int cap = recent ? 2 * t.max_sources_per_query : t.max_sources_per_query;
    if (used >= cap) {
      ++rep.paper_rejects["source_cap"];
      continue;
    }
    ++used;
    accepted.push_back(&doc);
  }
  rep.papers_accepted = accepted.size();

  struct PaperOutput {
    std::size_t elements_in = 0;
    std::size_t built = 0;
    std::map<std::string, std::size_t> element_rejects;
    std::map<std::string, std::size_t> instance_rejects;
    std::vector<AnalysisInstance> instances;
  };
  std::vector<PaperOutput> outputs(accepted.size());
  parallel_for(accepted.size(), workers, [&](std::size_t i) {
    const auto& doc = *accepted[i];
    auto& out = outputs[i];
    const auto graph = build_reference_graph(doc);
    for (const auto& el : doc.elements) {
      if (el.kind != ElementKind::table && el.kind != ElementKind::figure) continue;
      ++out.elements_in;
      const auto v = filter_element(el, doc.format, t);
      if (!v.accepted) {
        ++out.element_rejects[v.reason];
        continue;
      }
      ++out.built;
      const auto ctx = retrieve_context(graph, el.element_id, t.context_depth);
      auto built = build_instance(doc, graph, el, ctx, t);
      if (!built.instance) {
        ++out.instance_rejects[built.reason];
        continue;
      }
      out.instances.push_back(std::move(*built.instance));
    }
  });

  for (auto& out : outputs) {
    rep.elements_in += out.elements_in;
    rep.instances_built += out.built;
    for (const auto& [k, n] : out.element_rejects) rep.element_rejects[k] += n;
    for (const auto& [k, n] : out.instance_rejects) rep.instance_rejects[k] += n;
    for (auto& inst : out.instances) {
      if (result.instances.size() >= t.max_samples) {
        ++rep.instance_rejects["max_samples"];
        continue;
      }
      result.instances.push_back(std::move(inst));
    }
  }
  rep.instances_emitted = result.instances.size();
  return result;
}

}  // namespace sciana
