#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sciana/document.hpp"
#include "sciana/gateway.hpp"
#include "sciana/text.hpp"

namespace sciana {

enum class Toolkit { document, knowledge, search, vision, sandbox };
std::string_view to_string(Toolkit t) noexcept;

enum class ParamType { string, integer, number, boolean, enumeration, string_list };
std::string_view to_string(ParamType t) noexcept;

struct ParamSpec {
  std::string name;
  ParamType type = ParamType::string;
  bool required = false;
  std::vector<std::string> choices;
  std::string description;
  // Free-text parameters compare after lowercasing and whitespace normalisation
  // when scoring parameter correctness; everything else compares exactly.
  bool free_text = false;
};

struct ToolSpec {
  std::string name;
  Toolkit toolkit = Toolkit::document;
  std::string description;
  std::vector<ParamSpec> params;
  // When non-empty, at least one of these parameters must be present.
  std::vector<std::string> any_of;

  const ParamSpec* param(std::string_view name) const;
};

struct ToolCall {
  std::string tool_name;
  Json params = Json::object();
  int turn_index = 0;
};

Json to_json(const ToolCall& c);
ToolCall tool_call_from_json(const Json& j);

/// kind: unknown_tool, not_object, missing, type, enum, unknown_param.
struct SchemaViolation {
  std::string kind;
  std::string param;
  std::string detail;
};

class ToolRegistry {
 public:
  explicit ToolRegistry(std::vector<ToolSpec> specs);
  /// The sixteen tools across the document, knowledge, search, vision and sandbox toolkits.
  static std::shared_ptr<const ToolRegistry> standard();

  const std::vector<ToolSpec>& specs() const noexcept { return specs_; }
  const ToolSpec* find(std::string_view name) const;
  std::optional<SchemaViolation> validate(const ToolCall& call) const;

  /// Tool catalogue rendered for the Expert prompt. An empty filter lists every tool.
  std::string describe(const std::vector<std::string>& only = {}) const;

 private:
  std::vector<ToolSpec> specs_;
};

enum class ToolStatus { ok, error };

struct ToolResult {
  ToolStatus status = ToolStatus::ok;
  std::string payload;
  // Present iff status is error: schema_violation, network_failure, timeout,
  // disabled, not_found, replay_miss, backend_unavailable, parse_failure, internal.
  std::optional<std::string> error_kind;
  double latency_ms = 0.0;
  bool truncated = false;
  bool cached = false;
};

Json to_json(const ToolResult& r);
ToolResult tool_result_from_json(const Json& j);

enum class CacheMode { live, record, replay };
std::string_view to_string(CacheMode m) noexcept;
CacheMode parse_cache_mode(std::string_view s);

struct SearchEndpoints {
  std::string arxiv = "http://export.arxiv.org/api/query";
  std::string eutils = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils";
  std::string semantic_scholar = "https://api.semanticscholar.org/graph/v1";
  std::string semantic_scholar_key_env = "SEMANTIC_SCHOLAR_API_KEY";
  std::string web = "https://www.googleapis.com/customsearch/v1";
  std::string web_key_env = "WEB_SEARCH_API_KEY";
  std::string web_cx_env = "WEB_SEARCH_CX";
  std::string wikipedia = "https://en.wikipedia.org";
  std::string crossref = "https://api.crossref.org";
  std::string arxiv_site = "https://arxiv.org";
  std::string doi_resolver = "https://doi.org";
};

struct ToolSettings {
  std::size_t payload_budget = 8000;
  double network_timeout = 30.0;
  CacheMode cache_mode = CacheMode::live;
  std::string cache_dir;
  bool sandbox_enabled = false;
  double sandbox_wall_seconds = 10.0;
  std::size_t sandbox_memory_mb = 512;
  std::string python = "python3";
  SearchEndpoints endpoints;
};

ToolSettings tool_settings_from_json(const Json& j);
Json to_json(const ToolSettings& s);

/// Canonical cache key: sha256 of the tool name and the key-sorted parameter JSON.
std::string cache_key(const ToolCall& call);

using HttpGetFn = std::function<HttpResponse(const std::string& url, const std::map<std::string, std::string>& headers)>;

/// What the tools may see for one instance.
struct ToolContext {
  std::shared_ptr<const PaperDocument> document;
  // Directory that relative image and document paths resolve against.
  std::string base_dir = ".";
};

class ToolExecutor {
 public:
  ToolExecutor(std::shared_ptr<const ToolRegistry> registry, ToolSettings settings,
               std::shared_ptr<ChatClient> vision = nullptr, HttpGetFn http = {});

  /// Validates, routes and times the call. Every failure becomes an error result.
  ToolResult invoke(const ToolCall& call, const ToolContext& ctx) noexcept;

  const ToolRegistry& registry() const { return *registry_; }
  const ToolSettings& settings() const { return settings_; }

 private:
  std::string dispatch(const ToolCall& call, const ToolContext& ctx);
  std::string fetch(const std::string& url, const std::map<std::string, std::string>& headers = {});
  std::shared_ptr<const PaperDocument> resolve_document(const Json& params, const ToolContext& ctx);

  std::string online_fetcher(const Json& p, const ToolContext& ctx);
  std::string pdf_parser(const Json& p, const ToolContext& ctx);
  std::string xml_parser(const Json& p, const ToolContext& ctx);
  std::string abstract_collector(const Json& p, const ToolContext& ctx);
  std::string information_localizer(const Json& p, const ToolContext& ctx);
  std::string context_finder(const Json& p, const ToolContext& ctx);
  std::string section_extractor(const Json& p, const ToolContext& ctx);
  std::string arxiv_searcher(const Json& p);
  std::string pubmed_searcher(const Json& p);
  std::string semantic_scholar_searcher(const Json& p);
  std::string web_searcher(const Json& p);
  std::string wikipedia_searcher(const Json& p);
  std::string vision_tool(const ToolCall& call, const ToolContext& ctx);
  std::string sandbox_explorer(const Json& p);

  std::shared_ptr<const ToolRegistry> registry_;
  ToolSettings settings_;
  std::shared_ptr<ChatClient> vision_;
  HttpGetFn http_;
  std::mutex docs_mu_;
  std::map<std::string, std::shared_ptr<const PaperDocument>> fetched_;
};

/// Text extraction from PDF bytes: Flate-compressed and plain content streams,
/// text-showing operators only. Throws Error(MalformedSource) when nothing parses.
struct PdfText {
  std::string title;
  std::size_t pages = 0;
  std::string text;
};
PdfText extract_pdf_text(std::string_view bytes);

/// Readable outline of a parsed document: title, section tree, captions and,
/// when `full` is set, the prose.
std::string render_outline(const PaperDocument& doc, bool full);

}  // namespace sciana
