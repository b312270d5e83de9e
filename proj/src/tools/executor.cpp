#include <algorithm>
#include <chrono>
#include <filesystem>

#include "document/scan.hpp"
#include "internal.hpp"
#include "sciana/corpus.hpp"

namespace sciana {

using detail::ToolFailure;

std::string_view to_string(CacheMode m) noexcept {
  switch (m) {
    case CacheMode::live: return "live";
    case CacheMode::record: return "record";
    case CacheMode::replay: return "replay";
  }
  return "live";
}

CacheMode parse_cache_mode(std::string_view s) {
  if (s == "live") return CacheMode::live;
  if (s == "record") return CacheMode::record;
  if (s == "replay") return CacheMode::replay;
  throw Error(ErrorCode::InvalidConfig, "unknown cache mode " + std::string(s));
}

ToolSettings tool_settings_from_json(const Json& j) {
  ToolSettings s;
  s.payload_budget = j.value("payload_budget", s.payload_budget);
  s.network_timeout = j.value("network_timeout", s.network_timeout);
  if (j.contains("cache_mode")) s.cache_mode = parse_cache_mode(j["cache_mode"].get<std::string>());
  s.cache_dir = j.value("cache_dir", s.cache_dir);
  s.sandbox_enabled = j.value("sandbox_enabled", s.sandbox_enabled);
  s.sandbox_wall_seconds = j.value("sandbox_wall_seconds", s.sandbox_wall_seconds);
  s.sandbox_memory_mb = j.value("sandbox_memory_mb", s.sandbox_memory_mb);
  s.python = j.value("python", s.python);
  if (j.contains("endpoints")) {
    const auto& e = j["endpoints"];
    auto& d = s.endpoints;
    d.arxiv = e.value("arxiv", d.arxiv);
    d.eutils = e.value("eutils", d.eutils);
    d.semantic_scholar = e.value("semantic_scholar", d.semantic_scholar);
    d.semantic_scholar_key_env = e.value("semantic_scholar_key_env", d.semantic_scholar_key_env);
    d.web = e.value("web", d.web);
    d.web_key_env = e.value("web_key_env", d.web_key_env);
    d.web_cx_env = e.value("web_cx_env", d.web_cx_env);
    d.wikipedia = e.value("wikipedia", d.wikipedia);
    d.crossref = e.value("crossref", d.crossref);
    d.arxiv_site = e.value("arxiv_site", d.arxiv_site);
    d.doi_resolver = e.value("doi_resolver", d.doi_resolver);
  }
  if (s.payload_budget == 0) throw Error(ErrorCode::InvalidConfig, "tools.payload_budget must be positive");
  if (s.network_timeout <= 0) throw Error(ErrorCode::InvalidConfig, "tools.network_timeout must be positive");
  if (s.cache_mode != CacheMode::live && s.cache_dir.empty()) {
    throw Error(ErrorCode::InvalidConfig, "tools.cache_dir is required for record and replay modes");
  }
  return s;
}

Json to_json(const ToolSettings& s) {
  const auto& e = s.endpoints;
  return Json{{"payload_budget", s.payload_budget},
              {"network_timeout", s.network_timeout},
              {"cache_mode", to_string(s.cache_mode)},
              {"cache_dir", s.cache_dir},
              {"sandbox_enabled", s.sandbox_enabled},
              {"sandbox_wall_seconds", s.sandbox_wall_seconds},
              {"sandbox_memory_mb", s.sandbox_memory_mb},
              {"python", s.python},
              {"endpoints",
               {{"arxiv", e.arxiv},
                {"eutils", e.eutils},
                {"semantic_scholar", e.semantic_scholar},
                {"semantic_scholar_key_env", e.semantic_scholar_key_env},
                {"web", e.web},
                {"web_key_env", e.web_key_env},
                {"web_cx_env", e.web_cx_env},
                {"wikipedia", e.wikipedia},
                {"crossref", e.crossref},
                {"arxiv_site", e.arxiv_site},
                {"doi_resolver", e.doi_resolver}}}};
}

Json to_json(const ToolResult& r) {
  Json j{{"status", r.status == ToolStatus::ok ? "ok" : "error"},
         {"payload", r.payload},
         {"latency_ms", r.latency_ms},
         {"truncated", r.truncated},
         {"cached", r.cached}};
  if (r.error_kind) j["error_kind"] = *r.error_kind;
  return j;
}

ToolResult tool_result_from_json(const Json& j) {
  ToolResult r;
  r.status = j.value("status", "ok") == "ok" ? ToolStatus::ok : ToolStatus::error;
  r.payload = j.value("payload", "");
  if (j.contains("error_kind")) r.error_kind = j["error_kind"].get<std::string>();
  r.latency_ms = j.value("latency_ms", 0.0);
  r.truncated = j.value("truncated", false);
  r.cached = j.value("cached", false);
  return r;
}

std::string cache_key(const ToolCall& call) {
  // nlohmann::json keeps object keys sorted, which canonicalises the parameters.
  const nlohmann::json canonical = nlohmann::json::parse(call.params.dump());
  return sha256_hex(call.tool_name + "\n" + canonical.dump());
}

namespace detail {

std::string param_string(const Json& p, const char* name, std::string fallback) {
  if (p.contains(name) && p[name].is_string()) return p[name].get<std::string>();
  return fallback;
}

long long param_int(const Json& p, const char* name, long long fallback) {
  if (p.contains(name) && p[name].is_number_integer()) return p[name].get<long long>();
  return fallback;
}

std::string first_tag(std::string_view s, std::string_view name, std::size_t from) {
  const std::string open = "<" + std::string(name);
  const std::string close = "</" + std::string(name) + ">";
  std::size_t at = from;
  while ((at = s.find(open, at)) != std::string_view::npos) {
    const std::size_t after = at + open.size();
    if (after < s.size() && (s[after] == '>' || s[after] == ' ' || s[after] == '\n' || s[after] == '\t')) break;
    at = after;
  }
  if (at == std::string_view::npos) return {};
  const auto gt = s.find('>', at);
  if (gt == std::string_view::npos) return {};
  if (s[gt - 1] == '/') return {};
  const auto end = s.find(close, gt + 1);
  if (end == std::string_view::npos) return {};
  return std::string(s.substr(gt + 1, end - gt - 1));
}

std::vector<std::string> all_tags(std::string_view s, std::string_view name) {
  std::vector<std::string> out;
  const std::string open = "<" + std::string(name);
  const std::string close = "</" + std::string(name) + ">";
  std::size_t at = 0;
  while ((at = s.find(open, at)) != std::string_view::npos) {
    const std::size_t after = at + open.size();
    if (after >= s.size() || !(s[after] == '>' || s[after] == ' ' || s[after] == '\n' || s[after] == '\t')) {
      at = after;
      continue;
    }
    const auto gt = s.find('>', at);
    if (gt == std::string_view::npos) break;
    const auto end = s.find(close, gt + 1);
    if (end == std::string_view::npos) break;
    out.emplace_back(s.substr(gt + 1, end - gt - 1));
    at = end + close.size();
  }
  return out;
}

std::string html_to_text(std::string_view html) {
  std::string s(html);
  for (const char* tag : {"script", "style", "noscript"}) {
    const std::string open = std::string("<") + tag;
    const std::string close = std::string("</") + tag + ">";
    std::size_t at = 0;
    while ((at = s.find(open, at)) != std::string::npos) {
      const auto end = s.find(close, at);
      s.erase(at, end == std::string::npos ? std::string::npos : end + close.size() - at);
    }
  }
  return normalize_whitespace(strip_tags(s));
}

SniffedFormat sniff(std::string_view body) {
  const std::string head = to_lower_ascii(body.substr(0, 2048));
  if (starts_with(body, "%PDF")) return SniffedFormat::pdf;
  const std::string t = trim(head);
  if (contains(head, "<!doctype html") || contains(head, "<html")) return SniffedFormat::html;
  if (starts_with(t, "<?xml") || starts_with(t, "<article") || starts_with(t, "<!doctype article") ||
      starts_with(t, "<pmc-articleset") || starts_with(t, "<feed")) {
    return SniffedFormat::xml;
  }
  if (contains(body, "\\begin{document}") || contains(body, "\\documentclass")) return SniffedFormat::latex;
  return SniffedFormat::text;
}

std::string element_heading(const DocElement& el) {
  std::string h = "[" + std::string(to_string(el.kind)) + " " + el.element_id;
  if (el.label) h += " | " + *el.label;
  h += "]";
  if (!el.title.empty()) h += " " + el.title;
  return h;
}

std::string element_text(const PaperDocument& doc, const DocElement& el) {
  std::string out = element_heading(el) + "\n";
  if (el.caption) out += "Caption: " + *el.caption + "\n";
  if (el.image_ref) out += "Image: " + *el.image_ref + "\n";
  if (el.kind == ElementKind::table || el.kind == ElementKind::equation) {
    out += el.body + "\n";
  } else if (el.span.end > el.span.start && el.span.end <= doc.raw.size()) {
    out += clean_prose(doc.format, std::string_view(doc.raw).substr(el.span.start, el.span.end - el.span.start)) +
           "\n";
  }
  return out;
}

}  // namespace detail

ToolExecutor::ToolExecutor(std::shared_ptr<const ToolRegistry> registry, ToolSettings settings,
                           std::shared_ptr<ChatClient> vision, HttpGetFn http)
    : registry_(std::move(registry)), settings_(std::move(settings)), vision_(std::move(vision)), http_(std::move(http)) {
  if (!registry_) throw Error(ErrorCode::InvalidArgument, "tool executor needs a registry");
}

namespace {

bool cacheable(const ToolSpec& spec, const Json& params) {
  if (spec.toolkit == Toolkit::search) return true;
  if (spec.name == "online_fetcher") return true;
  if (spec.name == "abstract_collector") return !params.contains("path");
  return params.contains("url");
}

std::string error_kind_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::TransientFailure: {
      const std::string what = to_lower_ascii(e.what());
      return contains(what, "timeout") ? "timeout" : "network_failure";
    }
    case ErrorCode::BackendUnavailable: return "backend_unavailable";
    case ErrorCode::NotFound:
    case ErrorCode::UnknownTarget: return "not_found";
    case ErrorCode::MalformedSource:
    case ErrorCode::ResponseMalformed: return "parse_failure";
    case ErrorCode::InvalidArgument:
    case ErrorCode::EmptyInput: return "invalid_argument";
    case ErrorCode::Io: return "not_found";
    default: return "internal";
  }
}

}  // namespace

ToolResult ToolExecutor::invoke(const ToolCall& call, const ToolContext& ctx) noexcept {
  const auto start = std::chrono::steady_clock::now();
  ToolResult r;
  auto finish = [&](ToolResult& res) -> ToolResult {
    res.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (res.payload.size() > settings_.payload_budget) {
      res.payload = truncate_utf8(res.payload, settings_.payload_budget);
      res.truncated = true;
    }
    return res;
  };
  auto fail = [&](std::string kind, std::string message) {
    ToolResult res;
    res.status = ToolStatus::error;
    res.error_kind = std::move(kind);
    res.payload = std::move(message);
    return finish(res);
  };
  try {
    if (auto v = registry_->validate(call)) return fail("schema_violation", v->kind + ": " + v->detail);
    const ToolSpec& spec = *registry_->find(call.tool_name);
    const bool use_cache = settings_.cache_mode != CacheMode::live && cacheable(spec, call.params);
    const std::filesystem::path fixture =
        use_cache ? std::filesystem::path(settings_.cache_dir) / (cache_key(call) + ".json") : std::filesystem::path();
    if (use_cache && settings_.cache_mode == CacheMode::replay) {
      if (!std::filesystem::exists(fixture)) {
        return fail("replay_miss", "no recorded response for " + call.tool_name + " (" + fixture.filename().string() +
                                       ")");
      }
      const Json rec = Json::parse(read_file(fixture.string()));
      if (rec.value("status", "ok") != "ok") {
        return fail(rec.value("error_kind", "network_failure"), rec.value("body", ""));
      }
      r.payload = rec.value("body", "");
      r.cached = true;
      return finish(r);
    }
    r.payload = dispatch(call, ctx);
    if (use_cache && settings_.cache_mode == CacheMode::record) {
      std::filesystem::create_directories(settings_.cache_dir);
      const Json rec{{"tool", call.tool_name}, {"params", call.params}, {"status", "ok"}, {"body", r.payload}};
      write_file(fixture.string(), rec.dump(2) + "\n");
    }
    return finish(r);
  } catch (const ToolFailure& e) {
    return fail(e.kind(), e.what());
  } catch (const Error& e) {
    return fail(error_kind_for(e), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  } catch (...) {
    return fail("internal", "unknown failure");
  }
}

std::string ToolExecutor::dispatch(const ToolCall& call, const ToolContext& ctx) {
  const auto& n = call.tool_name;
  const auto& p = call.params;
  if (n == "online_fetcher") return online_fetcher(p, ctx);
  if (n == "pdf_parser") return pdf_parser(p, ctx);
  if (n == "xml_parser") return xml_parser(p, ctx);
  if (n == "abstract_collector") return abstract_collector(p, ctx);
  if (n == "information_localizer") return information_localizer(p, ctx);
  if (n == "context_finder") return context_finder(p, ctx);
  if (n == "section_extractor") return section_extractor(p, ctx);
  if (n == "arxiv_searcher") return arxiv_searcher(p);
  if (n == "pubmed_searcher") return pubmed_searcher(p);
  if (n == "semantic_scholar_searcher") return semantic_scholar_searcher(p);
  if (n == "web_searcher") return web_searcher(p);
  if (n == "wikipedia_searcher") return wikipedia_searcher(p);
  if (n == "ocr_extractor" || n == "figure_parser" || n == "image_analyzer") return vision_tool(call, ctx);
  if (n == "sandbox_explorer") return sandbox_explorer(p);
  throw ToolFailure("internal", "tool " + n + " has no implementation");
}

std::string ToolExecutor::fetch(const std::string& url, const std::map<std::string, std::string>& headers) {
  HttpResponse resp = http_ ? http_(url, headers) : http_get(url, headers, settings_.network_timeout);
  if (resp.status == 200) return resp.body;
  if (resp.status == 404 || resp.status == 410) {
    throw ToolFailure("not_found", "HTTP " + std::to_string(resp.status) + " from " + url);
  }
  if (resp.status == 408 || resp.status == 504) {
    throw ToolFailure("timeout", "HTTP " + std::to_string(resp.status) + " from " + url);
  }
  throw ToolFailure("network_failure", "HTTP " + std::to_string(resp.status) + " from " + url);
}

std::shared_ptr<const PaperDocument> ToolExecutor::resolve_document(const Json& params, const ToolContext& ctx) {
  const std::string path = detail::param_string(params, "path");
  const std::string url = detail::param_string(params, "url");
  if (path.empty() && url.empty()) {
    if (!ctx.document) throw ToolFailure("not_found", "no document is loaded; pass a path or url");
    return ctx.document;
  }
  std::string key;
  if (!path.empty()) {
    const auto p = std::filesystem::path(path).is_absolute() ? std::filesystem::path(path)
                                                             : std::filesystem::path(ctx.base_dir) / path;
    key = "path:" + p.lexically_normal().string();
    {
      std::lock_guard<std::mutex> lock(docs_mu_);
      if (auto it = fetched_.find(key); it != fetched_.end()) return it->second;
    }
    auto doc = std::make_shared<PaperDocument>(load_document(p.string()));
    if (doc->parse_failed) throw ToolFailure("parse_failure", "could not parse " + path);
    std::lock_guard<std::mutex> lock(docs_mu_);
    return fetched_.emplace(key, std::move(doc)).first->second;
  }
  key = "url:" + url;
  {
    std::lock_guard<std::mutex> lock(docs_mu_);
    if (auto it = fetched_.find(key); it != fetched_.end()) return it->second;
  }
  std::string body = fetch(url);
  const auto kind = detail::sniff(body);
  if (kind != detail::SniffedFormat::xml && kind != detail::SniffedFormat::latex) {
    throw ToolFailure("parse_failure", url + " is not a LaTeX or XML source");
  }
  PaperMeta meta;
  meta.paper_id = url;
  meta.year = 2000;
  auto doc = std::make_shared<PaperDocument>(parse_document(
      std::move(body), kind == detail::SniffedFormat::xml ? SourceFormat::xml : SourceFormat::latex, meta));
  std::lock_guard<std::mutex> lock(docs_mu_);
  return fetched_.emplace(key, std::move(doc)).first->second;
}

std::string render_outline(const PaperDocument& doc, bool full) {
  std::string out;
  if (!doc.meta.title.empty()) out += "Title: " + doc.meta.title + "\n";
  out += "Format: " + std::string(to_string(doc.format)) + "\n";
  for (const auto& el : doc.elements) {
    if (el.embedded) continue;
    switch (el.kind) {
      case ElementKind::section:
        out += "\n" + std::string(static_cast<std::size_t>(std::max(1, el.level)), '#') + " " + el.title + "\n";
        if (full) out += clean_prose(doc.format, el.prose) + "\n";
        break;
      case ElementKind::table:
      case ElementKind::figure:
        out += detail::element_heading(el) + (el.caption ? " " + *el.caption : std::string()) + "\n";
        break;
      case ElementKind::paragraph:
        if (el.label && *el.label == "abstract") {
          out += "Abstract: " + clean_prose(doc.format, el.prose) + "\n";
        } else if (full && el.parent_id.empty()) {
          out += clean_prose(doc.format, el.prose) + "\n";
        }
        break;
      default: break;
    }
  }
  return out;
}

std::string ToolExecutor::xml_parser(const Json& p, const ToolContext& ctx) {
  const bool full = detail::param_string(p, "detail", "outline") == "full";
  if (p.contains("xml") || p.contains("bytes")) {
    std::string raw = p.contains("xml") ? p["xml"].get<std::string>() : base64_decode(p["bytes"].get<std::string>());
    PaperMeta meta;
    meta.paper_id = "inline";
    const auto doc = parse_document(std::move(raw), SourceFormat::xml, meta);
    return render_outline(doc, full);
  }
  const auto doc = resolve_document(p, ctx);
  if (doc->format != SourceFormat::xml) throw ToolFailure("parse_failure", "source is not XML");
  return render_outline(*doc, full);
}

std::string ToolExecutor::pdf_parser(const Json& p, const ToolContext& ctx) {
  std::string bytes;
  if (p.contains("bytes")) {
    bytes = base64_decode(p["bytes"].get<std::string>());
  } else if (p.contains("path")) {
    const auto path = std::filesystem::path(ctx.base_dir) / p["path"].get<std::string>();
    bytes = read_file(std::filesystem::path(p["path"].get<std::string>()).is_absolute() ? p["path"].get<std::string>()
                                                                                         : path.string());
  } else {
    bytes = fetch(p["url"].get<std::string>());
  }
  const auto pdf = extract_pdf_text(bytes);
  std::string out;
  if (!pdf.title.empty()) out += "Title: " + pdf.title + "\n";
  out += "Pages: " + std::to_string(pdf.pages) + "\n\n" + pdf.text;
  return out;
}

std::string ToolExecutor::information_localizer(const Json& p, const ToolContext& ctx) {
  const auto doc = resolve_document(p, ctx);
  const std::string query = p["query"].get<std::string>();
  auto hits = locate_element(*doc, query);
  if (hits.empty()) {
    // Case-insensitive second pass over the same fields.
    const std::string q = to_lower_ascii(normalize_whitespace(query));
    for (const auto& el : doc->elements) {
      const std::string hay = to_lower_ascii(normalize_whitespace(
          el.title + " " + el.caption.value_or("") + " " + el.label.value_or("") + " " +
          (el.kind == ElementKind::section ? el.prose : el.body)));
      if (!q.empty() && contains(hay, q)) hits.push_back(&el);
    }
  }
  if (hits.empty()) return "No element matches \"" + query + "\".";
  std::string out;
  for (const auto* el : hits) out += detail::element_text(*doc, *el) + "\n";
  return out;
}

std::string ToolExecutor::context_finder(const Json& p, const ToolContext& ctx) {
  const auto doc = resolve_document(p, ctx);
  const std::string query = p["query"].get<std::string>();
  const int depth = static_cast<int>(std::clamp<long long>(detail::param_int(p, "depth", 1), 1, 4));
  const DocElement* target = doc->find(query);
  if (!target) target = doc->find_by_label(query);
  if (!target) {
    const auto hits = locate_element(*doc, query);
    if (!hits.empty()) target = hits.front();
  }
  if (!target) return "No element matches \"" + query + "\".";
  const auto graph = build_reference_graph(*doc);
  const auto ctxset = retrieve_context(graph, target->element_id, depth, true);
  std::string out = "Target: " + detail::element_heading(*target) + "\n";
  for (std::size_t lvl = 0; lvl < ctxset.levels.size(); ++lvl) {
    out += "\nLevel " + std::to_string(lvl + 1) + ":\n";
    for (const auto& id : ctxset.levels[lvl]) {
      if (const DocElement* el = doc->find(id)) {
        out += detail::element_text(*doc, *el);
      } else {
        out += "[external " + id + "]\n";
      }
    }
  }
  return out;
}

std::string ToolExecutor::section_extractor(const Json& p, const ToolContext& ctx) {
  const auto doc = resolve_document(p, ctx);
  const std::string wanted = trim(p["section"].get<std::string>());
  // Section numbers follow document order per level: 1, 1.1, 1.2, 2, ...
  std::vector<int> counters(4, 0);
  std::vector<std::pair<std::string, const DocElement*>> numbered;
  for (const auto& el : doc->elements) {
    if (el.kind != ElementKind::section) continue;
    const int lvl = std::clamp(el.level, 1, 3);
    ++counters[static_cast<std::size_t>(lvl)];
    for (int k = lvl + 1; k <= 3; ++k) counters[static_cast<std::size_t>(k)] = 0;
    std::string num;
    for (int k = 1; k <= lvl; ++k) num += (k > 1 ? "." : "") + std::to_string(counters[static_cast<std::size_t>(k)]);
    numbered.emplace_back(num, &el);
  }
  std::vector<const DocElement*> hits;
  const bool numeric = !wanted.empty() && std::all_of(wanted.begin(), wanted.end(), [](char c) {
    return std::isdigit(static_cast<unsigned char>(c)) || c == '.';
  });
  const std::string q = to_lower_ascii(normalize_whitespace(wanted));
  for (const auto& [num, el] : numbered) {
    if (numeric ? num == wanted
                : (contains(to_lower_ascii(el->title), q) || (el->label && to_lower_ascii(*el->label) == q))) {
      hits.push_back(el);
    }
  }
  if (hits.empty()) return "No section matches \"" + wanted + "\".";
  std::string out;
  for (const auto* el : hits) out += detail::element_text(*doc, *el) + "\n";
  return out;
}

}  // namespace sciana
