#include <algorithm>
#include <set>

#include "sciana/tools.hpp"

namespace sciana {

std::string_view to_string(Toolkit t) noexcept {
  switch (t) {
    case Toolkit::document: return "document";
    case Toolkit::knowledge: return "knowledge";
    case Toolkit::search: return "search";
    case Toolkit::vision: return "vision";
    case Toolkit::sandbox: return "sandbox";
  }
  return "document";
}

std::string_view to_string(ParamType t) noexcept {
  switch (t) {
    case ParamType::string: return "string";
    case ParamType::integer: return "integer";
    case ParamType::number: return "number";
    case ParamType::boolean: return "boolean";
    case ParamType::enumeration: return "enum";
    case ParamType::string_list: return "string list";
  }
  return "string";
}

const ParamSpec* ToolSpec::param(std::string_view n) const {
  for (const auto& p : params) {
    if (p.name == n) return &p;
  }
  return nullptr;
}

Json to_json(const ToolCall& c) {
  return Json{{"tool_name", c.tool_name}, {"params", c.params}, {"turn_index", c.turn_index}};
}

ToolCall tool_call_from_json(const Json& j) {
  ToolCall c;
  c.tool_name = j.at("tool_name").get<std::string>();
  c.params = j.value("params", Json::object());
  c.turn_index = j.value("turn_index", 0);
  return c;
}

namespace {

ParamSpec text(std::string name, std::string desc, bool required = false) {
  return {std::move(name), ParamType::string, required, {}, std::move(desc), true};
}
ParamSpec ident(std::string name, std::string desc, bool required = false) {
  return {std::move(name), ParamType::string, required, {}, std::move(desc), false};
}
ParamSpec integer(std::string name, std::string desc) {
  return {std::move(name), ParamType::integer, false, {}, std::move(desc), false};
}
ParamSpec number(std::string name, std::string desc) {
  return {std::move(name), ParamType::number, false, {}, std::move(desc), false};
}
ParamSpec flag(std::string name, std::string desc) {
  return {std::move(name), ParamType::boolean, false, {}, std::move(desc), false};
}
ParamSpec choice(std::string name, std::vector<std::string> choices, std::string desc) {
  return {std::move(name), ParamType::enumeration, false, std::move(choices), std::move(desc), false};
}
ParamSpec list(std::string name, std::string desc) {
  return {std::move(name), ParamType::string_list, false, {}, std::move(desc), false};
}

std::vector<ToolSpec> standard_specs() {
  std::vector<ToolSpec> s;
  s.push_back({"online_fetcher", Toolkit::document,
               "Fetch and parse a document from arXiv, Semantic Scholar, PubMed Central or a general URL.",
               {ident("url", "document URL"),
                choice("source_type", {"arxiv", "semantic_scholar", "pubmed", "web"}, "where the document lives"),
                choice("preferred_format", {"html", "latex", "xml", "pdf"}, "format to request"),
                ident("doi", "DOI"), ident("paper_id", "arXiv id or PMC id"), text("query", "search query")},
               {"url", "doi", "paper_id", "query"}});
  s.push_back({"pdf_parser", Toolkit::document, "Extract text and metadata from a PDF document.",
               {ident("url", "PDF URL"), ident("path", "local PDF path"), ident("bytes", "base64 PDF bytes"),
                flag("save_images", "accepted for compatibility; images are not extracted")},
               {"url", "path", "bytes"}});
  s.push_back({"xml_parser", Toolkit::document, "Parse an XML document into metadata and a section outline.",
               {ident("url", "XML URL"), ident("path", "local XML path"), ident("xml", "XML string"),
                ident("bytes", "base64 XML bytes"), choice("detail", {"outline", "full"}, "outline or full text")},
               {"url", "path", "xml", "bytes"}});
  s.push_back({"abstract_collector", Toolkit::knowledge,
               "Collect a paper abstract by title, arXiv id, PMID, DOI, URL or local path.",
               {text("title", "paper title"), text("author", "author name"), integer("year", "publication year"),
                ident("url", "paper URL"), ident("doi", "DOI"), ident("arxiv_id", "arXiv id"), ident("pmid", "PubMed id"),
                ident("path", "local source path")},
               {"title", "url", "doi", "arxiv_id", "pmid", "path"}});
  s.push_back({"information_localizer", Toolkit::knowledge,
               "Locate the complete section, table, figure or equation matching a search string.",
               {text("query", "keyword, phrase, caption, title or equation", true), ident("url", "document URL"),
                ident("path", "local source path")},
               {}});
  s.push_back({"context_finder", Toolkit::knowledge,
               "Locate a search string and return every element that cites it or is cited by it, level by level.",
               {text("query", "keyword, phrase, caption, label or title", true),
                integer("depth", "number of reference hops (default 1)"), ident("url", "document URL"),
                ident("path", "local source path")},
               {}});
  s.push_back({"section_extractor", Toolkit::knowledge,
               "Extract complete sections by keyword, title or number (for example 3 or 3.2).",
               {text("section", "section keyword, title or number", true), ident("url", "document URL"),
                ident("path", "local source path")},
               {}});
  s.push_back({"arxiv_searcher", Toolkit::search, "Search arXiv preprints.",
               {text("query", "search terms", true), text("title", "title words"), text("author", "author name"),
                ident("category", "arXiv category such as cs.CL"),
                choice("sort", {"relevance", "lastUpdatedDate", "submittedDate"}, "sort order"),
                integer("max_results", "number of results (default 5)")},
               {}});
  s.push_back({"pubmed_searcher", Toolkit::search, "Search biomedical literature in PubMed.",
               {text("query", "search terms", true), text("author", "author name"), ident("pmid", "PubMed id"),
                ident("date_from", "YYYY/MM/DD"), ident("date_to", "YYYY/MM/DD"),
                choice("sort", {"relevance", "pub_date"}, "sort order"),
                integer("max_results", "number of results (default 5)")},
               {}});
  s.push_back({"semantic_scholar_searcher", Toolkit::search, "Search literature through the Semantic Scholar API.",
               {text("query", "search terms", true), ident("year", "year or range such as 2020-2024"),
                text("field", "field of study"), text("venue", "venue name"),
                integer("min_citations", "minimum citation count"),
                integer("max_results", "number of results (default 5)")},
               {}});
  s.push_back({"web_searcher", Toolkit::search, "Search the web.",
               {text("query", "search string", true), integer("max_results", "number of results (default 5)"),
                ident("date_restrict", "recency filter such as d7, m6, y1"), ident("language", "language code"),
                choice("search_level", {"basic", "advanced"}, "search depth")},
               {}});
  s.push_back({"wikipedia_searcher", Toolkit::search,
               "Search Wikipedia concepts and articles. Mode auto searches and summarises the best hit.",
               {text("query", "search string", true), text("title", "exact article title"),
                choice("mode", {"auto", "search", "summary", "extract", "links", "categories"}, "which API to use"),
                integer("max_results", "number of results (default 5)"), ident("language", "wiki language code")},
               {}});
  s.push_back({"ocr_extractor", Toolkit::vision, "Read the text in an image.",
               {ident("image", "image path or figure label", true), ident("language", "expected language"),
                ident("bbox", "region as x,y,width,height"), number("threshold", "confidence threshold")},
               {}});
  s.push_back({"figure_parser", Toolkit::vision, "Extract the visual information of a scientific figure.",
               {ident("image", "image path or figure label", true), text("query", "what to extract"),
                text("contexts", "surrounding text")},
               {}});
  s.push_back({"image_analyzer", Toolkit::vision, "Answer a question about an image.",
               {ident("image", "image path or figure label", true), text("query", "question about the image"),
                text("focus", "region or element of interest"), choice("detail_level", {"low", "high"}, "detail"),
                text("contexts", "surrounding text")},
               {}});
  s.push_back({"sandbox_explorer", Toolkit::sandbox, "Run Python code in a resource-limited local sandbox.",
               {ident("code", "Python source", true), list("dependencies", "packages the code expects")},
               {}});
  return s;
}

bool type_matches(const Json& v, ParamType t) {
  switch (t) {
    case ParamType::string:
    case ParamType::enumeration: return v.is_string();
    case ParamType::integer: return v.is_number_integer();
    case ParamType::number: return v.is_number();
    case ParamType::boolean: return v.is_boolean();
    case ParamType::string_list:
      if (!v.is_array()) return false;
      return std::all_of(v.begin(), v.end(), [](const Json& e) { return e.is_string(); });
  }
  return false;
}

}  // namespace

ToolRegistry::ToolRegistry(std::vector<ToolSpec> specs) : specs_(std::move(specs)) {
  std::set<std::string> seen;
  for (const auto& s : specs_) {
    if (!seen.insert(s.name).second) throw Error(ErrorCode::InvalidConfig, "duplicate tool " + s.name);
  }
}

std::shared_ptr<const ToolRegistry> ToolRegistry::standard() {
  static const auto reg = std::make_shared<const ToolRegistry>(standard_specs());
  return reg;
}

const ToolSpec* ToolRegistry::find(std::string_view name) const {
  for (const auto& s : specs_) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

std::optional<SchemaViolation> ToolRegistry::validate(const ToolCall& call) const {
  const ToolSpec* spec = find(call.tool_name);
  if (!spec) return SchemaViolation{"unknown_tool", "", "no tool named '" + call.tool_name + "'"};
  if (!call.params.is_object()) return SchemaViolation{"not_object", "", "parameters must be a JSON object"};
  for (const auto& [key, value] : call.params.items()) {
    const ParamSpec* p = spec->param(key);
    if (!p) return SchemaViolation{"unknown_param", key, call.tool_name + " has no parameter '" + key + "'"};
    if (!type_matches(value, p->type)) {
      return SchemaViolation{"type", key, "'" + key + "' must be " + std::string(to_string(p->type))};
    }
    if (p->type == ParamType::enumeration &&
        std::find(p->choices.begin(), p->choices.end(), value.get<std::string>()) == p->choices.end()) {
      return SchemaViolation{"enum", key, "'" + value.get<std::string>() + "' is not a valid " + key};
    }
  }
  for (const auto& p : spec->params) {
    if (p.required && !call.params.contains(p.name)) {
      return SchemaViolation{"missing", p.name, "'" + p.name + "' is required"};
    }
  }
  if (!spec->any_of.empty() &&
      std::none_of(spec->any_of.begin(), spec->any_of.end(),
                   [&](const std::string& n) { return call.params.contains(n); })) {
    std::string names;
    for (const auto& n : spec->any_of) names += (names.empty() ? "" : ", ") + n;
    return SchemaViolation{"missing", spec->any_of.front(), "one of " + names + " is required"};
  }
  return std::nullopt;
}

std::string ToolRegistry::describe(const std::vector<std::string>& only) const {
  std::string out;
  for (const auto& s : specs_) {
    if (!only.empty() && std::find(only.begin(), only.end(), s.name) == only.end()) continue;
    out += "- " + s.name + " (" + std::string(to_string(s.toolkit)) + " toolkit): " + s.description + "\n";
    for (const auto& p : s.params) {
      out += "    " + p.name + " [" + std::string(to_string(p.type));
      if (!p.choices.empty()) {
        out += ": ";
        for (std::size_t k = 0; k < p.choices.size(); ++k) out += (k ? "|" : "") + p.choices[k];
      }
      out += p.required ? ", required" : ", optional";
      out += "] " + p.description + "\n";
    }
    if (!s.any_of.empty()) {
      out += "    at least one of:";
      for (const auto& n : s.any_of) out += " " + n;
      out += "\n";
    }
  }
  out +=
      "\nTo call a tool, enclose its name in <tool></tool> and its parameters as one JSON object in "
      "<params></params>, for example:\n<tool>arxiv_searcher</tool>\n<params>{\"query\": \"graph neural networks\", "
      "\"max_results\": 5}</params>\n";
  return out;
}

}  // namespace sciana
