#include <cstdlib>
#include <regex>

#include "document/scan.hpp"
#include "internal.hpp"

namespace sciana {

using detail::param_int;
using detail::param_string;
using detail::ToolFailure;

namespace {

Json parse_json_body(const std::string& body, const std::string& source) {
  try {
    return Json::parse(body);
  } catch (const Json::exception&) {
    throw ToolFailure("parse_failure", source + " returned malformed JSON");
  }
}

std::string env_or_empty(const std::string& name) {
  if (name.empty()) return {};
  const char* v = std::getenv(name.c_str());
  return v ? std::string(v) : std::string();
}

int result_count(const Json& p) { return static_cast<int>(std::clamp<long long>(param_int(p, "max_results", 5), 1, 50)); }

std::string clean(std::string_view s) { return normalize_whitespace(detail::decode_entities(detail::strip_tags(s))); }

std::string format_arxiv_feed(const std::string& body) {
  const auto entries = detail::all_tags(body, "entry");
  if (entries.empty()) return "No arXiv results.";
  std::string out;
  int k = 0;
  for (const auto& e : entries) {
    out += std::to_string(++k) + ". " + clean(detail::first_tag(e, "title")) + "\n";
    std::string authors;
    for (const auto& a : detail::all_tags(e, "author")) {
      authors += (authors.empty() ? "" : ", ") + clean(detail::first_tag(a, "name"));
    }
    if (!authors.empty()) out += "   Authors: " + authors + "\n";
    out += "   Published: " + clean(detail::first_tag(e, "published")) + "\n";
    out += "   Id: " + clean(detail::first_tag(e, "id")) + "\n";
    out += "   Abstract: " + clean(detail::first_tag(e, "summary")) + "\n";
  }
  return out;
}

std::string s2_fields() { return "title,abstract,year,venue,citationCount,url,authors"; }

std::string format_s2_paper(const Json& p) {
  std::string out = p.value("title", std::string("(untitled)")) + "\n";
  if (p.contains("year") && p["year"].is_number()) out += "   Year: " + std::to_string(p["year"].get<int>()) + "\n";
  if (p.contains("venue") && p["venue"].is_string() && !p["venue"].get<std::string>().empty()) {
    out += "   Venue: " + p["venue"].get<std::string>() + "\n";
  }
  if (p.contains("citationCount") && p["citationCount"].is_number()) {
    out += "   Citations: " + std::to_string(p["citationCount"].get<long long>()) + "\n";
  }
  if (p.contains("authors") && p["authors"].is_array()) {
    std::string names;
    for (const auto& a : p["authors"]) {
      if (a.contains("name") && a["name"].is_string()) names += (names.empty() ? "" : ", ") + a["name"].get<std::string>();
    }
    if (!names.empty()) out += "   Authors: " + names + "\n";
  }
  if (p.contains("url") && p["url"].is_string()) out += "   URL: " + p["url"].get<std::string>() + "\n";
  if (p.contains("abstract") && p["abstract"].is_string()) out += "   Abstract: " + p["abstract"].get<std::string>() + "\n";
  return out;
}

std::string wiki_base(const std::string& site, const std::string& lang) {
  if (lang.empty() || lang == "en") return site;
  const auto at = site.find("://en.");
  if (at == std::string::npos) return site;
  return site.substr(0, at + 3) + lang + site.substr(at + 5);
}

std::optional<std::string> arxiv_id_from_url(const std::string& url) {
  static const std::regex re(R"(arxiv\.org/(?:abs|pdf)/([0-9]{4}\.[0-9]{4,5}(?:v[0-9]+)?|[a-z\-]+/[0-9]{7}))");
  std::smatch m;
  if (std::regex_search(url, m, re)) return m[1].str();
  return std::nullopt;
}

}  // namespace

std::string ToolExecutor::arxiv_searcher(const Json& p) {
  std::string q = "all:" + p["query"].get<std::string>();
  if (p.contains("title")) q += " AND ti:" + p["title"].get<std::string>();
  if (p.contains("author")) q += " AND au:" + p["author"].get<std::string>();
  if (p.contains("category")) q += " AND cat:" + p["category"].get<std::string>();
  std::string url = settings_.endpoints.arxiv + "?search_query=" + url_encode(q) +
                    "&start=0&max_results=" + std::to_string(result_count(p));
  const std::string sort = param_string(p, "sort");
  if (!sort.empty()) url += "&sortBy=" + sort + "&sortOrder=descending";
  return format_arxiv_feed(fetch(url));
}

std::string ToolExecutor::pubmed_searcher(const Json& p) {
  const auto& base = settings_.endpoints.eutils;
  std::vector<std::string> ids;
  if (p.contains("pmid")) {
    ids.push_back(p["pmid"].get<std::string>());
  } else {
    std::string term = p["query"].get<std::string>();
    if (p.contains("author")) term += " AND " + p["author"].get<std::string>() + "[au]";
    std::string url = base + "/esearch.fcgi?db=pubmed&retmode=json&retmax=" + std::to_string(result_count(p)) +
                      "&term=" + url_encode(term);
    if (p.contains("date_from") || p.contains("date_to")) {
      url += "&datetype=pdat&mindate=" + url_encode(param_string(p, "date_from", "1800/01/01")) +
             "&maxdate=" + url_encode(param_string(p, "date_to", "3000/12/31"));
    }
    if (param_string(p, "sort") == "pub_date") url += "&sort=pub_date";
    const Json j = parse_json_body(fetch(url), "PubMed esearch");
    if (!j.contains("esearchresult")) throw ToolFailure("parse_failure", "PubMed esearch reply has no result");
    for (const auto& id : j["esearchresult"].value("idlist", Json::array())) ids.push_back(id.get<std::string>());
  }
  if (ids.empty()) return "No PubMed results.";
  std::string joined;
  for (const auto& id : ids) joined += (joined.empty() ? "" : ",") + id;
  const Json s = parse_json_body(fetch(base + "/esummary.fcgi?db=pubmed&retmode=json&id=" + joined), "PubMed esummary");
  std::string out;
  int k = 0;
  const Json result = s.value("result", Json::object());
  for (const auto& id : ids) {
    if (!result.contains(id)) continue;
    const auto& r = result[id];
    out += std::to_string(++k) + ". " + r.value("title", std::string()) + "\n";
    out += "   PMID: " + id + "\n";
    out += "   Journal: " + r.value("fulljournalname", std::string()) + "\n";
    out += "   Date: " + r.value("pubdate", std::string()) + "\n";
    if (r.contains("authors") && r["authors"].is_array()) {
      std::string names;
      for (const auto& a : r["authors"]) names += (names.empty() ? "" : ", ") + a.value("name", std::string());
      out += "   Authors: " + names + "\n";
    }
  }
  return out.empty() ? "No PubMed results." : out;
}

std::string ToolExecutor::semantic_scholar_searcher(const Json& p) {
  std::string url = settings_.endpoints.semantic_scholar + "/paper/search?query=" +
                    url_encode(p["query"].get<std::string>()) + "&limit=" + std::to_string(result_count(p)) +
                    "&fields=" + s2_fields();
  if (p.contains("year")) url += "&year=" + url_encode(p["year"].get<std::string>());
  if (p.contains("field")) url += "&fieldsOfStudy=" + url_encode(p["field"].get<std::string>());
  if (p.contains("venue")) url += "&venue=" + url_encode(p["venue"].get<std::string>());
  if (p.contains("min_citations")) url += "&minCitationCount=" + std::to_string(p["min_citations"].get<long long>());
  std::map<std::string, std::string> headers;
  if (auto key = env_or_empty(settings_.endpoints.semantic_scholar_key_env); !key.empty()) headers["x-api-key"] = key;
  const Json j = parse_json_body(fetch(url, headers), "Semantic Scholar");
  if (!j.contains("data") || !j["data"].is_array() || j["data"].empty()) return "No Semantic Scholar results.";
  std::string out;
  int k = 0;
  for (const auto& paper : j["data"]) out += std::to_string(++k) + ". " + format_s2_paper(paper);
  return out;
}

std::string ToolExecutor::web_searcher(const Json& p) {
  const std::string key = env_or_empty(settings_.endpoints.web_key_env);
  const std::string cx = env_or_empty(settings_.endpoints.web_cx_env);
  if (key.empty() || cx.empty()) {
    throw ToolFailure("backend_unavailable",
                      "web search needs " + settings_.endpoints.web_key_env + " and " + settings_.endpoints.web_cx_env);
  }
  std::string url = settings_.endpoints.web + "?key=" + url_encode(key) + "&cx=" + url_encode(cx) +
                    "&q=" + url_encode(p["query"].get<std::string>()) +
                    "&num=" + std::to_string(std::min(10, result_count(p)));
  if (p.contains("date_restrict")) url += "&dateRestrict=" + url_encode(p["date_restrict"].get<std::string>());
  if (p.contains("language")) url += "&lr=lang_" + url_encode(p["language"].get<std::string>());
  const Json j = parse_json_body(fetch(url), "web search");
  if (!j.contains("items") || !j["items"].is_array()) return "No web results.";
  std::string out;
  int k = 0;
  for (const auto& it : j["items"]) {
    out += std::to_string(++k) + ". " + it.value("title", std::string()) + "\n   " + it.value("link", std::string()) +
           "\n   " + it.value("snippet", std::string()) + "\n";
  }
  return out;
}

std::string ToolExecutor::wikipedia_searcher(const Json& p) {
  const std::string base = wiki_base(settings_.endpoints.wikipedia, param_string(p, "language"));
  const std::string api = base + "/w/api.php?format=json&formatversion=2&action=query";
  std::string mode = param_string(p, "mode", "auto");
  std::string title = param_string(p, "title");
  const std::string query = p["query"].get<std::string>();

  auto search = [&]() {
    const Json j = parse_json_body(fetch(api + "&list=search&srlimit=" + std::to_string(result_count(p)) +
                                         "&srsearch=" + url_encode(query)),
                                   "Wikipedia search");
    return j.value("query", Json::object()).value("search", Json::array());
  };
  if (mode == "search") {
    std::string out;
    int k = 0;
    for (const auto& hit : search()) {
      out += std::to_string(++k) + ". " + hit.value("title", std::string()) + ": " +
             clean(hit.value("snippet", std::string())) + "\n";
    }
    return out.empty() ? "No Wikipedia results." : out;
  }
  if (title.empty()) {
    const auto hits = search();
    if (hits.empty()) return "No Wikipedia results.";
    title = hits.front().value("title", std::string());
    if (mode == "auto") mode = "summary";
  } else if (mode == "auto") {
    mode = "summary";
  }
  if (mode == "summary") {
    std::string slug = title;
    std::replace(slug.begin(), slug.end(), ' ', '_');
    const Json j = parse_json_body(fetch(base + "/api/rest_v1/page/summary/" + url_encode(slug)), "Wikipedia summary");
    return j.value("title", title) + "\n" + j.value("extract", std::string());
  }
  std::string prop;
  if (mode == "extract") prop = "&prop=extracts&explaintext=1&redirects=1";
  else if (mode == "links") prop = "&prop=links&pllimit=100";
  else prop = "&prop=categories&cllimit=100";
  const Json j = parse_json_body(fetch(api + prop + "&titles=" + url_encode(title)), "Wikipedia");
  const auto pages = j.value("query", Json::object()).value("pages", Json::array());
  if (pages.empty()) return "No Wikipedia page titled " + title + ".";
  const auto& page = pages.front();
  if (mode == "extract") return page.value("title", title) + "\n" + page.value("extract", std::string());
  std::string out = page.value("title", title) + "\n";
  for (const auto& item : page.value(mode == "links" ? "links" : "categories", Json::array())) {
    out += "- " + item.value("title", std::string()) + "\n";
  }
  return out;
}

std::string ToolExecutor::abstract_collector(const Json& p, const ToolContext& ctx) {
  auto abstract_of = [](const PaperDocument& doc) -> std::optional<std::string> {
    for (const auto& el : doc.elements) {
      if (el.label && *el.label == "abstract") return clean_prose(doc.format, el.prose);
    }
    return std::nullopt;
  };
  if (p.contains("path")) {
    const auto doc = resolve_document(p, ctx);
    if (auto a = abstract_of(*doc)) return doc->meta.title + "\n" + *a;
    throw ToolFailure("not_found", "document has no abstract");
  }
  std::string arxiv_id = param_string(p, "arxiv_id");
  const std::string url = param_string(p, "url");
  if (arxiv_id.empty() && !url.empty()) arxiv_id = arxiv_id_from_url(url).value_or("");
  if (!arxiv_id.empty()) {
    return format_arxiv_feed(fetch(settings_.endpoints.arxiv + "?id_list=" + url_encode(arxiv_id)));
  }
  if (p.contains("pmid")) {
    return fetch(settings_.endpoints.eutils + "/efetch.fcgi?db=pubmed&rettype=abstract&retmode=text&id=" +
                 url_encode(p["pmid"].get<std::string>()));
  }
  if (p.contains("doi")) {
    const Json j = parse_json_body(fetch(settings_.endpoints.crossref + "/works/" + p["doi"].get<std::string>()),
                                   "Crossref");
    const Json m = j.value("message", Json::object());
    std::string title;
    if (m.contains("title") && m["title"].is_array() && !m["title"].empty()) title = m["title"][0].get<std::string>();
    const std::string abs = clean(m.value("abstract", std::string()));
    if (abs.empty()) throw ToolFailure("not_found", "Crossref has no abstract for " + p["doi"].get<std::string>());
    return title + "\n" + abs;
  }
  if (!url.empty()) {
    const std::string body = fetch(url);
    static const std::regex meta_re(
        R"(<meta[^>]+name=["'](?:citation_abstract|description|dc\.description)["'][^>]+content=["']([^"']+)["'])",
        std::regex::icase);
    std::smatch m;
    if (std::regex_search(body, m, meta_re)) return clean(m[1].str());
    return truncate_utf8(detail::html_to_text(body), 2000);
  }
  const std::string title = p["title"].get<std::string>();
  if (ctx.document && to_lower_ascii(normalize_whitespace(ctx.document->meta.title)) ==
                          to_lower_ascii(normalize_whitespace(title))) {
    if (auto a = abstract_of(*ctx.document)) return ctx.document->meta.title + "\n" + *a;
  }
  std::string q = title;
  if (p.contains("author")) q += " " + p["author"].get<std::string>();
  std::string s2 = settings_.endpoints.semantic_scholar + "/paper/search?limit=1&fields=" + s2_fields() +
                   "&query=" + url_encode(q);
  if (p.contains("year")) s2 += "&year=" + std::to_string(p["year"].get<long long>());
  std::map<std::string, std::string> headers;
  if (auto key = env_or_empty(settings_.endpoints.semantic_scholar_key_env); !key.empty()) headers["x-api-key"] = key;
  const Json j = parse_json_body(fetch(s2, headers), "Semantic Scholar");
  if (!j.contains("data") || !j["data"].is_array() || j["data"].empty()) {
    throw ToolFailure("not_found", "no paper titled " + title);
  }
  return format_s2_paper(j["data"][0]);
}

std::string ToolExecutor::online_fetcher(const Json& p, const ToolContext& ctx) {
  (void)ctx;
  const auto& ep = settings_.endpoints;
  const std::string source = param_string(p, "source_type");
  const std::string format = param_string(p, "preferred_format");
  std::string url = param_string(p, "url");
  if (url.empty() && p.contains("paper_id")) {
    const std::string id = p["paper_id"].get<std::string>();
    static const std::regex arxiv_re(R"(^([0-9]{4}\.[0-9]{4,5}(v[0-9]+)?|[a-z\-]+/[0-9]{7})$)");
    if (source == "pubmed" || starts_with(id, "PMC")) {
      url = ep.eutils + "/efetch.fcgi?db=pmc&id=" + url_encode(id);
    } else if (source == "semantic_scholar") {
      const Json j = parse_json_body(fetch(ep.semantic_scholar + "/paper/" + url_encode(id) + "?fields=" + s2_fields()),
                                     "Semantic Scholar");
      return format_s2_paper(j);
    } else if (source == "arxiv" || std::regex_match(id, arxiv_re)) {
      url = ep.arxiv_site + (format == "pdf" ? "/pdf/" : "/abs/") + id;
    } else {
      throw ToolFailure("invalid_argument", "cannot tell where paper id " + id + " lives; set source_type");
    }
  }
  if (url.empty() && p.contains("doi")) url = ep.doi_resolver + "/" + p["doi"].get<std::string>();
  if (url.empty()) {
    const Json j = parse_json_body(fetch(ep.semantic_scholar + "/paper/search?limit=3&fields=" + s2_fields() +
                                         "&query=" + url_encode(p["query"].get<std::string>())),
                                   "Semantic Scholar");
    if (!j.contains("data") || !j["data"].is_array() || j["data"].empty()) return "No documents found.";
    std::string out;
    int k = 0;
    for (const auto& paper : j["data"]) out += std::to_string(++k) + ". " + format_s2_paper(paper);
    return out;
  }
  std::string body = fetch(url);
  switch (detail::sniff(body)) {
    case detail::SniffedFormat::pdf: {
      const auto pdf = extract_pdf_text(body);
      return (pdf.title.empty() ? std::string() : "Title: " + pdf.title + "\n") + pdf.text;
    }
    case detail::SniffedFormat::xml:
    case detail::SniffedFormat::latex: {
      const bool xml = detail::sniff(body) == detail::SniffedFormat::xml;
      PaperMeta meta;
      meta.paper_id = url;
      try {
        auto doc = parse_document(body, xml ? SourceFormat::xml : SourceFormat::latex, meta);
        return render_outline(doc, true);
      } catch (const Error&) {
        return xml ? clean(body) : body;
      }
    }
    case detail::SniffedFormat::html: return detail::html_to_text(body);
    case detail::SniffedFormat::text: return body;
  }
  return body;
}

}  // namespace sciana
