#include <algorithm>
#include <cctype>
#include <filesystem>
#include <set>

#include "scan.hpp"
#include "sciana/document.hpp"
#include "sciana/error.hpp"

namespace sciana {

std::string_view to_string(Platform v) noexcept {
  switch (v) {
    case Platform::arxiv: return "arxiv";
    case Platform::pubmed: return "pubmed";
    case Platform::other: return "other";
  }
  return "other";
}

std::string_view to_string(SourceFormat v) noexcept { return v == SourceFormat::latex ? "latex" : "xml"; }

std::string_view to_string(SourceKind v) noexcept {
  return v == SourceKind::general ? "general" : "review_survey";
}

std::string_view to_string(ElementKind v) noexcept {
  switch (v) {
    case ElementKind::section: return "section";
    case ElementKind::table: return "table";
    case ElementKind::figure: return "figure";
    case ElementKind::equation: return "equation";
    case ElementKind::caption: return "caption";
    case ElementKind::citation: return "citation";
    case ElementKind::bib_entry: return "bib_entry";
    case ElementKind::paragraph: return "paragraph";
  }
  return "paragraph";
}

Platform parse_platform(std::string_view s) {
  if (s == "arxiv") return Platform::arxiv;
  if (s == "pubmed") return Platform::pubmed;
  if (s == "other") return Platform::other;
  throw Error(ErrorCode::InvalidArgument, "unknown platform '" + std::string(s) + "'");
}

SourceFormat parse_format(std::string_view s) {
  if (s == "latex" || s == "tex") return SourceFormat::latex;
  if (s == "xml") return SourceFormat::xml;
  throw Error(ErrorCode::InvalidArgument, "unknown format '" + std::string(s) + "'");
}

SourceKind parse_source_kind(std::string_view s) {
  if (s == "general") return SourceKind::general;
  if (s == "review_survey") return SourceKind::review_survey;
  throw Error(ErrorCode::InvalidArgument, "unknown source kind '" + std::string(s) + "'");
}

ElementKind parse_element_kind(std::string_view s) {
  for (auto k : {ElementKind::section, ElementKind::table, ElementKind::figure, ElementKind::equation,
                 ElementKind::caption, ElementKind::citation, ElementKind::bib_entry, ElementKind::paragraph}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown element kind '" + std::string(s) + "'");
}

Json to_json(const PaperMeta& m) {
  Json domains = Json::array();
  for (const auto& d : m.domains) domains.push_back({{"broad", d.broad}, {"fine", d.fine}});
  return Json{{"paper_id", m.paper_id},
              {"platform", to_string(m.platform)},
              {"title", m.title},
              {"year", m.year},
              {"source_kind", to_string(m.source_kind)},
              {"domains", domains},
              {"access_ok", m.access_ok},
              {"collection_query", m.collection_query},
              {"keywords", m.keywords}};
}

PaperMeta meta_from_json(const Json& j) {
  PaperMeta m;
  m.paper_id = j.value("paper_id", "");
  m.platform = parse_platform(j.value("platform", "other"));
  m.title = j.value("title", "");
  m.year = j.value("year", 2000);
  m.source_kind = parse_source_kind(j.value("source_kind", "general"));
  if (j.contains("domains")) {
    for (const auto& d : j.at("domains")) m.domains.push_back({d.value("broad", ""), d.value("fine", "")});
  }
  m.access_ok = j.value("access_ok", true);
  m.collection_query = j.value("collection_query", "");
  if (j.contains("keywords")) m.keywords = j.at("keywords").get<std::vector<std::string>>();
  return m;
}

const DocElement* PaperDocument::find(std::string_view element_id) const {
  for (const auto& el : elements) {
    if (el.element_id == element_id) return &el;
  }
  return nullptr;
}

const DocElement* PaperDocument::find_by_label(std::string_view label) const {
  for (const auto& el : elements) {
    if (el.label && *el.label == label) return &el;
  }
  return nullptr;
}

namespace {

std::string_view id_prefix(ElementKind k) {
  switch (k) {
    case ElementKind::bib_entry: return "bib";
    case ElementKind::paragraph: return "para";
    default: return to_string(k);
  }
}

bool label_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == ':' || c == '_' || c == '-' || c == '.' || c == '/' ||
         c == '#';
}

bool bounded_at(std::string_view text, std::size_t pos, std::size_t len) {
  // Trailing '.' or ',' is sentence punctuation, not part of a label.
  const bool left = pos == 0 || !label_char(text[pos - 1]);
  const std::size_t after = pos + len;
  bool right = after >= text.size() || !label_char(text[after]);
  if (!right && (text[after] == '.' || text[after] == ',')) {
    right = after + 1 >= text.size() || !label_char(text[after + 1]);
  }
  return left && right;
}

std::vector<std::string> split_keys(std::string_view s) {
  std::vector<std::string> keys;
  std::size_t b = 0;
  while (b <= s.size()) {
    const auto e = std::min(s.find(',', b), s.size());
    auto k = trim(s.substr(b, e - b));
    if (!k.empty()) keys.push_back(std::move(k));
    b = e + 1;
  }
  return keys;
}

std::string strip_label_defs(std::string_view text) {
  std::string out(text);
  std::size_t at = 0;
  while ((at = out.find("\\label{", at)) != std::string::npos) {
    std::size_t p = at + 6;
    if (!detail::read_group(out, p)) break;
    std::fill(out.begin() + static_cast<std::ptrdiff_t>(at), out.begin() + static_cast<std::ptrdiff_t>(p), ' ');
    at = p;
  }
  return out;
}

const std::set<std::string, std::less<>> kRefCommands = {"ref",   "eqref",   "autoref", "cref", "Cref",
                                                         "pageref", "nameref", "vref",    "subref"};

struct Hit {
  std::size_t pos;
  std::string target;
};

std::vector<std::string> order_hits(std::vector<Hit> hits, std::string_view self_id) {
  std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.pos < b.pos; });
  std::vector<std::string> out;
  std::set<std::string, std::less<>> seen;
  for (auto& h : hits) {
    if (h.target == self_id) continue;
    if (seen.insert(h.target).second) out.push_back(std::move(h.target));
  }
  return out;
}

std::vector<std::string> latex_references(const PaperDocument& doc, std::string_view text, std::string_view self_id) {
  const std::string t = strip_label_defs(text);
  std::vector<Hit> hits;
  auto by_label = [&](std::string_view label) -> const DocElement* { return doc.find_by_label(label); };

  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] != '\\') continue;
    std::size_t j = i + 1;
    while (j < t.size() && std::isalpha(static_cast<unsigned char>(t[j]))) ++j;
    const std::string_view cmd(t.data() + i + 1, j - i - 1);
    const bool is_ref = kRefCommands.count(cmd) > 0;
    const bool is_cite = starts_with(cmd, "cite") || cmd == "citet" || cmd == "citep";
    if (!is_ref && !is_cite) continue;
    std::size_t p = j;
    if (p < t.size() && t[p] == '*') ++p;
    for (int opt = 0; opt < 2; ++opt) {
      while (p < t.size() && std::isspace(static_cast<unsigned char>(t[p]))) ++p;
      if (p < t.size() && t[p] == '[') detail::read_group(t, p, '[', ']');
    }
    while (p < t.size() && std::isspace(static_cast<unsigned char>(t[p]))) ++p;
    auto arg = detail::read_group(t, p);
    if (!arg) continue;
    for (const auto& key : split_keys(*arg)) {
      if (const auto* el = by_label(key)) {
        hits.push_back({i, el->element_id});
      } else {
        hits.push_back({i, (is_cite ? "cite:" : "ref:") + key});
      }
    }
    i = p - 1;
  }

  // Bare occurrences of labels and element ids. Very short labels are too
  // ambiguous to match outside a \ref.
  for (const auto& el : doc.elements) {
    std::vector<std::string> needles = {el.element_id};
    if (el.label && el.label->size() >= 3) needles.push_back(*el.label);
    for (const auto& n : needles) {
      for (std::size_t at = t.find(n); at != std::string::npos; at = t.find(n, at + 1)) {
        if (bounded_at(t, at, n.size())) {
          hits.push_back({at, el.element_id});
          break;
        }
      }
    }
  }
  return order_hits(std::move(hits), self_id);
}

std::vector<std::string> xml_references(const PaperDocument& doc, std::string_view text, std::string_view self_id) {
  std::vector<Hit> hits;
  for (std::size_t at = text.find("<xref"); at != std::string_view::npos; at = text.find("<xref", at + 1)) {
    const auto close = text.find('>', at);
    if (close == std::string_view::npos) break;
    const std::string_view tag = text.substr(at, close - at);
    auto attr = [&](std::string_view key) -> std::optional<std::string> {
      const std::string pat = " " + std::string(key) + "=";
      auto p = tag.find(pat);
      if (p == std::string_view::npos) return std::nullopt;
      p += pat.size();
      if (p >= tag.size()) return std::nullopt;
      const char q = tag[p];
      const auto e = tag.find(q, p + 1);
      if (e == std::string_view::npos) return std::nullopt;
      return std::string(tag.substr(p + 1, e - p - 1));
    };
    const auto rid = attr("rid");
    if (!rid) continue;
    const bool cite = attr("ref-type").value_or("") == "bibr";
    std::size_t b = 0;
    const std::string ids = *rid;
    while (b < ids.size()) {
      auto e = ids.find(' ', b);
      if (e == std::string::npos) e = ids.size();
      const std::string key = ids.substr(b, e - b);
      if (!key.empty()) {
        if (const auto* el = doc.find_by_label(key)) {
          hits.push_back({at, el->element_id});
        } else {
          hits.push_back({at, (cite ? "cite:" : "ref:") + key});
        }
      }
      b = e + 1;
    }
  }
  return order_hits(std::move(hits), self_id);
}

void finalize(PaperDocument& doc, const detail::ScanResult& scan) {
  auto raws = scan.elements;
  std::stable_sort(raws.begin(), raws.end(), [](const detail::RawElement& a, const detail::RawElement& b) {
    if (a.span.start != b.span.start) return a.span.start < b.span.start;
    return a.span.end > b.span.end;
  });

  std::map<ElementKind, int> counters;
  doc.elements.clear();
  doc.elements.reserve(raws.size());
  for (const auto& r : raws) {
    DocElement el;
    el.kind = r.kind;
    el.element_id = std::string(id_prefix(r.kind)) + "#" + std::to_string(++counters[r.kind]);
    el.span = r.span;
    el.label = r.label;
    el.caption = r.caption;
    el.image_ref = r.image_ref;
    el.title = r.title;
    el.level = r.level;
    el.body = doc.raw.substr(r.span.start, r.span.end - r.span.start);
    doc.elements.push_back(std::move(el));
  }

  // Containment: spans nest, so a stack over the sorted order finds parents.
  std::vector<std::size_t> stack;
  std::vector<std::vector<std::size_t>> children(doc.elements.size());
  for (std::size_t i = 0; i < doc.elements.size(); ++i) {
    auto& el = doc.elements[i];
    while (!stack.empty()) {
      const auto& top = doc.elements[stack.back()];
      if (el.span.start >= top.span.start && el.span.end <= top.span.end) break;
      stack.pop_back();
    }
    if (!stack.empty()) {
      const auto& parent = doc.elements[stack.back()];
      el.parent_id = parent.element_id;
      children[stack.back()].push_back(i);
    }
    for (auto s : stack) {
      const auto k = doc.elements[s].kind;
      if (k == ElementKind::table || k == ElementKind::figure) el.embedded = true;
    }
    stack.push_back(i);
  }

  const std::string_view clean = scan.clean;
  for (std::size_t i = 0; i < doc.elements.size(); ++i) {
    auto& el = doc.elements[i];
    std::string prose;
    std::size_t cursor = el.span.start;
    for (auto ci : children[i]) {
      const auto& ch = doc.elements[ci];
      prose.append(clean.substr(cursor, ch.span.start - cursor));
      prose.append("\n\n");
      cursor = ch.span.end;
    }
    prose.append(clean.substr(cursor, el.span.end - cursor));
    if (doc.format == SourceFormat::xml) {
      std::string spaced;
      std::size_t b = 0;
      for (auto p = prose.find("</p>"); p != std::string::npos; p = prose.find("</p>", p + 1)) {
        spaced.append(prose, b, p + 4 - b);
        spaced.append("\n\n");
        b = p + 4;
      }
      spaced.append(prose, b);
      prose = std::move(spaced);
    }
    el.prose = std::move(prose);

    if (doc.format == SourceFormat::latex) {
      if (el.kind == ElementKind::table || el.kind == ElementKind::figure || el.kind == ElementKind::equation) {
        if (!el.label) {
          if (auto l = detail::command_argument(el.prose, "label")) el.label = trim(*l);
        }
        if (el.kind != ElementKind::equation) {
          if (auto cap = detail::command_argument(el.prose, "caption")) el.caption = normalize_whitespace(*cap);
          if (auto img = detail::command_argument(el.prose, "includegraphics")) el.image_ref = trim(*img);
        }
      }
    }
  }

  for (auto& el : doc.elements) {
    el.outgoing_refs = doc.format == SourceFormat::latex ? latex_references(doc, el.prose, el.element_id)
                                                          : xml_references(doc, el.prose, el.element_id);
  }
}

}  // namespace

std::vector<std::string> extract_references(const PaperDocument& doc, std::string_view text,
                                            std::string_view self_id) {
  return doc.format == SourceFormat::latex ? latex_references(doc, text, self_id)
                                           : xml_references(doc, text, self_id);
}

bool markup_balanced(SourceFormat format, std::string_view text) {
  if (format == SourceFormat::xml) {
    std::vector<std::string> stack;
    for (std::size_t i = 0; i < text.size(); ++i) {
      if (text[i] != '<') continue;
      if (text.substr(i, 4) == "<!--") {
        const auto e = text.find("-->", i);
        if (e == std::string_view::npos) return false;
        i = e + 2;
        continue;
      }
      const auto e = text.find('>', i);
      if (e == std::string_view::npos) return false;
      std::string_view tag = text.substr(i + 1, e - i - 1);
      i = e;
      if (tag.empty() || tag[0] == '?' || tag[0] == '!' || tag.back() == '/') continue;
      const bool closing = tag[0] == '/';
      if (closing) tag.remove_prefix(1);
      std::size_t n = 0;
      while (n < tag.size() && !std::isspace(static_cast<unsigned char>(tag[n]))) ++n;
      const std::string name(tag.substr(0, n));
      if (!closing) {
        stack.push_back(name);
      } else {
        if (stack.empty() || stack.back() != name) return false;
        stack.pop_back();
      }
    }
    return stack.empty();
  }
  const std::string clean = detail::blank_latex_comments(text);
  std::vector<std::string> stack;
  for (std::size_t at = clean.find('\\'); at != std::string::npos; at = clean.find('\\', at + 1)) {
    const std::string_view rest(clean.data() + at + 1, clean.size() - at - 1);
    const bool begin = starts_with(rest, "begin");
    const bool end = starts_with(rest, "end");
    if (!begin && !end) {
      if (!rest.empty() && rest[0] == '\\') ++at;
      continue;
    }
    std::size_t p = at + (begin ? 6 : 4);
    while (p < clean.size() && std::isspace(static_cast<unsigned char>(clean[p]))) ++p;
    if (p >= clean.size() || clean[p] != '{') continue;
    auto name = detail::read_group(clean, p);
    if (!name) return false;
    if (begin) {
      stack.push_back(*name);
    } else {
      if (stack.empty() || stack.back() != *name) return false;
      stack.pop_back();
    }
  }
  return stack.empty();
}

std::string clean_prose(SourceFormat format, std::string_view block) {
  if (format == SourceFormat::xml) return normalize_whitespace(detail::strip_tags(block));
  std::string t = strip_label_defs(detail::blank_latex_comments(block));
  std::replace(t.begin(), t.end(), '~', ' ');
  return normalize_whitespace(t);
}

PaperDocument parse_document(std::string raw, SourceFormat format, PaperMeta meta) {
  if (trim(raw).empty()) throw Error(ErrorCode::EmptyInput, "empty source for " + meta.paper_id);
  if (meta.year < 1900) throw Error(ErrorCode::InvalidArgument, "year before 1900 for " + meta.paper_id);
  PaperDocument doc;
  doc.format = format;
  doc.raw = std::move(raw);
  doc.meta = std::move(meta);
  auto scan = format == SourceFormat::latex ? detail::scan_latex(doc.raw, doc.diagnostics)
                                            : detail::scan_xml(doc.raw, doc.diagnostics);
  if (doc.meta.title.empty()) doc.meta.title = scan.title;
  finalize(doc, scan);
  return doc;
}

PaperDocument load_document(const std::string& path) {
  namespace fs = std::filesystem;
  const fs::path p(path);
  const auto ext = to_lower_ascii(p.extension().string());
  SourceFormat format;
  if (ext == ".tex") {
    format = SourceFormat::latex;
  } else if (ext == ".xml" || ext == ".nxml") {
    format = SourceFormat::xml;
  } else {
    throw Error(ErrorCode::InvalidArgument, "unsupported source extension: " + path);
  }
  PaperMeta meta;
  const auto sidecar = (p.parent_path() / p.stem()).string() + ".meta.json";
  if (fs::exists(sidecar)) {
    try {
      meta = meta_from_json(Json::parse(read_file(sidecar)));
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::InvalidConfig, sidecar + ": " + e.what());
    }
  }
  if (meta.paper_id.empty()) meta.paper_id = p.stem().string();
  std::string raw = read_file(path);
  try {
    return parse_document(raw, format, meta);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::MalformedSource) throw;
    PaperDocument doc;
    doc.format = format;
    doc.meta = std::move(meta);
    doc.raw = std::move(raw);
    doc.parse_failed = true;
    doc.diagnostics.push_back(e.what());
    return doc;
  }
}

// ReferenceGraph

namespace {
const std::vector<std::string> kEmpty;

void push_unique(std::vector<std::string>& v, const std::string& x) {
  if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
}
}  // namespace

void ReferenceGraph::add_node(const std::string& id) {
  if (has_node(id)) return;
  nodes_.push_back(id);
  in_[id];
  out_[id];
}

void ReferenceGraph::add_edge(const std::string& from, const std::string& to) {
  add_node(from);
  add_node(to);
  push_unique(out_[from], to);
  push_unique(in_[to], from);
}

void ReferenceGraph::add_external(const std::string& from, const std::string& key) {
  add_node(from);
  push_unique(external_[from], key);
}

bool ReferenceGraph::has_node(std::string_view id) const { return out_.find(id) != out_.end(); }

const std::vector<std::string>& ReferenceGraph::in_edges(std::string_view id) const {
  auto it = in_.find(id);
  return it == in_.end() ? kEmpty : it->second;
}

const std::vector<std::string>& ReferenceGraph::out_edges(std::string_view id) const {
  auto it = out_.find(id);
  return it == out_.end() ? kEmpty : it->second;
}

const std::vector<std::string>& ReferenceGraph::external_refs(std::string_view id) const {
  auto it = external_.find(id);
  return it == external_.end() ? kEmpty : it->second;
}

std::size_t ReferenceGraph::edge_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [_, v] : out_) n += v.size();
  return n;
}

bool ReferenceGraph::consistent() const {
  for (const auto& [u, outs] : out_) {
    for (const auto& v : outs) {
      if (!has_node(v)) return false;
      const auto& ins = in_edges(v);
      if (std::find(ins.begin(), ins.end(), u) == ins.end()) return false;
    }
  }
  for (const auto& [v, ins] : in_) {
    for (const auto& u : ins) {
      if (!has_node(u)) return false;
      const auto& outs = out_edges(u);
      if (std::find(outs.begin(), outs.end(), v) == outs.end()) return false;
    }
  }
  return true;
}

ReferenceGraph build_reference_graph(const PaperDocument& doc) {
  ReferenceGraph g;
  for (const auto& el : doc.elements) g.add_node(el.element_id);
  for (const auto& el : doc.elements) {
    for (const auto& r : el.outgoing_refs) {
      if (doc.find(r) != nullptr) {
        g.add_edge(el.element_id, r);
      } else {
        g.add_external(el.element_id, r);
      }
    }
  }
  return g;
}

namespace {

// Whitespace-normalized text of source ranges, with the source offset of every character.
struct MappedText {
  std::string text;
  std::vector<std::size_t> offset;
};

MappedText normalized_ranges(std::string_view src, const std::vector<Span>& ranges) {
  MappedText out;
  bool pending_space = false;
  for (const auto& r : ranges) {
    for (std::size_t i = r.start; i < r.end && i < src.size(); ++i) {
      if (std::isspace(static_cast<unsigned char>(src[i]))) {
        pending_space = !out.text.empty();
        continue;
      }
      if (pending_space) {
        out.text.push_back(' ');
        out.offset.push_back(i);
        pending_space = false;
      }
      out.text.push_back(src[i]);
      out.offset.push_back(i);
    }
    pending_space = !out.text.empty();
  }
  return out;
}

// Source ranges of an element; sections leave out their nested elements.
std::vector<Span> own_ranges(const PaperDocument& doc, const DocElement& el) {
  if (el.kind != ElementKind::section) return {el.span};
  std::vector<Span> out;
  std::size_t cursor = el.span.start;
  for (const auto& ch : doc.elements) {
    if (ch.parent_id != el.element_id) continue;
    if (ch.span.start > cursor) out.push_back({cursor, ch.span.start});
    cursor = std::max(cursor, ch.span.end);
  }
  if (cursor < el.span.end) out.push_back({cursor, el.span.end});
  return out;
}

}  // namespace

std::vector<const DocElement*> locate_element(const PaperDocument& doc, std::string_view query) {
  const std::string q = normalize_whitespace(query);
  if (q.empty()) throw Error(ErrorCode::InvalidArgument, "empty locate query");
  struct Match {
    std::size_t pos;
    std::size_t order;
    const DocElement* el;
  };
  std::vector<Match> matches;
  for (std::size_t i = 0; i < doc.elements.size(); ++i) {
    const auto& el = doc.elements[i];
    std::vector<std::string> fields;
    if (el.caption) fields.push_back(*el.caption);
    if (el.label) fields.push_back(*el.label);
    if (el.kind == ElementKind::section) {
      fields.push_back(el.title);
      fields.push_back(el.prose);
    } else {
      fields.push_back(el.body);
    }
    std::size_t best = std::string::npos;
    for (const auto& f : fields) {
      const auto at = normalize_whitespace(f).find(q);
      if (at != std::string::npos) best = std::min(best, at);
    }
    if (best == std::string::npos) continue;
    // Order by where the query sits in the source; fields rewritten from markup fall back to the element start.
    const auto mapped = normalized_ranges(doc.raw, own_ranges(doc, el));
    const auto raw_at = mapped.text.find(q);
    matches.push_back({raw_at != std::string::npos ? mapped.offset[raw_at] : el.span.start, i, &el});
  }
  std::stable_sort(matches.begin(), matches.end(), [](const Match& a, const Match& b) {
    if (a.pos != b.pos) return a.pos < b.pos;
    return a.order < b.order;
  });
  std::vector<const DocElement*> out;
  out.reserve(matches.size());
  for (const auto& m : matches) out.push_back(m.el);
  return out;
}

Json to_json(const DocElement& el) {
  Json j{{"element_id", el.element_id},
         {"kind", to_string(el.kind)},
         {"label", el.label ? Json(*el.label) : Json(nullptr)},
         {"caption", el.caption ? Json(*el.caption) : Json(nullptr)},
         {"body", el.body},
         {"image_ref", el.image_ref ? Json(*el.image_ref) : Json(nullptr)},
         {"outgoing_refs", el.outgoing_refs},
         {"span", Json::array({el.span.start, el.span.end})},
         {"parent_id", el.parent_id.empty() ? Json(nullptr) : Json(el.parent_id)},
         {"level", el.level},
         {"title", el.title},
         {"embedded", el.embedded}};
  return j;
}

Json to_json(const PaperDocument& doc) {
  Json elements = Json::array();
  for (const auto& el : doc.elements) elements.push_back(to_json(el));
  Json j = to_json(doc.meta);
  j["format"] = to_string(doc.format);
  j["parse_failed"] = doc.parse_failed;
  j["diagnostics"] = doc.diagnostics;
  j["elements"] = std::move(elements);
  return j;
}

}  // namespace sciana
