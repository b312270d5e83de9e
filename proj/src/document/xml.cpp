#include <cctype>
#include <map>
#include <memory>
#include <set>

#include "scan.hpp"
#include "sciana/error.hpp"

namespace sciana::detail {

namespace {

struct Node {
  std::string name;
  std::map<std::string, std::string> attrs;
  std::vector<std::unique_ptr<Node>> children;
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t inner_start = 0;
  std::size_t inner_end = 0;
};

const std::set<std::string_view> kInlineTags = {"xref",      "italic", "bold", "sup",      "sub",
                                                 "sc",        "monospace", "underline", "ext-link", "inline-formula",
                                                 "named-content", "styled-content"};

bool name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == ':' || c == '.';
}

class XmlReader {
 public:
  explicit XmlReader(std::string_view s) : s_(s) {}

  std::unique_ptr<Node> document() {
    skip_misc();
    if (pos_ >= s_.size() || s_[pos_] != '<') fail("no root element");
    auto root = element();
    skip_misc();
    if (pos_ < s_.size()) fail("content after the root element");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::MalformedSource, what + " at offset " + std::to_string(pos_));
  }

  bool at(std::string_view lit) const { return s_.substr(pos_, lit.size()) == lit; }

  void skip_to(std::string_view closer) {
    const auto e = s_.find(closer, pos_);
    if (e == std::string_view::npos) fail("unterminated markup, expected " + std::string(closer));
    pos_ = e + closer.size();
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  // Prolog, comments, processing instructions and doctype declarations.
  void skip_misc() {
    while (true) {
      skip_ws();
      if (at("<?")) {
        skip_to("?>");
      } else if (at("<!--")) {
        skip_to("-->");
      } else if (at("<!DOCTYPE")) {
        int depth = 0;
        while (pos_ < s_.size()) {
          const char ch = s_[pos_++];
          if (ch == '[') ++depth;
          if (ch == ']') --depth;
          if (ch == '>' && depth <= 0) break;
        }
      } else {
        return;
      }
    }
  }

  std::string read_name() {
    const auto b = pos_;
    while (pos_ < s_.size() && name_char(s_[pos_])) ++pos_;
    if (b == pos_) fail("expected a name");
    return std::string(s_.substr(b, pos_ - b));
  }

  std::unique_ptr<Node> element() {
    auto node = std::make_unique<Node>();
    node->start = pos_;
    ++pos_;
    node->name = read_name();
    while (true) {
      skip_ws();
      if (pos_ >= s_.size()) fail("unterminated start tag <" + node->name + ">");
      if (at("/>")) {
        pos_ += 2;
        node->inner_start = node->inner_end = node->end = pos_;
        return node;
      }
      if (s_[pos_] == '>') {
        ++pos_;
        break;
      }
      auto key = read_name();
      skip_ws();
      if (pos_ >= s_.size() || s_[pos_] != '=') fail("attribute without value");
      ++pos_;
      skip_ws();
      if (pos_ >= s_.size() || (s_[pos_] != '"' && s_[pos_] != '\'')) fail("unquoted attribute value");
      const char q = s_[pos_++];
      const auto e = s_.find(q, pos_);
      if (e == std::string_view::npos) fail("unterminated attribute value");
      node->attrs[key] = decode_entities(s_.substr(pos_, e - pos_));
      pos_ = e + 1;
    }
    node->inner_start = pos_;
    while (true) {
      const auto lt = s_.find('<', pos_);
      if (lt == std::string_view::npos) {
        pos_ = s_.size();
        fail("element <" + node->name + "> is not closed");
      }
      pos_ = lt;
      if (at("<!--")) {
        skip_to("-->");
      } else if (at("<![CDATA[")) {
        skip_to("]]>");
      } else if (at("<?")) {
        skip_to("?>");
      } else if (at("</")) {
        node->inner_end = pos_;
        pos_ += 2;
        const auto name = read_name();
        if (name != node->name) fail("</" + name + "> closes <" + node->name + ">");
        skip_ws();
        if (pos_ >= s_.size() || s_[pos_] != '>') fail("malformed end tag");
        ++pos_;
        node->end = pos_;
        return node;
      } else {
        node->children.push_back(element());
      }
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

std::string text_of(std::string_view raw, const Node& n) {
  return normalize_whitespace(strip_tags(raw.substr(n.inner_start, n.inner_end - n.inner_start)));
}

const Node* first_child(const Node& n, std::string_view name) {
  for (const auto& ch : n.children) {
    if (ch->name == name) return ch.get();
  }
  return nullptr;
}

const Node* first_descendant(const Node& n, std::string_view name) {
  for (const auto& ch : n.children) {
    if (ch->name == name) return ch.get();
    if (auto d = first_descendant(*ch, name)) return d;
  }
  return nullptr;
}

std::optional<std::string> attr(const Node& n, std::string_view key) {
  for (const auto& [k, v] : n.attrs) {
    if (k == key) return v;
  }
  return std::nullopt;
}

struct Mapping {
  bool jats = true;

  std::optional<ElementKind> kind(std::string_view name) const {
    if (jats) {
      if (name == "sec") return ElementKind::section;
      if (name == "fig") return ElementKind::figure;
      if (name == "table-wrap") return ElementKind::table;
      if (name == "disp-formula") return ElementKind::equation;
      if (name == "ref") return ElementKind::bib_entry;
      if (name == "abstract") return ElementKind::paragraph;
      return std::nullopt;
    }
    if (name == "section" || name == "sec" || name == "div") return ElementKind::section;
    if (name == "figure" || name == "fig") return ElementKind::figure;
    if (name == "table" || name == "table-wrap") return ElementKind::table;
    if (name == "equation" || name == "formula" || name == "disp-formula") return ElementKind::equation;
    if (name == "bibitem" || name == "reference") return ElementKind::bib_entry;
    if (name == "abstract") return ElementKind::paragraph;
    return std::nullopt;
  }
};

void walk(std::string_view raw, const Node& n, const Mapping& map, int depth, bool in_body, bool in_section,
          std::vector<RawElement>& out) {
  for (const auto& chp : n.children) {
    const Node& ch = *chp;
    auto kind = map.kind(ch.name);
    bool body = in_body || ch.name == "body";
    if (!kind && ch.name == "p" && body && !in_section) kind = ElementKind::paragraph;
    if (kind) {
      RawElement el;
      el.kind = *kind;
      el.span = {ch.start, ch.end};
      el.label = attr(ch, "id");
      if (ch.name == "abstract") el.label = "abstract";
      if (*kind == ElementKind::bib_entry && !el.label) el.label = attr(ch, "key");
      if (*kind == ElementKind::section) {
        el.level = depth + 1;
        if (auto t = first_child(ch, "title")) el.title = text_of(raw, *t);
      }
      if (*kind == ElementKind::table || *kind == ElementKind::figure) {
        if (auto cap = first_descendant(ch, "caption")) el.caption = text_of(raw, *cap);
        if (auto g = first_descendant(ch, "graphic")) {
          el.image_ref = attr(*g, "xlink:href");
          if (!el.image_ref) el.image_ref = attr(*g, "href");
        }
      }
      out.push_back(std::move(el));
      if (*kind == ElementKind::table && ch.name == "table") continue;
    }
    const bool sec = kind == ElementKind::section;
    walk(raw, ch, map, depth + (sec ? 1 : 0), body, in_section || sec, out);
  }
}

}  // namespace

std::string decode_entities(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out.push_back(s[i]);
      continue;
    }
    const auto semi = s.find(';', i);
    if (semi == std::string_view::npos || semi - i > 10) {
      out.push_back('&');
      continue;
    }
    const std::string_view ent = s.substr(i + 1, semi - i - 1);
    std::string rep;
    if (ent == "amp") rep = "&";
    else if (ent == "lt") rep = "<";
    else if (ent == "gt") rep = ">";
    else if (ent == "quot") rep = "\"";
    else if (ent == "apos") rep = "'";
    else if (ent.size() > 1 && ent[0] == '#') {
      try {
        const bool hex = ent[1] == 'x' || ent[1] == 'X';
        const unsigned long cp = std::stoul(std::string(ent.substr(hex ? 2 : 1)), nullptr, hex ? 16 : 10);
        if (cp < 0x80) {
          rep.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
          rep.push_back(static_cast<char>(0xC0 | (cp >> 6)));
          rep.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
          rep.push_back(static_cast<char>(0xE0 | (cp >> 12)));
          rep.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
          rep.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x110000) {
          rep.push_back(static_cast<char>(0xF0 | (cp >> 18)));
          rep.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
          rep.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
          rep.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
      } catch (const std::exception&) {
        rep.clear();
      }
    }
    if (rep.empty()) {
      out.push_back('&');
      continue;
    }
    out += rep;
    i = semi;
  }
  return out;
}

std::string strip_tags(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (s.substr(i, 9) == "<![CDATA[") {
      const auto e = s.find("]]>", i);
      const auto stop = e == std::string_view::npos ? s.size() : e;
      out.append(s.substr(i + 9, stop - i - 9));
      i = e == std::string_view::npos ? s.size() : e + 3;
      continue;
    }
    if (s[i] == '<') {
      const auto e = s.find('>', i);
      if (e == std::string_view::npos) break;
      std::size_t n = i + 1;
      if (n < e && s[n] == '/') ++n;
      std::size_t m = n;
      while (m < e && name_char(s[m])) ++m;
      // Inline markup joins its neighbours; everything else is a word break.
      if (kInlineTags.count(s.substr(n, m - n)) == 0) out.push_back(' ');
      i = e + 1;
      continue;
    }
    const auto lt = s.find('<', i);
    const auto stop = lt == std::string_view::npos ? s.size() : lt;
    out += decode_entities(s.substr(i, stop - i));
    i = stop;
  }
  return out;
}

ScanResult scan_xml(const std::string& raw, std::vector<std::string>& diagnostics) {
  ScanResult result;
  result.clean = raw;
  XmlReader reader(raw);
  auto root = reader.document();
  Mapping map;
  map.jats = root->name == "article";
  if (!map.jats) diagnostics.push_back("root <" + root->name + "> is not JATS; using generic tag mapping");
  if (auto t = first_descendant(*root, "article-title")) result.title = text_of(raw, *t);
  else if (auto t2 = first_child(*root, "title")) result.title = text_of(raw, *t2);
  walk(raw, *root, map, 0, !map.jats || root->name == "body", false, result.elements);
  return result;
}

}  // namespace sciana::detail
