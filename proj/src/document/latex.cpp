#include <algorithm>
#include <cctype>
#include <set>

#include "scan.hpp"
#include "sciana/error.hpp"

namespace sciana::detail {

namespace {

const std::set<std::string, std::less<>> kVerbatimEnvs = {"verbatim", "verbatim*", "lstlisting", "minted", "comment"};
const std::set<std::string, std::less<>> kSkippedEnvs = {"sidewaystable",  "sidewaystable*", "sidewaysfigure",
                                                         "sidewaysfigure*", "wraptable",     "wrapfigure",
                                                         "longtable",       "longtable*"};

bool is_letter(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

std::size_t skip_spaces(std::string_view s, std::size_t pos) {
  while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  return pos;
}

std::optional<ElementKind> env_kind(std::string_view env) {
  if (env == "table" || env == "table*") return ElementKind::table;
  if (env == "figure" || env == "figure*") return ElementKind::figure;
  if (env == "equation" || env == "equation*" || env == "align" || env == "align*") return ElementKind::equation;
  if (env == "abstract") return ElementKind::paragraph;
  return std::nullopt;
}

int heading_level(std::string_view cmd) {
  if (cmd == "section") return 1;
  if (cmd == "subsection") return 2;
  if (cmd == "subsubsection") return 3;
  return 0;
}

struct OpenEnv {
  std::string name;
  std::size_t begin;
};

struct Heading {
  std::size_t pos;
  int level;
  std::string title;
};

struct BibItem {
  std::size_t pos;
  std::string key;
};

std::string line_col(std::string_view s, std::size_t pos) {
  const auto line = 1 + std::count(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(pos), '\n');
  return "line " + std::to_string(line);
}

}  // namespace

std::string blank_latex_comments(std::string_view src) {
  std::string out(src);
  std::size_t i = 0;
  while (i < out.size()) {
    if (out[i] == '\\' && i + 1 < out.size()) {
      i += 2;
      continue;
    }
    if (out[i] == '%') {
      while (i < out.size() && out[i] != '\n') out[i++] = ' ';
      continue;
    }
    ++i;
  }
  return out;
}

std::optional<std::string> read_group(std::string_view s, std::size_t& pos, char open, char close) {
  if (pos >= s.size() || s[pos] != open) return std::nullopt;
  int depth = 0;
  const std::size_t start = pos;
  for (std::size_t i = pos; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '\\') {
      ++i;
      continue;
    }
    if (c == open) {
      ++depth;
    } else if (c == close) {
      if (--depth == 0) {
        pos = i + 1;
        return std::string(s.substr(start + 1, i - start - 1));
      }
    }
  }
  return std::nullopt;
}

std::optional<std::string> command_argument(std::string_view s, std::string_view name) {
  const std::string needle = "\\" + std::string(name);
  std::size_t from = 0;
  while (true) {
    const auto at = s.find(needle, from);
    if (at == std::string_view::npos) return std::nullopt;
    std::size_t pos = at + needle.size();
    from = pos;
    if (pos < s.size() && is_letter(s[pos])) continue;
    if (pos < s.size() && s[pos] == '*') ++pos;
    pos = skip_spaces(s, pos);
    if (pos < s.size() && s[pos] == '[') {
      if (!read_group(s, pos, '[', ']')) continue;
      pos = skip_spaces(s, pos);
    }
    if (auto arg = read_group(s, pos)) return arg;
  }
}

ScanResult scan_latex(const std::string& raw, std::vector<std::string>& diagnostics) {
  ScanResult result;
  result.clean = blank_latex_comments(raw);
  const std::string_view c = result.clean;

  std::size_t body_begin = 0;
  std::size_t body_end = c.size();
  if (const auto b = c.find("\\begin{document}"); b != std::string_view::npos) {
    body_begin = b + std::string_view("\\begin{document}").size();
    const auto e = c.find("\\end{document}", body_begin);
    if (e == std::string_view::npos) throw Error(ErrorCode::MalformedSource, "document environment is not closed");
    body_end = e;
  }
  if (auto t = command_argument(c.substr(0, body_begin > 0 ? body_begin : c.size()), "title")) {
    result.title = normalize_whitespace(*t);
  }

  std::vector<OpenEnv> stack;
  std::vector<Heading> headings;
  std::vector<BibItem> bibitems;
  auto& out = result.elements;

  std::size_t i = body_begin;
  while (i < body_end) {
    if (c[i] != '\\') {
      ++i;
      continue;
    }
    const std::size_t cmd_pos = i;
    std::size_t j = i + 1;
    while (j < body_end && is_letter(c[j])) ++j;
    const std::string_view cmd = c.substr(i + 1, j - i - 1);
    if (cmd.empty()) {
      i += 2;
      continue;
    }
    i = j;

    if (cmd == "begin" || cmd == "end") {
      std::size_t p = skip_spaces(c, j);
      auto env = read_group(c, p);
      if (!env) throw Error(ErrorCode::MalformedSource, "unreadable environment name at " + line_col(c, cmd_pos));
      i = p;
      if (cmd == "begin") {
        if (kVerbatimEnvs.count(*env) > 0) {
          const std::string closer = "\\end{" + *env + "}";
          const auto e = c.find(closer, p);
          if (e == std::string_view::npos || e >= body_end) {
            throw Error(ErrorCode::MalformedSource, "unclosed " + *env + " at " + line_col(c, cmd_pos));
          }
          i = e + closer.size();
          continue;
        }
        if (kSkippedEnvs.count(*env) > 0) {
          diagnostics.push_back("skipped environment " + *env + " at " + line_col(c, cmd_pos));
        }
        stack.push_back({*env, cmd_pos});
        continue;
      }
      if (stack.empty()) {
        throw Error(ErrorCode::MalformedSource, "\\end{" + *env + "} without \\begin at " + line_col(c, cmd_pos));
      }
      if (stack.back().name != *env) {
        throw Error(ErrorCode::MalformedSource, "\\end{" + *env + "} closes \\begin{" + stack.back().name + "} at " +
                                                    line_col(c, cmd_pos));
      }
      const OpenEnv open = stack.back();
      stack.pop_back();
      if (auto kind = env_kind(*env)) {
        RawElement el;
        el.kind = *kind;
        el.span = {open.begin, i};
        if (*env == "abstract") el.label = "abstract";
        out.push_back(std::move(el));
      } else if (*env == "thebibliography") {
        std::vector<BibItem> inside;
        for (const auto& b : bibitems) {
          if (b.pos > open.begin && b.pos < cmd_pos) inside.push_back(b);
        }
        for (std::size_t k = 0; k < inside.size(); ++k) {
          RawElement el;
          el.kind = ElementKind::bib_entry;
          el.span = {inside[k].pos, k + 1 < inside.size() ? inside[k + 1].pos : cmd_pos};
          el.label = inside[k].key;
          out.push_back(std::move(el));
        }
      }
      continue;
    }

    if (const int level = heading_level(cmd); level > 0) {
      std::size_t p = j;
      if (p < body_end && c[p] == '*') ++p;
      p = skip_spaces(c, p);
      if (p < body_end && c[p] == '[') read_group(c, p, '[', ']');
      p = skip_spaces(c, p);
      auto title = read_group(c, p);
      if (!title) {
        diagnostics.push_back("heading without title at " + line_col(c, cmd_pos));
        continue;
      }
      headings.push_back({cmd_pos, level, normalize_whitespace(*title)});
      i = p;
      continue;
    }

    if (cmd == "bibitem") {
      std::size_t p = skip_spaces(c, j);
      if (p < body_end && c[p] == '[') read_group(c, p, '[', ']');
      p = skip_spaces(c, p);
      if (auto key = read_group(c, p)) {
        bibitems.push_back({cmd_pos, trim(*key)});
        i = p;
      }
      continue;
    }
  }
  if (!stack.empty()) {
    throw Error(ErrorCode::MalformedSource,
                "unclosed environment " + stack.back().name + " opened at " + line_col(c, stack.back().begin));
  }

  for (std::size_t h = 0; h < headings.size(); ++h) {
    std::size_t end = body_end;
    for (std::size_t k = h + 1; k < headings.size(); ++k) {
      if (headings[k].level <= headings[h].level) {
        end = headings[k].pos;
        break;
      }
    }
    RawElement el;
    el.kind = ElementKind::section;
    el.span = {headings[h].pos, end};
    el.title = headings[h].title;
    el.level = headings[h].level;
    // A section's label is the \label that directly follows its heading.
    std::size_t p = headings[h].pos;
    p = c.find('{', p);
    read_group(c, p);
    p = skip_spaces(c, p);
    if (c.substr(p, 7) == "\\label{") {
      p += 6;
      if (auto lab = read_group(c, p)) el.label = trim(*lab);
    }
    out.push_back(std::move(el));
  }

  // Prose ahead of the first heading becomes paragraphs, one per blank-line block.
  const std::size_t lead_end = headings.empty() ? body_end : headings.front().pos;
  std::vector<Span> holes;
  for (const auto& el : out) {
    if (el.span.start >= body_begin && el.span.start < lead_end) holes.push_back(el.span);
  }
  std::sort(holes.begin(), holes.end(), [](const Span& a, const Span& b) { return a.start < b.start; });
  std::vector<Span> segments;
  std::size_t cursor = body_begin;
  for (const auto& h : holes) {
    if (h.start < cursor) {
      cursor = std::max(cursor, h.end);
      continue;
    }
    segments.push_back({cursor, h.start});
    cursor = h.end;
  }
  if (cursor < lead_end) segments.push_back({cursor, lead_end});

  for (const auto& seg : segments) {
    std::size_t block_start = seg.start;
    std::size_t k = seg.start;
    auto emit = [&](std::size_t a, std::size_t b) {
      std::string_view text = c.substr(a, b - a);
      // Skip blocks that hold nothing but bare commands such as \maketitle.
      std::string words;
      for (std::size_t q = 0; q < text.size(); ++q) {
        if (text[q] == '\\') {
          while (q + 1 < text.size() && is_letter(text[q + 1])) ++q;
          continue;
        }
        words.push_back(text[q]);
      }
      if (token_count(words) == 0) return;
      while (a < b && std::isspace(static_cast<unsigned char>(c[a]))) ++a;
      while (b > a && std::isspace(static_cast<unsigned char>(c[b - 1]))) --b;
      RawElement el;
      el.kind = ElementKind::paragraph;
      el.span = {a, b};
      out.push_back(std::move(el));
    };
    while (k < seg.end) {
      if (c[k] == '\n') {
        std::size_t q = k + 1;
        while (q < seg.end && (c[q] == ' ' || c[q] == '\t' || c[q] == '\r')) ++q;
        if (q < seg.end && c[q] == '\n') {
          emit(block_start, k);
          while (q < seg.end && std::isspace(static_cast<unsigned char>(c[q]))) ++q;
          block_start = q;
          k = q;
          continue;
        }
      }
      ++k;
    }
    if (block_start < seg.end) emit(block_start, seg.end);
  }
  return result;
}

}  // namespace sciana::detail
