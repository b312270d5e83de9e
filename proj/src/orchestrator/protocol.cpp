#include "sciana/protocol.hpp"

#include <cctype>
#include <set>

#include "sciana/text.hpp"

namespace sciana {

const std::string* TagParse::find(std::string_view name) const {
  auto it = tags.find(std::string(name));
  return it == tags.end() ? nullptr : &it->second;
}

namespace {

bool name_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
}

struct TagToken {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string name;
  bool closing = false;
};

// Reads `<name>` or `</name>` at pos; names must start with a lowercase letter.
std::optional<TagToken> read_tag(std::string_view s, std::size_t pos) {
  if (pos >= s.size() || s[pos] != '<') return std::nullopt;
  TagToken t;
  t.begin = pos;
  std::size_t i = pos + 1;
  if (i < s.size() && s[i] == '/') {
    t.closing = true;
    ++i;
  }
  if (i >= s.size() || !(s[i] >= 'a' && s[i] <= 'z')) return std::nullopt;
  const std::size_t name_begin = i;
  while (i < s.size() && name_char(s[i])) ++i;
  if (i >= s.size() || s[i] != '>') return std::nullopt;
  t.name = std::string(s.substr(name_begin, i - name_begin));
  t.end = i + 1;
  return t;
}

// Position of the closer matching an opener of `name` whose content starts at `from`.
std::optional<TagToken> find_closer(std::string_view s, std::size_t from, const std::string& name) {
  int depth = 1;
  std::size_t i = from;
  while ((i = s.find('<', i)) != std::string_view::npos) {
    auto t = read_tag(s, i);
    if (!t || t->name != name) {
      ++i;
      continue;
    }
    depth += t->closing ? -1 : 1;
    if (depth == 0) return t;
    i = t->end;
  }
  return std::nullopt;
}

}  // namespace

TagParse parse_tags(std::string_view text, const std::vector<std::string>& required) {
  TagParse out;
  std::set<std::string> unbalanced;
  std::size_t i = 0;
  while ((i = text.find('<', i)) != std::string_view::npos) {
    auto t = read_tag(text, i);
    if (!t) {
      ++i;
      continue;
    }
    if (t->closing) {
      if (!out.tags.count(t->name)) unbalanced.insert(t->name);
      i = t->end;
      continue;
    }
    auto closer = find_closer(text, t->end, t->name);
    if (!closer) {
      if (!out.tags.count(t->name)) unbalanced.insert(t->name);
      i = t->end;
      continue;
    }
    out.tags.emplace(t->name, std::string(text.substr(t->end, closer->begin - t->end)));
    i = closer->end;
  }
  for (const auto& name : required) {
    if (out.tags.count(name)) continue;
    out.error = TagError{unbalanced.count(name) ? TagErrorKind::unbalanced : TagErrorKind::missing, name};
    break;
  }
  return out;
}

std::optional<Grade> parse_grade(std::string_view content) {
  for (std::size_t i = 0; i < content.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(content[i]))) continue;
    const bool negative = i > 0 && content[i - 1] == '-';
    long long v = 0;
    std::size_t j = i;
    while (j < content.size() && std::isdigit(static_cast<unsigned char>(content[j])) && v < 1000) {
      v = v * 10 + (content[j] - '0');
      ++j;
    }
    if (negative) v = -v;
    Grade g;
    g.value = static_cast<int>(v < 0 ? 0 : (v > 2 ? 2 : v));
    g.clamped = v < 0 || v > 2;
    return g;
  }
  return std::nullopt;
}

std::string format_reminder(const std::vector<std::string>& required) {
  std::string tags;
  for (const auto& t : required) tags += "<" + t + ">...</" + t + ">\n";
  return "Your previous response did not follow the required response format. Respond again and enclose each "
         "part in its tags exactly as follows:\n" +
         tags;
}

std::vector<std::string> plan_bullets(std::string_view plan) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= plan.size()) {
    auto nl = plan.find('\n', pos);
    if (nl == std::string_view::npos) nl = plan.size();
    const std::string line = trim(plan.substr(pos, nl - pos));
    // "**Bold**" lines are emphasis, not bullets.
    if (!line.empty() && line[0] == '*' && (line.size() == 1 || line[1] != '*')) {
      std::string item = trim(std::string_view(line).substr(1));
      if (!item.empty()) out.push_back(std::move(item));
    }
    pos = nl + 1;
  }
  return out;
}

}  // namespace sciana
