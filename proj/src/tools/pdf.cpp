#include <regex>

#include <zlib.h>

#include "internal.hpp"

namespace sciana {

namespace {

std::optional<std::string> inflate_stream(std::string_view data) {
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) return std::nullopt;
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  std::string out;
  char buf[16384];
  int rc = Z_OK;
  while (rc == Z_OK) {
    zs.next_out = reinterpret_cast<Bytef*>(buf);
    zs.avail_out = sizeof buf;
    rc = inflate(&zs, Z_NO_FLUSH);
    out.append(buf, sizeof buf - zs.avail_out);
    if (out.size() > (64u << 20)) break;
  }
  inflateEnd(&zs);
  // Truncated streams still yield whatever decoded cleanly.
  if (rc != Z_STREAM_END && out.empty()) return std::nullopt;
  return out;
}

std::string literal_string(std::string_view s, std::size_t& i) {
  // s[i] == '('
  std::string out;
  int depth = 0;
  for (; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '\\' && i + 1 < s.size()) {
      const char n = s[++i];
      switch (n) {
        case 'n': out.push_back('\n'); break;
        case 'r': out.push_back('\r'); break;
        case 't': out.push_back('\t'); break;
        case 'b': out.push_back('\b'); break;
        case 'f': out.push_back('\f'); break;
        case '\n': break;
        default:
          if (n >= '0' && n <= '7') {
            int v = n - '0';
            for (int k = 0; k < 2 && i + 1 < s.size() && s[i + 1] >= '0' && s[i + 1] <= '7'; ++k) {
              v = v * 8 + (s[++i] - '0');
            }
            out.push_back(static_cast<char>(v));
          } else {
            out.push_back(n);
          }
      }
      continue;
    }
    if (c == '(') {
      if (depth++ > 0) out.push_back(c);
      continue;
    }
    if (c == ')') {
      if (--depth == 0) {
        ++i;
        return out;
      }
      out.push_back(c);
      continue;
    }
    out.push_back(c);
  }
  return out;
}

std::string hex_string(std::string_view s, std::size_t& i) {
  // s[i] == '<'
  std::string digits;
  for (++i; i < s.size() && s[i] != '>'; ++i) {
    if (std::isxdigit(static_cast<unsigned char>(s[i]))) digits.push_back(s[i]);
  }
  ++i;
  if (digits.size() % 2) digits.push_back('0');
  std::string out;
  for (std::size_t k = 0; k + 1 < digits.size(); k += 2) {
    out.push_back(static_cast<char>(std::stoi(digits.substr(k, 2), nullptr, 16)));
  }
  // Two-byte glyph codes from simple Identity encodings: keep the low byte when the high byte is zero.
  if (out.size() >= 2 && out.size() % 2 == 0) {
    bool wide = true;
    for (std::size_t k = 0; k < out.size(); k += 2) wide = wide && out[k] == '\0';
    if (wide) {
      std::string narrow;
      for (std::size_t k = 1; k < out.size(); k += 2) narrow.push_back(out[k]);
      return narrow;
    }
  }
  return out;
}

// Text-showing operators of one content stream.
std::string content_text(std::string_view s) {
  std::string out;
  std::vector<std::string> operands;
  bool in_text = false;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '%') {
      while (i < s.size() && s[i] != '\n' && s[i] != '\r') ++i;
      continue;
    }
    if (c == '(') {
      operands.push_back(literal_string(s, i));
      continue;
    }
    if (c == '<' && i + 1 < s.size() && s[i + 1] == '<') {
      i += 2;
      continue;
    }
    if (c == '>' && i + 1 < s.size() && s[i + 1] == '>') {
      i += 2;
      continue;
    }
    if (c == '<') {
      operands.push_back(hex_string(s, i));
      continue;
    }
    if (c == '[') {
      // TJ arrays: strings joined, large negative kerning read as a space.
      std::string joined;
      ++i;
      while (i < s.size() && s[i] != ']') {
        if (s[i] == '(') {
          joined += literal_string(s, i);
        } else if (s[i] == '<') {
          joined += hex_string(s, i);
        } else if (s[i] == '-' || std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == '.') {
          std::size_t j = i;
          while (j < s.size() && (s[j] == '-' || s[j] == '.' || std::isdigit(static_cast<unsigned char>(s[j])))) ++j;
          try {
            if (std::stod(std::string(s.substr(i, j - i))) < -200) joined.push_back(' ');
          } catch (...) {
          }
          i = j;
        } else {
          ++i;
        }
      }
      ++i;
      operands.push_back(joined);
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j])) &&
           std::string_view("()<>[]{}/%").find(s[j]) == std::string_view::npos) {
      ++j;
    }
    if (j == i) {
      ++i;
      continue;
    }
    const std::string_view op = s.substr(i, j - i);
    i = j;
    if (op == "BT") {
      in_text = true;
    } else if (op == "ET") {
      in_text = false;
      out.push_back('\n');
    } else if (in_text && (op == "Tj" || op == "TJ" || op == "'" || op == "\"")) {
      if (op == "'" || op == "\"") out.push_back('\n');
      if (!operands.empty()) out += operands.back();
    } else if (in_text && (op == "T*" || op == "Td" || op == "TD")) {
      if (!out.empty() && out.back() != '\n' && out.back() != ' ') out.push_back(' ');
    }
    if (std::isalpha(static_cast<unsigned char>(op[0])) || op == "'" || op == "\"" || op == "T*") operands.clear();
  }
  return out;
}

}  // namespace

PdfText extract_pdf_text(std::string_view bytes) {
  if (!starts_with(bytes, "%PDF")) throw Error(ErrorCode::MalformedSource, "not a PDF file");
  PdfText result;
  std::size_t pos = 0;
  std::string text;
  while ((pos = bytes.find("stream", pos)) != std::string_view::npos) {
    if (pos >= 3 && bytes.substr(pos - 3, 3) == "end") {
      pos += 6;
      continue;
    }
    std::size_t data = pos + 6;
    if (data < bytes.size() && bytes[data] == '\r') ++data;
    if (data < bytes.size() && bytes[data] == '\n') ++data;
    const auto end = bytes.find("endstream", data);
    if (end == std::string_view::npos) break;
    const auto dict_start = bytes.rfind("<<", pos);
    const std::string_view dict =
        dict_start == std::string_view::npos ? std::string_view() : bytes.substr(dict_start, pos - dict_start);
    std::string_view raw = bytes.substr(data, end - data);
    std::optional<std::string> decoded;
    if (dict.find("/FlateDecode") != std::string_view::npos) {
      decoded = inflate_stream(raw);
    } else if (dict.find("/Filter") == std::string_view::npos) {
      decoded = std::string(raw);
    }
    if (decoded && decoded->find("BT") != std::string::npos &&
        dict.find("/Subtype /Image") == std::string_view::npos && dict.find("/Subtype/Image") == std::string_view::npos) {
      text += content_text(*decoded);
    }
    pos = end + 9;
  }
  static const std::regex page_re(R"(/Type\s*/Page(?![s\w]))");
  const std::string all(bytes);
  result.pages = static_cast<std::size_t>(
      std::distance(std::sregex_iterator(all.begin(), all.end(), page_re), std::sregex_iterator()));
  if (const auto t = all.find("/Title"); t != std::string::npos) {
    std::size_t i = all.find_first_not_of(" \r\n\t", t + 6);
    if (i != std::string::npos && all[i] == '(') result.title = literal_string(all, i);
    else if (i != std::string::npos && all[i] == '<' && all.compare(i, 2, "<<") != 0) result.title = hex_string(all, i);
  }
  result.text = trim(text);
  if (result.text.empty() && result.pages == 0) throw Error(ErrorCode::MalformedSource, "no readable PDF content");
  return result;
}

}  // namespace sciana
