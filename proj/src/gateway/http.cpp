// The only library translation unit that includes httplib.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cctype>

#include "sciana/gateway.hpp"

namespace sciana {

std::optional<Url> parse_url(std::string_view url) {
  Url u;
  const auto sep = url.find("://");
  if (sep == std::string_view::npos) return std::nullopt;
  u.scheme = to_lower_ascii(url.substr(0, sep));
  if (u.scheme != "http" && u.scheme != "https") return std::nullopt;
  std::string_view rest = url.substr(sep + 3);
  const auto slash = rest.find('/');
  std::string authority(slash == std::string_view::npos ? rest : rest.substr(0, slash));
  u.path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
  if (authority.empty()) return std::nullopt;
  const auto colon = authority.rfind(':');
  if (colon != std::string::npos && authority.find(']') == std::string::npos) {
    const std::string port = authority.substr(colon + 1);
    if (port.empty() || port.size() > 5) return std::nullopt;
    for (char c : port) {
      if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    }
    u.port = std::stoi(port);
    authority = authority.substr(0, colon);
  } else {
    u.port = u.scheme == "https" ? 443 : 80;
  }
  if (authority.empty()) return std::nullopt;
  u.host = authority;
  return u;
}

std::string url_encode(std::string_view s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(hex[c >> 4]);
      out.push_back(hex[c & 15]);
    }
  }
  return out;
}

namespace {

HttpResponse send(const std::string& url, const std::map<std::string, std::string>& headers, double timeout,
                  const std::string* body) {
  const auto u = parse_url(url);
  if (!u) throw Error(ErrorCode::InvalidArgument, "malformed URL: " + url);
  httplib::Client cli(u->scheme + "://" + u->host + ":" + std::to_string(u->port));
  const auto secs = static_cast<time_t>(timeout);
  const auto usecs = static_cast<time_t>((timeout - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  cli.set_follow_location(true);
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  auto res = body ? cli.Post(u->path, h, *body, "application/json") : cli.Get(u->path, h);
  if (!res) {
    throw Error(ErrorCode::TransientFailure, "request to " + u->host + " failed: " + httplib::to_string(res.error()));
  }
  return {res->status, res->body};
}

}  // namespace

HttpResponse http_post(const std::string& url, const std::string& body,
                       const std::map<std::string, std::string>& headers, double timeout_seconds) {
  return send(url, headers, timeout_seconds, &body);
}

HttpResponse http_get(const std::string& url, const std::map<std::string, std::string>& headers,
                      double timeout_seconds) {
  return send(url, headers, timeout_seconds, nullptr);
}

}  // namespace sciana
