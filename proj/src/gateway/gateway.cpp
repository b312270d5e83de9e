#include <cmath>
#include <cstdlib>
#include <thread>

#include "sciana/gateway.hpp"

namespace sciana {

std::string_view to_string(Role r) noexcept {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    case Role::tool: return "tool";
  }
  return "user";
}

void validate(const BackendSpec& spec) {
  if (spec.endpoint != "mock" && !parse_url(spec.endpoint)) {
    throw Error(ErrorCode::InvalidConfig, "backend '" + spec.name + "' has malformed endpoint '" + spec.endpoint + "'");
  }
  if (!(spec.request_timeout > 0)) {
    throw Error(ErrorCode::InvalidConfig, "backend '" + spec.name + "' needs a positive request_timeout");
  }
  if (spec.max_retries < 0) throw Error(ErrorCode::InvalidConfig, "backend '" + spec.name + "' has max_retries < 0");
}

BackendSpec backend_from_json(const Json& j) {
  BackendSpec s;
  s.name = j.value("name", "");
  s.endpoint = j.value("endpoint", "");
  s.model_id = j.value("model_id", "");
  s.api_key_env = j.value("api_key_env", "");
  const auto kind = j.value("kind", "chat");
  if (kind == "chat") s.kind = BackendKind::chat;
  else if (kind == "embedding") s.kind = BackendKind::embedding;
  else throw Error(ErrorCode::InvalidConfig, "backend kind must be chat or embedding, got '" + kind + "'");
  s.request_timeout = j.value("request_timeout", s.request_timeout);
  s.max_retries = j.value("max_retries", s.max_retries);
  s.backoff_initial = j.value("backoff_initial", s.backoff_initial);
  s.rate_limit = j.value("rate_limit", s.rate_limit);
  validate(s);
  return s;
}

Json to_json(const BackendSpec& s) {
  return Json{{"name", s.name},
              {"endpoint", s.endpoint},
              {"model_id", s.model_id},
              {"api_key_env", s.api_key_env},
              {"kind", s.kind == BackendKind::chat ? "chat" : "embedding"},
              {"request_timeout", s.request_timeout},
              {"max_retries", s.max_retries},
              {"backoff_initial", s.backoff_initial},
              {"rate_limit", s.rate_limit}};
}

namespace {

std::map<std::string, std::string> auth_headers(const BackendSpec& spec) {
  std::map<std::string, std::string> h;
  if (!spec.api_key_env.empty()) {
    if (const char* key = std::getenv(spec.api_key_env.c_str()); key != nullptr && *key != '\0') {
      h["Authorization"] = std::string("Bearer ") + key;
    }
  }
  return h;
}

bool mentions_context_overflow(const std::string& body) {
  const auto b = to_lower_ascii(body);
  return contains(b, "context_length") || contains(b, "maximum context") || contains(b, "context length") ||
         contains(b, "too many tokens");
}

void check_status(const HttpResponse& resp) {
  if (resp.status == 200) return;
  const std::string snippet = truncate_utf8(resp.body, 300);
  if (resp.status == 408 || resp.status == 429 || resp.status >= 500) {
    throw Error(ErrorCode::TransientFailure, "HTTP " + std::to_string(resp.status) + ": " + snippet);
  }
  if ((resp.status == 400 || resp.status == 413) && mentions_context_overflow(resp.body)) {
    throw Error(ErrorCode::ContextOverflow, snippet);
  }
  throw Error(ErrorCode::BackendUnavailable, "HTTP " + std::to_string(resp.status) + ": " + snippet);
}

}  // namespace

HttpChatBackend::HttpChatBackend(BackendSpec spec) : spec_(std::move(spec)) { validate(spec_); }

Json HttpChatBackend::request_body(const std::string& model, const std::vector<ChatTurn>& turns,
                                   const ChatParams& params) {
  Json messages = Json::array();
  for (const auto& t : turns) {
    Json msg{{"role", to_string(t.role)}};
    if (t.images.empty()) {
      msg["content"] = t.content;
    } else {
      Json parts = Json::array();
      parts.push_back({{"type", "text"}, {"text", t.content}});
      for (const auto& img : t.images) {
        parts.push_back(
            {{"type", "image_url"}, {"image_url", {{"url", "data:" + img.mime + ";base64," + img.base64}}}});
      }
      msg["content"] = std::move(parts);
    }
    messages.push_back(std::move(msg));
  }
  return Json{{"model", model},
              {"messages", std::move(messages)},
              {"temperature", params.temperature},
              {"max_tokens", params.max_tokens}};
}

std::string HttpChatBackend::interpret_response(const HttpResponse& resp) {
  check_status(resp);
  Json j;
  try {
    j = Json::parse(resp.body);
  } catch (const Json::parse_error&) {
    throw Error(ErrorCode::ResponseMalformed, "response body is not JSON");
  }
  if (!j.is_object() || !j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
    throw Error(ErrorCode::ResponseMalformed, "response has no choices");
  }
  const auto& choice = j["choices"][0];
  if (!choice.contains("message") || !choice["message"].contains("content")) {
    throw Error(ErrorCode::ResponseMalformed, "first choice has no message content");
  }
  const auto& content = choice["message"]["content"];
  if (content.is_string()) return content.get<std::string>();
  if (content.is_array()) {
    std::string text;
    for (const auto& part : content) {
      if (part.is_object() && part.value("type", "") == "text") text += part.value("text", "");
    }
    return text;
  }
  throw Error(ErrorCode::ResponseMalformed, "message content is neither text nor parts");
}

std::string HttpChatBackend::complete(const std::vector<ChatTurn>& turns, const ChatParams& params) {
  auto headers = auth_headers(spec_);
  const auto body = request_body(spec_.model_id, turns, params).dump();
  return interpret_response(http_post(spec_.endpoint, body, headers, spec_.request_timeout));
}

ScriptedChatBackend& ScriptedChatBackend::reply(std::string text) {
  std::lock_guard lock(mu_);
  script_.emplace_back(std::move(text));
  return *this;
}

ScriptedChatBackend& ScriptedChatBackend::fault(ErrorCode code, std::string message) {
  std::lock_guard lock(mu_);
  script_.emplace_back(Fault{code, std::move(message)});
  return *this;
}

ScriptedChatBackend& ScriptedChatBackend::respond_with(Responder r) {
  std::lock_guard lock(mu_);
  responder_ = std::move(r);
  return *this;
}

std::string ScriptedChatBackend::complete(const std::vector<ChatTurn>& turns, const ChatParams&) {
  Responder responder;
  {
    std::lock_guard lock(mu_);
    requests_.push_back(turns);
    if (!script_.empty()) {
      auto next = std::move(script_.front());
      script_.pop_front();
      if (auto* f = std::get_if<Fault>(&next)) throw Error(f->code, f->message);
      return std::get<std::string>(std::move(next));
    }
    responder = responder_;
  }
  if (!responder) throw Error(ErrorCode::BackendUnavailable, name_ + ": script exhausted");
  return responder(turns);
}

std::size_t ScriptedChatBackend::calls() const {
  std::lock_guard lock(mu_);
  return requests_.size();
}

std::vector<std::vector<ChatTurn>> ScriptedChatBackend::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

RateLimiter::RateLimiter(double per_second)
    : interval_(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
          std::chrono::duration<double>(per_second > 0 ? 1.0 / per_second : 0.0))),
      next_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_);
    next_ = slot + interval_;
  }
  std::this_thread::sleep_until(slot);
}

ChatClient::ChatClient(std::shared_ptr<ChatBackend> backend, RetryPolicy retry, PixelBounds bounds,
                       double rate_limit)
    : backend_(std::move(backend)), retry_(retry), bounds_(bounds) {
  if (!backend_) throw Error(ErrorCode::InvalidArgument, "chat client needs a backend");
  if (rate_limit > 0) limiter_ = std::make_shared<RateLimiter>(rate_limit);
  sleeper_ = [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
}

ChatReply ChatClient::chat(const std::vector<ChatTurn>& turns, const ChatParams& params) {
  for (const auto& t : turns) {
    if (t.content.empty() && t.images.empty()) throw Error(ErrorCode::InvalidArgument, "chat turn has no content");
    for (const auto& img : t.images) {
      if (!within_bounds(img, bounds_)) {
        throw Error(ErrorCode::InvalidArgument, "image " + std::to_string(img.width) + "x" +
                                                    std::to_string(img.height) + " is outside the pixel bounds");
      }
    }
  }
  ChatReply reply;
  double backoff = retry_.initial_backoff;
  while (true) {
    if (limiter_) limiter_->acquire();
    try {
      reply.text = backend_->complete(turns, params);
      return reply;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TransientFailure) throw;
      if (reply.retries >= retry_.max_retries) {
        throw Error(ErrorCode::BackendUnavailable, backend_->name() + " still failing after " +
                                                       std::to_string(reply.retries) + " retries: " + e.what());
      }
      ++reply.retries;
      sleeper_(backoff);
      backoff *= retry_.multiplier;
    }
  }
}

std::shared_ptr<ChatClient> make_chat_client(const BackendSpec& spec, const PixelBounds& bounds) {
  if (spec.kind != BackendKind::chat) {
    throw Error(ErrorCode::InvalidConfig, "backend '" + spec.name + "' is not a chat backend");
  }
  return std::make_shared<ChatClient>(std::make_shared<HttpChatBackend>(spec),
                                      RetryPolicy{spec.max_retries, spec.backoff_initial, 2.0}, bounds,
                                      spec.rate_limit);
}

// Embedders

EmbeddingVector Embedder::embed_sentence(std::string_view text) {
  const auto toks = embed_tokens(text);
  EmbeddingVector mean(dim(), 0.0);
  if (toks.empty()) return mean;
  for (const auto& v : toks) {
    for (std::size_t i = 0; i < mean.size() && i < v.size(); ++i) mean[i] += v[i];
  }
  for (auto& x : mean) x /= static_cast<double>(toks.size());
  return mean;
}

EmbeddingVector HashStubEmbedder::token_vector(std::string_view token) const {
  EmbeddingVector v(dim_);
  std::uint64_t state = splitmix64(seed_ ^ fnv1a64(token));
  double norm = 0.0;
  for (auto& x : v) {
    state = splitmix64(state);
    x = static_cast<double>(state >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

std::vector<EmbeddingVector> HashStubEmbedder::embed_tokens(std::string_view text) {
  std::vector<EmbeddingVector> out;
  for (const auto& tok : tokenize(text)) out.push_back(token_vector(tok));
  return out;
}

std::vector<EmbeddingVector> TableEmbedder::embed_tokens(std::string_view text) {
  std::vector<EmbeddingVector> out;
  for (const auto& tok : tokenize(text)) {
    auto it = table_.find(tok);
    out.push_back(it == table_.end() ? EmbeddingVector(dim_, 0.0) : it->second);
  }
  return out;
}

HttpEmbedder::HttpEmbedder(BackendSpec spec) : spec_(std::move(spec)) { validate(spec_); }

Json HttpEmbedder::post(const Json& body) {
  const auto headers = auth_headers(spec_);
  const auto payload = body.dump();
  double backoff = spec_.backoff_initial;
  for (int attempt = 0;; ++attempt) {
    try {
      const auto resp = http_post(spec_.endpoint, payload, headers, spec_.request_timeout);
      check_status(resp);
      try {
        return Json::parse(resp.body);
      } catch (const Json::parse_error&) {
        throw Error(ErrorCode::ResponseMalformed, "embedding response is not JSON");
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TransientFailure) throw;
      if (attempt >= spec_.max_retries) throw Error(ErrorCode::BackendUnavailable, e.what());
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      backoff *= 2;
    }
  }
}

namespace {

EmbeddingVector as_vector(const Json& j) {
  if (!j.is_array()) throw Error(ErrorCode::ResponseMalformed, "embedding is not an array");
  EmbeddingVector v;
  v.reserve(j.size());
  for (const auto& x : j) {
    const double d = x.get<double>();
    if (!std::isfinite(d)) throw Error(ErrorCode::ResponseMalformed, "non-finite embedding entry");
    v.push_back(d);
  }
  return v;
}

}  // namespace

std::vector<EmbeddingVector> HttpEmbedder::embed_tokens(std::string_view text) {
  const auto tokens = tokenize(text);
  if (tokens.empty()) return {};
  std::vector<EmbeddingVector> out;
  const Json first = post({{"model", spec_.model_id}, {"input", std::string(text)}});
  const auto& data = first.contains("data") ? first["data"] : Json();
  if (data.is_array() && !data.empty() && data[0].contains("token_embeddings") &&
      data[0]["token_embeddings"].size() == tokens.size()) {
    for (const auto& v : data[0]["token_embeddings"]) out.push_back(as_vector(v));
  } else {
    const Json per_word = post({{"model", spec_.model_id}, {"input", tokens}});
    if (!per_word.contains("data") || per_word["data"].size() != tokens.size()) {
      throw Error(ErrorCode::ResponseMalformed, "per-word embedding count does not match the token count");
    }
    for (const auto& item : per_word["data"]) out.push_back(as_vector(item.at("embedding")));
  }
  std::lock_guard lock(mu_);
  for (const auto& v : out) {
    if (dim_ == 0) dim_ = v.size();
    if (v.size() != dim_) throw Error(ErrorCode::ResponseMalformed, "embedding dimension changed");
  }
  return out;
}

EmbeddingVector HttpEmbedder::embed_sentence(std::string_view text) {
  const Json resp = post({{"model", spec_.model_id}, {"input", std::string(text)}});
  if (!resp.contains("data") || !resp["data"].is_array() || resp["data"].empty()) {
    throw Error(ErrorCode::ResponseMalformed, "embedding response has no data");
  }
  auto v = as_vector(resp["data"][0].at("embedding"));
  std::lock_guard lock(mu_);
  if (dim_ == 0) dim_ = v.size();
  return v;
}

std::shared_ptr<Embedder> make_embedder(const BackendSpec& spec) {
  if (spec.kind != BackendKind::embedding) {
    throw Error(ErrorCode::InvalidConfig, "backend '" + spec.name + "' is not an embedding backend");
  }
  if (spec.endpoint == "mock") return std::make_shared<HashStubEmbedder>();
  return std::make_shared<HttpEmbedder>(spec);
}

}  // namespace sciana
