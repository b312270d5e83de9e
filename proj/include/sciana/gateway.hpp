#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sciana/error.hpp"
#include "sciana/text.hpp"

namespace sciana {

enum class BackendKind { chat, embedding };

struct BackendSpec {
  std::string name;
  std::string endpoint;
  std::string model_id;
  std::string api_key_env;
  BackendKind kind = BackendKind::chat;
  double request_timeout = 120.0;
  int max_retries = 3;
  double backoff_initial = 1.0;
  // Requests per second; 0 disables the limiter.
  double rate_limit = 0.0;
};

/// Throws Error(InvalidConfig) when the endpoint is not an http(s) URL or the timeout is not positive.
void validate(const BackendSpec& spec);
BackendSpec backend_from_json(const Json& j);
Json to_json(const BackendSpec& spec);

struct Url {
  std::string scheme;
  std::string host;
  int port = 0;
  std::string path;
};
std::optional<Url> parse_url(std::string_view url);

struct HttpResponse {
  int status = 0;
  std::string body;
};

// Throws Error(TransientFailure) when no response arrives (connect failure, timeout).
HttpResponse http_post(const std::string& url, const std::string& body, const std::map<std::string, std::string>& headers,
                       double timeout_seconds);
HttpResponse http_get(const std::string& url, const std::map<std::string, std::string>& headers,
                      double timeout_seconds);
std::string url_encode(std::string_view s);

enum class Role { system, user, assistant, tool };
std::string_view to_string(Role r) noexcept;

struct PixelBounds {
  std::int64_t min_pixels = 128 * 128;
  std::int64_t max_pixels = 1024 * 1024;
};

struct ImagePayload {
  std::string mime = "image/png";
  std::string base64;
  int width = 0;
  int height = 0;
};

/// Target size after area-bounded rescaling with the aspect ratio kept.
std::pair<int, int> fit_dimensions(int width, int height, const PixelBounds& bounds);
bool within_bounds(const ImagePayload& img, const PixelBounds& bounds);

/// Decodes, rescales into bounds and re-encodes as PNG. Throws Error(Io) on unreadable input.
ImagePayload load_image(const std::string& path, const PixelBounds& bounds);
ImagePayload prepare_image(const std::string& encoded_bytes, const PixelBounds& bounds);

struct ChatTurn {
  Role role = Role::user;
  std::string content;
  std::vector<ImagePayload> images;
};

struct ChatParams {
  double temperature = 0.0;
  int max_tokens = 2048;
};

/// One request, one attempt. Implementations signal retryable problems with
/// Error(TransientFailure) and everything else with the matching code.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(const std::vector<ChatTurn>& turns, const ChatParams& params) = 0;
  virtual std::string name() const = 0;
};

class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(BackendSpec spec);
  std::string complete(const std::vector<ChatTurn>& turns, const ChatParams& params) override;
  std::string name() const override { return spec_.name; }

  static Json request_body(const std::string& model, const std::vector<ChatTurn>& turns, const ChatParams& params);
  // Maps a raw HTTP exchange onto the error contract. Exposed for tests.
  static std::string interpret_response(const HttpResponse& resp);

 private:
  BackendSpec spec_;
};

class ScriptedChatBackend : public ChatBackend {
 public:
  using Responder = std::function<std::string(const std::vector<ChatTurn>&)>;

  explicit ScriptedChatBackend(std::string name = "scripted") : name_(std::move(name)) {}

  ScriptedChatBackend& reply(std::string text);
  ScriptedChatBackend& fault(ErrorCode code, std::string message = "injected");
  // Used once the queue runs dry; without one an empty queue is BackendUnavailable.
  ScriptedChatBackend& respond_with(Responder r);

  std::string complete(const std::vector<ChatTurn>& turns, const ChatParams& params) override;
  std::string name() const override { return name_; }

  std::size_t calls() const;
  std::vector<std::vector<ChatTurn>> requests() const;

 private:
  struct Fault {
    ErrorCode code;
    std::string message;
  };
  std::string name_;
  mutable std::mutex mu_;
  std::deque<std::variant<std::string, Fault>> script_;
  Responder responder_;
  std::vector<std::vector<ChatTurn>> requests_;
};

class RateLimiter {
 public:
  explicit RateLimiter(double per_second);
  void acquire();

 private:
  std::mutex mu_;
  std::chrono::steady_clock::duration interval_;
  std::chrono::steady_clock::time_point next_;
};

struct ChatReply {
  std::string text;
  int retries = 0;
};

struct RetryPolicy {
  int max_retries = 3;
  double initial_backoff = 1.0;
  double multiplier = 2.0;
};

class ChatClient {
 public:
  using Sleeper = std::function<void(double seconds)>;

  ChatClient(std::shared_ptr<ChatBackend> backend, RetryPolicy retry = {}, PixelBounds bounds = {},
             double rate_limit = 0.0);

  /// Retries TransientFailure with exponential backoff; when retries run out the
  /// failure surfaces as BackendUnavailable. Other errors pass through untouched.
  ChatReply chat(const std::vector<ChatTurn>& turns, const ChatParams& params = {});

  void set_sleeper(Sleeper s) { sleeper_ = std::move(s); }
  const ChatBackend& backend() const { return *backend_; }
  const PixelBounds& bounds() const { return bounds_; }

 private:
  std::shared_ptr<ChatBackend> backend_;
  RetryPolicy retry_;
  PixelBounds bounds_;
  std::shared_ptr<RateLimiter> limiter_;
  Sleeper sleeper_;
};

std::shared_ptr<ChatClient> make_chat_client(const BackendSpec& spec, const PixelBounds& bounds = {});

using EmbeddingVector = std::vector<double>;

class Embedder {
 public:
  virtual ~Embedder() = default;
  /// One vector per evaluation-tokenizer token.
  virtual std::vector<EmbeddingVector> embed_tokens(std::string_view text) = 0;
  /// Defaults to the mean of the token vectors.
  virtual EmbeddingVector embed_sentence(std::string_view text);
  virtual std::size_t dim() const = 0;
};

/// Maps every token to a pseudo-random unit vector keyed by (seed, token).
class HashStubEmbedder : public Embedder {
 public:
  explicit HashStubEmbedder(std::size_t dim = 64, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {}
  std::vector<EmbeddingVector> embed_tokens(std::string_view text) override;
  std::size_t dim() const override { return dim_; }
  EmbeddingVector token_vector(std::string_view token) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Fixed token table; unknown tokens map to the zero vector.
class TableEmbedder : public Embedder {
 public:
  TableEmbedder(std::map<std::string, EmbeddingVector> table, std::size_t dim)
      : table_(std::move(table)), dim_(dim) {}
  std::vector<EmbeddingVector> embed_tokens(std::string_view text) override;
  std::size_t dim() const override { return dim_; }

 private:
  std::map<std::string, EmbeddingVector> table_;
  std::size_t dim_;
};

/// `{model, input}` embedding endpoint. When the response carries
/// `token_embeddings` aligned with our tokenizer those are used; otherwise the
/// words are re-sent one input item each and the pooled vectors stand in for
/// token vectors.
class HttpEmbedder : public Embedder {
 public:
  explicit HttpEmbedder(BackendSpec spec);
  std::vector<EmbeddingVector> embed_tokens(std::string_view text) override;
  EmbeddingVector embed_sentence(std::string_view text) override;
  std::size_t dim() const override { return dim_; }

 private:
  Json post(const Json& body);
  BackendSpec spec_;
  std::size_t dim_ = 0;
  std::mutex mu_;
};

std::shared_ptr<Embedder> make_embedder(const BackendSpec& spec);

}  // namespace sciana
