#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <thread>

// Same configuration as the library build so both sides share one httplib layout.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "fixtures.hpp"
#include "sciana/gateway.hpp"

namespace sciana {
namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidArgument;
}

TEST(ChatClient, RetriesTransientThenSucceeds) {
  auto b = std::make_shared<ScriptedChatBackend>();
  b->fault(ErrorCode::TransientFailure).fault(ErrorCode::TransientFailure).reply("ok");
  ChatClient client(b, RetryPolicy{3, 0.5, 2.0});
  std::vector<double> sleeps;
  client.set_sleeper([&](double s) { sleeps.push_back(s); });
  const auto r = client.chat({{Role::user, "hi", {}}});
  EXPECT_EQ(r.text, "ok");
  EXPECT_EQ(r.retries, 2);
  EXPECT_EQ(sleeps, (std::vector<double>{0.5, 1.0}));
  EXPECT_EQ(b->calls(), 3u);
}

TEST(ChatClient, ExhaustedRetriesBecomeUnavailable) {
  auto b = std::make_shared<ScriptedChatBackend>();
  for (int i = 0; i < 3; ++i) b->fault(ErrorCode::TransientFailure);
  ChatClient client(b, RetryPolicy{2, 0.1, 2.0});
  client.set_sleeper([](double) {});
  EXPECT_EQ(code_of([&] { client.chat({{Role::user, "x", {}}}); }), ErrorCode::BackendUnavailable);
  EXPECT_EQ(b->calls(), 3u);
}

TEST(ChatClient, NonTransientPassesThroughWithoutRetry) {
  auto b = std::make_shared<ScriptedChatBackend>();
  b->fault(ErrorCode::ResponseMalformed).reply("never");
  ChatClient client(b, RetryPolicy{3, 0.1, 2.0});
  client.set_sleeper([](double) { ADD_FAILURE() << "slept"; });
  EXPECT_EQ(code_of([&] { client.chat({{Role::user, "x", {}}}); }), ErrorCode::ResponseMalformed);
  EXPECT_EQ(b->calls(), 1u);
}

TEST(ScriptedBackend, EmptyScriptIsUnavailableAndEmptyTextIsFine) {
  auto b = std::make_shared<ScriptedChatBackend>();
  b->reply("");
  ChatClient client(b, RetryPolicy{0, 0.0, 1.0});
  EXPECT_EQ(client.chat({{Role::user, "x", {}}}).text, "");
  EXPECT_EQ(code_of([&] { client.chat({{Role::user, "x", {}}}); }), ErrorCode::BackendUnavailable);
  b->respond_with([](const std::vector<ChatTurn>& t) { return "echo:" + t.back().content; });
  EXPECT_EQ(client.chat({{Role::user, "y", {}}}).text, "echo:y");
  EXPECT_EQ(b->requests().back().back().content, "y");
}

TEST(InterpretResponse, ErrorContract) {
  EXPECT_EQ(HttpChatBackend::interpret_response({200, R"({"choices":[{"message":{"content":"hi"}}]})"}), "hi");
  EXPECT_EQ(HttpChatBackend::interpret_response(
                {200, R"({"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]})"}),
            "ab");
  EXPECT_EQ(code_of([] { HttpChatBackend::interpret_response({200, "<html>"}); }), ErrorCode::ResponseMalformed);
  EXPECT_EQ(code_of([] { HttpChatBackend::interpret_response({200, R"({"choices":[]})"}); }),
            ErrorCode::ResponseMalformed);
  EXPECT_EQ(code_of([] { HttpChatBackend::interpret_response({503, "busy"}); }), ErrorCode::TransientFailure);
  EXPECT_EQ(code_of([] { HttpChatBackend::interpret_response({429, ""}); }), ErrorCode::TransientFailure);
  EXPECT_EQ(code_of([] { HttpChatBackend::interpret_response({400, "maximum context length exceeded"}); }),
            ErrorCode::ContextOverflow);
  EXPECT_EQ(code_of([] { HttpChatBackend::interpret_response({401, "no key"}); }), ErrorCode::BackendUnavailable);
}

TEST(RequestBody, TextAndImageParts) {
  ImagePayload img;
  img.base64 = "AAAA";
  const auto j = HttpChatBackend::request_body("m", {{Role::system, "s", {}}, {Role::user, "u", {img}}}, {0.2, 64});
  EXPECT_EQ(j["model"], "m");
  EXPECT_EQ(j["messages"][0]["content"], "s");
  EXPECT_EQ(j["messages"][1]["content"][1]["image_url"]["url"], "data:image/png;base64,AAAA");
  EXPECT_EQ(j["max_tokens"], 64);
}

// Local OpenAI-style server; each test registers its own handlers.
class LocalServer {
 public:
  LocalServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST(HttpChat, RoundTripOverLoopback) {
  std::atomic<int> hits{0};
  std::string seen_auth;
  LocalServer srv;
  srv.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    const auto body = Json::parse(req.body);
    if (hits++ == 0) {
      res.status = 503;
      return;
    }
    res.set_content(Json{{"choices", {{{"message", {{"content", "got " + body["messages"][0]["content"].get<std::string>()}}}}}}}.dump(),
                    "application/json");
  });
  ::setenv("SCIANA_TEST_KEY", "secret", 1);
  BackendSpec spec;
  spec.name = "local";
  spec.endpoint = srv.url("/v1/chat/completions");
  spec.model_id = "m";
  spec.api_key_env = "SCIANA_TEST_KEY";
  spec.request_timeout = 5;
  ChatClient client(std::make_shared<HttpChatBackend>(spec), RetryPolicy{2, 0.0, 1.0});
  const auto r = client.chat({{Role::user, "ping", {}}});
  EXPECT_EQ(r.text, "got ping");
  EXPECT_EQ(r.retries, 1);
  EXPECT_EQ(seen_auth, "Bearer secret");
}

TEST(HttpChat, ConnectionRefusedIsTransient) {
  int port = 0;
  {
    LocalServer srv;
    port = std::stoi(srv.url("").substr(17));
  }
  BackendSpec spec;
  spec.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/x";
  spec.request_timeout = 2;
  HttpChatBackend b(spec);
  EXPECT_EQ(code_of([&] { b.complete({{Role::user, "x", {}}}, {}); }), ErrorCode::TransientFailure);
}

TEST(HttpEmbedder, TokenEmbeddingsAndPerWordFallback) {
  LocalServer srv;
  srv.server().Post("/aligned", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"data":[{"embedding":[1,0],"token_embeddings":[[1,0],[0,1]]}]})", "application/json");
  });
  srv.server().Post("/pooled", [](const httplib::Request& req, httplib::Response& res) {
    const auto in = Json::parse(req.body)["input"];
    Json data = Json::array();
    if (in.is_string()) {
      data.push_back({{"embedding", {0.5, 0.5}}});
    } else {
      for (std::size_t i = 0; i < in.size(); ++i) data.push_back({{"embedding", {double(i), 1.0}}});
    }
    res.set_content(Json{{"data", data}}.dump(), "application/json");
  });
  BackendSpec spec;
  spec.kind = BackendKind::embedding;
  spec.endpoint = srv.url("/aligned");
  HttpEmbedder aligned(spec);
  EXPECT_EQ(aligned.embed_tokens("alpha beta"), (std::vector<EmbeddingVector>{{1, 0}, {0, 1}}));
  spec.endpoint = srv.url("/pooled");
  HttpEmbedder pooled(spec);
  EXPECT_EQ(pooled.embed_tokens("alpha beta gamma"), (std::vector<EmbeddingVector>{{0, 1}, {1, 1}, {2, 1}}));
  EXPECT_EQ(pooled.dim(), 2u);
  EXPECT_TRUE(pooled.embed_tokens("").empty());
}

TEST(HashStub, DeterministicUnitVectors) {
  HashStubEmbedder a(32, 3), b(32, 3), c(32, 4);
  EXPECT_EQ(a.token_vector("router"), b.token_vector("router"));
  EXPECT_NE(a.token_vector("router"), c.token_vector("router"));
  double norm = 0;
  for (double x : a.token_vector("router")) norm += x * x;
  EXPECT_NEAR(norm, 1.0, 1e-12);
  EXPECT_EQ(a.embed_tokens("Router, router!").size(), 2u);
  EXPECT_EQ(a.embed_tokens("Router")[0], a.token_vector("router"));
  EXPECT_TRUE(a.embed_tokens("").empty());
}

TEST(Images, FitDimensionsKeepsBoundsAndAspect) {
  const PixelBounds pb{100 * 100, 400 * 400};
  for (auto [w, h] : std::vector<std::pair<int, int>>{{1000, 500}, {10, 10}, {3000, 7}, {200, 200}, {1, 20000}}) {
    const auto [fw, fh] = fit_dimensions(w, h, pb);
    const auto area = static_cast<std::int64_t>(fw) * fh;
    EXPECT_LE(area, pb.max_pixels) << w << "x" << h;
    if (static_cast<std::int64_t>(w) * h >= pb.min_pixels) {
      EXPECT_GE(area, std::min<std::int64_t>(pb.min_pixels, static_cast<std::int64_t>(w) * h));
    }
    if (fw > 2 && fh > 2) {
      EXPECT_NEAR(double(fw) / fh, double(w) / h, 0.02 * double(w) / h + 2.0 / fh);
    }
  }
  EXPECT_EQ(fit_dimensions(200, 200, pb), std::make_pair(200, 200));
  EXPECT_THROW(fit_dimensions(0, 5, pb), Error);
}

TEST(Images, LoadSampleIntoBounds) {
  const PixelBounds pb{32 * 32, 64 * 64};
  const auto img = load_image((test::samples_dir() / "images" / "utilisation.png").string(), pb);
  EXPECT_TRUE(within_bounds(img, pb));
  EXPECT_EQ(img.mime, "image/png");
  EXPECT_EQ(base64_decode(img.base64).substr(1, 3), "PNG");
  EXPECT_EQ(code_of([] { load_image("/nonexistent.png", {}); }), ErrorCode::Io);
  EXPECT_EQ(code_of([] { prepare_image("not an image", {}); }), ErrorCode::Io);
}

TEST(BackendSpec, ValidationAndJson) {
  BackendSpec s;
  s.endpoint = "ftp://x";
  EXPECT_EQ(code_of([&] { validate(s); }), ErrorCode::InvalidConfig);
  s.endpoint = "https://api.example.com/v1/chat";
  s.request_timeout = 0;
  EXPECT_THROW(validate(s), Error);
  s.request_timeout = 30;
  validate(s);
  const auto back = backend_from_json(to_json(s));
  EXPECT_EQ(back.endpoint, s.endpoint);
  const auto u = parse_url(s.endpoint);
  ASSERT_TRUE(u.has_value());
  EXPECT_EQ(u->host, "api.example.com");
  EXPECT_EQ(u->port, 443);
  EXPECT_EQ(u->path, "/v1/chat");
  EXPECT_FALSE(parse_url("nonsense").has_value());
  EXPECT_EQ(url_encode("a b&c"), "a%20b%26c");
}

}  // namespace
}  // namespace sciana
