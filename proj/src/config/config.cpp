#include "sciana/config.hpp"

#include <filesystem>
#include <set>

namespace sciana {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kTopLevel = {"seed",       "workers",  "out",     "corpus",  "backends", "pixels",
                                         "pipeline",   "tools",    "metrics", "rewards", "prompts_dir"};

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

std::optional<BackendSpec> backend_at(const Json& backends, const char* name) {
  if (!backends.contains(name)) return std::nullopt;
  return backend_from_json(backends[name]);
}

MetricOptions metrics_from_json(const Json& j) {
  MetricOptions m;
  if (j.contains("bleu")) {
    const auto& b = j["bleu"];
    m.bleu.max_n = b.value("max_n", m.bleu.max_n);
    m.bleu.weights = b.value("weights", m.bleu.weights);
    m.bleu.epsilon = b.value("epsilon", m.bleu.epsilon);
  }
  if (j.contains("meteor")) {
    const auto& e = j["meteor"];
    m.meteor.alpha = e.value("alpha", m.meteor.alpha);
    m.meteor.beta = e.value("beta", m.meteor.beta);
    m.meteor.gamma = e.value("gamma", m.meteor.gamma);
    m.meteor.state_budget = e.value("state_budget", m.meteor.state_budget);
  }
  m.emit_rouge_l_f = j.value("rouge_l_f", m.emit_rouge_l_f);
  if (m.bleu.max_n < 1) throw Error(ErrorCode::InvalidConfig, "metrics.bleu.max_n must be at least 1");
  if (!(m.meteor.alpha > 0 && m.meteor.alpha <= 1)) {
    throw Error(ErrorCode::InvalidConfig, "metrics.meteor.alpha must lie in (0, 1]");
  }
  return m;
}

Json to_json(const MetricOptions& m) {
  return Json{{"bleu", {{"max_n", m.bleu.max_n}, {"weights", m.bleu.weights}, {"epsilon", m.bleu.epsilon}}},
              {"meteor",
               {{"alpha", m.meteor.alpha},
                {"beta", m.meteor.beta},
                {"gamma", m.meteor.gamma},
                {"state_budget", m.meteor.state_budget}}},
              {"rouge_l_f", m.emit_rouge_l_f}};
}

Json optional_backend(const std::optional<BackendSpec>& b) { return b ? to_json(*b) : Json(); }

}  // namespace

std::string AppConfig::hash() const {
  // Parallelism and output location do not change results.
  Json j = effective;
  if (j.is_object()) {
    j.erase("workers");
    j.erase("out");
  }
  return sha256_hex(j.dump());
}

AppConfig config_from_json(const Json& j, const std::string& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "configuration must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (kTopLevel.count(key) == 0) throw Error(ErrorCode::InvalidConfig, "unknown configuration key '" + key + "'");
  }
  AppConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    c.out = j.value("out", c.out);
    if (c.workers == 0) throw Error(ErrorCode::InvalidConfig, "workers must be at least 1");

    const Json corpus = j.value("corpus", Json::object());
    for (const auto& s : corpus.value("sources", std::vector<std::string>{})) c.sources.push_back(resolve(base_dir, s));
    c.thresholds = thresholds_from_json(corpus.value("thresholds", Json::object()));
    c.eval_year = corpus.value("eval_year", c.eval_year);
    c.max_eval = corpus.value("max_eval", c.max_eval);

    const Json backends = j.value("backends", Json::object());
    c.chat = backend_at(backends, "chat");
    c.judge = backend_at(backends, "judge");
    c.embedding = backend_at(backends, "embedding");
    c.vision = backend_at(backends, "vision");
    for (const auto& [name, _] : backends.items()) {
      if (name != "chat" && name != "judge" && name != "embedding" && name != "vision" &&
          name != "stub_embedding_dim") {
        throw Error(ErrorCode::InvalidConfig, "unknown backend role '" + name + "'");
      }
    }
    if (c.embedding && c.embedding->kind != BackendKind::embedding) {
      throw Error(ErrorCode::InvalidConfig, "backends.embedding must have kind embedding");
    }
    c.stub_embedding_dim = backends.value("stub_embedding_dim", c.stub_embedding_dim);

    const Json pixels = j.value("pixels", Json::object());
    c.pixels.min_pixels = pixels.value("min", c.pixels.min_pixels);
    c.pixels.max_pixels = pixels.value("max", c.pixels.max_pixels);
    if (c.pixels.min_pixels <= 0 || c.pixels.max_pixels < c.pixels.min_pixels) {
      throw Error(ErrorCode::InvalidConfig, "pixels must satisfy 0 < min <= max");
    }

    Json pipeline = j.value("pipeline", Json::object());
    if (pipeline.contains("exemplars")) {
      pipeline["exemplars"] = resolve(base_dir, pipeline["exemplars"].get<std::string>());
    }
    c.pipeline = pipeline_config_from_json(pipeline);

    Json tools = j.value("tools", Json::object());
    if (tools.contains("cache_dir")) tools["cache_dir"] = resolve(base_dir, tools["cache_dir"].get<std::string>());
    c.tools = tool_settings_from_json(tools);

    c.metrics = metrics_from_json(j.value("metrics", Json::object()));
    c.rewards = reward_weights_from_json(j.value("rewards", Json::object()));
    if (j.contains("prompts_dir")) c.prompts_dir = resolve(base_dir, j["prompts_dir"].get<std::string>());
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }

  c.effective = Json{{"seed", c.seed},
                     {"workers", c.workers},
                     {"out", c.out},
                     {"corpus",
                      {{"sources", c.sources},
                       {"thresholds", to_json(c.thresholds)},
                       {"eval_year", c.eval_year},
                       {"max_eval", c.max_eval}}},
                     {"backends",
                      {{"chat", optional_backend(c.chat)},
                       {"judge", optional_backend(c.judge)},
                       {"embedding", optional_backend(c.embedding)},
                       {"vision", optional_backend(c.vision)},
                       {"stub_embedding_dim", c.stub_embedding_dim}}},
                     {"pixels", {{"min", c.pixels.min_pixels}, {"max", c.pixels.max_pixels}}},
                     {"pipeline", to_json(c.pipeline)},
                     {"tools", to_json(c.tools)},
                     {"metrics", to_json(c.metrics)},
                     {"rewards", to_json(c.rewards)},
                     {"prompts_dir", c.prompts_dir}};
  return c;
}

AppConfig load_config(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path + ": " + e.what());
  }
  return config_from_json(j, fs::path(path).parent_path().string());
}

}  // namespace sciana
