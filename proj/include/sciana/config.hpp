#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sciana/corpus.hpp"
#include "sciana/evaluation.hpp"
#include "sciana/gateway.hpp"
#include "sciana/orchestrator.hpp"
#include "sciana/rewards.hpp"
#include "sciana/tools.hpp"

namespace sciana {

/// One configuration file drives every command. Relative paths inside it
/// resolve against the file's directory.
struct AppConfig {
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::string out = "runs";

  // corpus
  std::vector<std::string> sources;
  PipelineThresholds thresholds;
  int eval_year = 2025;
  std::size_t max_eval = 0;

  // backends; `chat` serves every agent without its own entry in pipeline.backends
  std::optional<BackendSpec> chat;
  std::optional<BackendSpec> judge;
  std::optional<BackendSpec> embedding;
  std::optional<BackendSpec> vision;
  PixelBounds pixels;
  std::size_t stub_embedding_dim = 64;

  PipelineConfig pipeline;
  ToolSettings tools;
  MetricOptions metrics;
  RewardWeights rewards;
  std::string prompts_dir;

  // Effective configuration, with paths resolved and overrides applied.
  Json effective;

  std::string hash() const;
};

/// Throws Error(InvalidConfig) on schema violations.
AppConfig config_from_json(const Json& j, const std::string& base_dir = ".");
AppConfig load_config(const std::string& path);

}  // namespace sciana
