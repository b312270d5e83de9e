#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>

#include "sciana/config.hpp"
#include "sciana/parallel.hpp"
#include "sciana/protocol.hpp"

namespace sciana::cli {

namespace fs = std::filesystem;

namespace {

std::string utc_now(const char* format) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, format, &tm);
  return buf;
}

void write_json(const fs::path& path, const Json& j) {
  // Write-then-rename so an interrupted run never leaves a torn file.
  const fs::path tmp = path.string() + ".tmp";
  write_file(tmp.string(), j.dump(2) + "\n");
  fs::rename(tmp, path);
}

void write_jsonl(const fs::path& path, const std::vector<Json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  const fs::path tmp = path.string() + ".tmp";
  write_file(tmp.string(), out);
  fs::rename(tmp, path);
}

std::vector<Json> read_jsonl(const std::string& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::Io, "no such file: " + path);
  std::ifstream in(path);
  std::vector<Json> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      rows.push_back(Json::parse(line));
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::InvalidArgument, path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return rows;
}

std::vector<AnalysisInstance> load_instances(const std::string& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::Io, "no such file: " + path);
  auto v = read_instances(path);
  std::set<std::string> seen;
  for (const auto& inst : v) {
    if (!seen.insert(inst.instance_id).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate instance_id " + inst.instance_id + " in " + path);
    }
  }
  return v;
}

fs::path dir_of(const std::string& file) {
  const auto p = fs::path(file).parent_path();
  return p.empty() ? fs::path(".") : p;
}

std::string relocate(const std::string& rel, const fs::path& from_dir, const fs::path& to_dir) {
  if (rel.empty() || fs::path(rel).is_absolute()) return rel;
  return fs::relative(fs::absolute(from_dir / rel), fs::absolute(to_dir)).string();
}

// Keeps source and image paths valid when an instance file moves directory.
void rebase(AnalysisInstance& inst, const fs::path& from_dir, const fs::path& to_dir) {
  inst.source.path = relocate(inst.source.path, from_dir, to_dir);
  for (auto& in : inst.inputs) {
    if (in.image_ref) in.image_ref = relocate(*in.image_ref, from_dir, to_dir);
  }
}

std::string file_stem_for(const std::string& id) {
  std::string safe;
  for (char c : id) safe.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_');
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(id)));
  return safe.substr(0, 80) + "-" + std::string(hex, 8);
}

struct Context {
  Globals g;
  AppConfig cfg;
  fs::path run_dir;
  Json manifest;
};

Json raw_config(const Globals& g, std::string& base_dir) {
  Json raw = Json::object();
  base_dir = ".";
  if (!g.config.empty()) {
    if (!fs::exists(g.config)) throw Error(ErrorCode::Io, "no such config file: " + g.config);
    try {
      raw = Json::parse(read_file(g.config));
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::InvalidConfig, g.config + ": " + e.what());
    }
    base_dir = dir_of(g.config).string();
  }
  if (g.seed) raw["seed"] = *g.seed;
  if (g.workers) raw["workers"] = *g.workers;
  if (g.out) raw["out"] = *g.out;
  if (!g.replay.empty()) {
    raw["tools"]["cache_mode"] = "replay";
    raw["tools"]["cache_dir"] = fs::absolute(g.replay).string();
  }
  return raw;
}

AppConfig effective_config(const Globals& g, const std::function<void(Json&)>& tweak = {}) {
  std::string base;
  Json raw = raw_config(g, base);
  if (tweak) tweak(raw);
  return config_from_json(raw, base);
}

std::string backend_name(const Context& c, Agent a) {
  if (c.g.mock) return "mock";
  const auto it = c.cfg.pipeline.backends.find(a);
  if (it != c.cfg.pipeline.backends.end()) return it->second.name;
  return c.cfg.chat ? c.cfg.chat->name : "unset";
}

Context open_context(const Globals& g, const std::string& command, const std::vector<std::string>& inputs,
                     const std::function<void(Json&)>& tweak = {}) {
  Context c;
  c.g = g;
  c.cfg = effective_config(g, tweak);
  const std::string hash = c.cfg.hash();
  if (!g.resume.empty()) {
    c.run_dir = g.resume;
    const auto mpath = c.run_dir / "run_manifest.json";
    if (!fs::exists(mpath)) throw Error(ErrorCode::Io, "no run manifest in " + g.resume);
    const auto old = Json::parse(read_file(mpath.string()));
    if (old.value("config_hash", "") != hash || old.value("command", "") != command ||
        old.value("mock", false) != g.mock) {
      throw Error(ErrorCode::InvalidConfig, "resume target was produced by a different command or configuration");
    }
  } else if (!g.run_dir.empty()) {
    c.run_dir = g.run_dir;
  } else {
    const std::string stem = utc_now("%Y%m%dT%H%M%SZ") + "_" + hash.substr(0, 8);
    c.run_dir = fs::path(c.cfg.out) / stem;
    for (int n = 2; fs::exists(c.run_dir); ++n) c.run_dir = fs::path(c.cfg.out) / (stem + "-" + std::to_string(n));
  }
  fs::create_directories(c.run_dir);
  Json backends = Json::object();
  for (Agent a : {Agent::planner, Agent::expert, Agent::solver, Agent::critic}) {
    backends[std::string(to_string(a))] = backend_name(c, a);
  }
  backends["judge"] = g.mock ? "mock" : c.cfg.judge ? c.cfg.judge->name : c.cfg.chat ? c.cfg.chat->name : "unset";
  backends["embedding"] = g.mock || !c.cfg.embedding ? std::string("hash-stub") : c.cfg.embedding->name;
  backends["vision"] = g.mock ? "mock" : c.cfg.vision ? c.cfg.vision->name : "unset";
  std::vector<std::string> abs_inputs;
  for (const auto& i : inputs) abs_inputs.push_back(fs::absolute(i).lexically_normal().string());
  c.manifest = Json{{"command", command},
                    {"config_hash", hash},
                    {"seed", c.cfg.seed},
                    {"inputs", abs_inputs},
                    {"backends", backends},
                    {"variant", to_string(c.cfg.pipeline.variant)},
                    {"mock", g.mock},
                    {"replay", !g.replay.empty()},
                    {"started_at", utc_now("%Y-%m-%dT%H:%M:%SZ")},
                    {"finished_at", nullptr},
                    {"out_dir", fs::absolute(c.run_dir).lexically_normal().string()},
                    {"status", "running"}};
  write_json(c.run_dir / "config.json", c.cfg.effective);
  write_json(c.run_dir / "run_manifest.json", c.manifest);
  return c;
}

void finish(Context& c, Json counts) {
  c.manifest["finished_at"] = utc_now("%Y-%m-%dT%H:%M:%SZ");
  c.manifest["status"] = "complete";
  c.manifest["counts"] = std::move(counts);
  write_json(c.run_dir / "run_manifest.json", c.manifest);
  std::cout << "run_dir: " << c.run_dir.string() << "\n";
}

std::shared_ptr<ChatClient> mock_client() {
  static const auto client = make_mock_client();
  return client;
}

std::shared_ptr<ChatClient> judge_client(const Context& c) {
  if (c.g.mock) return mock_client();
  if (c.cfg.judge) return make_chat_client(*c.cfg.judge, c.cfg.pixels);
  if (c.cfg.chat) return make_chat_client(*c.cfg.chat, c.cfg.pixels);
  throw Error(ErrorCode::InvalidConfig, "no judge backend: set backends.judge or backends.chat, or pass --mock");
}

std::shared_ptr<Embedder> embedder_for(const AppConfig& cfg, bool mock) {
  if (mock) return std::make_shared<HashStubEmbedder>(cfg.stub_embedding_dim, cfg.seed);
  if (cfg.embedding) return make_embedder(*cfg.embedding);
  throw Error(ErrorCode::InvalidConfig, "no embedding backend: set backends.embedding or pass --mock");
}

AgentClients agent_clients(const Context& c) {
  AgentClients out;
  if (c.g.mock) {
    out.fallback = mock_client();
    return out;
  }
  for (const auto& [agent, spec] : c.cfg.pipeline.backends) out.by_agent[agent] = make_chat_client(spec, c.cfg.pixels);
  if (c.cfg.chat) out.fallback = make_chat_client(*c.cfg.chat, c.cfg.pixels);
  const auto& st = c.cfg.pipeline.stages;
  std::vector<Agent> active{Agent::solver};
  if (st.planner) active.push_back(Agent::planner);
  if (st.expert) active.push_back(Agent::expert);
  if (st.critic) active.push_back(Agent::critic);
  for (Agent a : active) {
    if (!out.by_agent.count(a) && !out.fallback) {
      throw Error(ErrorCode::InvalidConfig,
                  "no chat backend for the " + std::string(to_string(a)) + ": set backends.chat or pass --mock");
    }
  }
  return out;
}

std::unique_ptr<ToolExecutor> make_executor(const AppConfig& cfg, bool mock) {
  std::shared_ptr<ChatClient> vision;
  HttpGetFn http;
  if (mock) {
    vision = mock_client();
    http = [](const std::string&, const std::map<std::string, std::string>&) -> HttpResponse {
      throw Error(ErrorCode::BackendUnavailable, "network access is disabled in mock mode");
    };
  } else if (cfg.vision) {
    vision = make_chat_client(*cfg.vision, cfg.pixels);
  }
  return std::make_unique<ToolExecutor>(ToolRegistry::standard(), cfg.tools, vision, http);
}

PromptSet prompts_for(const AppConfig& cfg) {
  return cfg.prompts_dir.empty() ? PromptSet::builtin() : PromptSet::with_overrides(cfg.prompts_dir);
}

class DocumentCache {
 public:
  std::shared_ptr<const PaperDocument> get(const fs::path& path) {
    const std::string key = fs::absolute(path).lexically_normal().string();
    std::lock_guard lock(mu_);
    auto it = docs_.find(key);
    if (it != docs_.end()) return it->second;
    std::shared_ptr<const PaperDocument> doc;
    if (fs::exists(key)) {
      try {
        doc = std::make_shared<const PaperDocument>(load_document(key));
      } catch (const Error&) {
        doc = nullptr;
      }
    }
    docs_[key] = doc;
    return doc;
  }

 private:
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<const PaperDocument>> docs_;
};

PipelineEnv instance_env(const PipelineEnv& base, const AnalysisInstance& inst, const fs::path& inst_dir,
                         DocumentCache& docs) {
  PipelineEnv env = base;
  env.image_dir = inst_dir.string();
  if (!inst.source.path.empty()) {
    const fs::path src = inst_dir / inst.source.path;
    env.tool_context.document = docs.get(src);
    env.tool_context.base_dir = dir_of(src.string()).string();
  } else {
    env.tool_context.base_dir = inst_dir.string();
  }
  return env;
}

PipelineEnv base_env(const Context& c, ToolExecutor* executor) {
  PipelineEnv env;
  env.clients = agent_clients(c);
  env.prompts = prompts_for(c.cfg);
  if (c.cfg.pipeline.k_shot > 0) {
    if (c.cfg.pipeline.exemplar_path.empty()) {
      throw Error(ErrorCode::InvalidConfig, "k_shot > 0 needs pipeline.exemplars");
    }
    env.exemplars = ExemplarPool::load(c.cfg.pipeline.exemplar_path);
  }
  env.executor = executor;
  return env;
}

// Latency is wall-clock noise; dropping it keeps mock and replay artifacts byte-identical.
void strip_latency(AgentTranscript& t) {
  for (auto& turn : t.expert_turns) {
    if (turn.result) turn.result->latency_ms = 0.0;
  }
}

std::vector<std::string> expand_sources(const std::vector<std::string>& inputs) {
  std::vector<std::string> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(in)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".tex" || ext == ".xml")) found.push_back(e.path().string());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(in)) {
      files.push_back(in);
    } else {
      throw Error(ErrorCode::Io, "no such source: " + in);
    }
  }
  return files;
}

std::map<std::string, std::string> read_generated(const std::string& path) {
  std::map<std::string, std::string> out;
  for (const auto& row : read_jsonl(path)) {
    if (!row.contains("instance_id")) throw Error(ErrorCode::InvalidArgument, path + ": record without instance_id");
    const auto id = row["instance_id"].get<std::string>();
    std::string text;
    if (row.contains("analysis")) {
      text = row["analysis"].get<std::string>();
    } else if (row.contains("gold")) {
      text = row["gold"].get<std::string>();
    } else {
      throw Error(ErrorCode::InvalidArgument, path + ": record " + id + " has neither analysis nor gold");
    }
    if (!out.emplace(id, std::move(text)).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate instance_id " + id + " in " + path);
    }
  }
  return out;
}

void check_alignment(const std::vector<AnalysisInstance>& gold, const std::map<std::string, std::string>& generated) {
  std::set<std::string> gold_ids;
  Json missing = Json::array();
  Json extra = Json::array();
  for (const auto& g : gold) {
    gold_ids.insert(g.instance_id);
    if (!generated.count(g.instance_id)) missing.push_back(g.instance_id);
  }
  for (const auto& [id, _] : generated) {
    if (!gold_ids.count(id)) extra.push_back(id);
  }
  if (!missing.empty() || !extra.empty()) {
    throw Error(ErrorCode::IdMismatch, Json{{"missing_generated", missing}, {"unexpected_generated", extra}}.dump());
  }
}

std::vector<JudgeEntry> run_judge(const Context& c, const std::vector<AnalysisInstance>& gold,
                                  const std::map<std::string, std::string>& generated, std::vector<std::string>& excluded) {
  auto client = judge_client(c);
  const auto prompts = prompts_for(c.cfg);
  std::vector<std::optional<JudgeEntry>> slots(gold.size());
  parallel_for(gold.size(), c.cfg.workers, [&](std::size_t i) {
    const auto& g = gold[i];
    try {
      slots[i] = judge_five_dim(g.instance_id, g.labels.data_type.empty() ? "table" : g.labels.data_type, g.gold,
                                generated.at(g.instance_id), *client, prompts.judge);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::JudgeUnparseable) throw;
    }
  });
  std::vector<JudgeEntry> entries;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (slots[i]) {
      entries.push_back(*slots[i]);
    } else {
      excluded.push_back(gold[i].instance_id);
    }
  }
  return entries;
}

Aggregates score_single(const std::string& gold, const std::string& cand, Embedder& emb, const MetricOptions& opt,
                        const std::string& id) {
  return aggregate({score_pair(gold, cand, emb, opt)}, {id}).aggregates;
}

std::string last_reply(const AgentTranscript& t, Agent a) {
  for (auto it = t.calls.rbegin(); it != t.calls.rend(); ++it) {
    if (it->agent == a && !it->replies.empty()) return it->replies.back();
  }
  return "";
}

}  // namespace

int corpus_build(const Globals& g, const CorpusBuildArgs& a) {
  auto probe = effective_config(g);
  const auto inputs = a.inputs.empty() ? probe.sources : a.inputs;
  if (inputs.empty()) throw Error(ErrorCode::InvalidConfig, "no sources: pass --input or set corpus.sources");
  const auto files = expand_sources(inputs);
  Context c = open_context(g, "corpus build", files);

  std::vector<PaperDocument> docs;
  std::map<std::string, std::string> path_of;
  for (const auto& f : files) {
    docs.push_back(load_document(f));
    path_of[docs.back().meta.paper_id] = f;
  }
  auto result = build_corpus(docs, c.cfg.thresholds, c.cfg.workers);
  for (auto& inst : result.instances) {
    const auto it = path_of.find(inst.source.meta.paper_id);
    if (it == path_of.end()) continue;
    const fs::path src = it->second;
    inst.source.path = src.filename().string();
    rebase(inst, dir_of(src.string()), c.run_dir);
  }
  write_instances((c.run_dir / "instances.jsonl").string(), result.instances);
  write_json(c.run_dir / "stage_report.json", result.report.to_json());
  std::cout << "papers: " << result.report.papers_in << " accepted: " << result.report.papers_accepted
            << " instances: " << result.instances.size() << "\n";
  finish(c, Json{{"papers", result.report.papers_in}, {"instances", result.instances.size()}});
  return 0;
}

int corpus_classify(const Globals& g, const InstancesArgs& a) {
  auto instances = load_instances(a.instances);
  Context c = open_context(g, "corpus classify", {a.instances});
  auto client = judge_client(c);
  parallel_for(instances.size(), c.cfg.workers, [&](std::size_t i) {
    classify_rule(instances[i]);
    classify_mllm(instances[i], *client);
  });
  std::map<std::string, std::size_t> unknown;
  for (auto& inst : instances) {
    rebase(inst, dir_of(a.instances), c.run_dir);
    if (inst.labels.depth == "unknown") ++unknown["depth"];
    if (inst.labels.objective == "unknown") ++unknown["objective"];
  }
  write_instances((c.run_dir / "instances.jsonl").string(), instances);
  std::cout << "labelled: " << instances.size() << "\n";
  finish(c, Json{{"instances", instances.size()}, {"unknown", unknown}});
  return 0;
}

int corpus_split(const Globals& g, const SplitArgs& a) {
  auto instances = load_instances(a.instances);
  Context c = open_context(g, "corpus split", {a.instances}, [&](Json& raw) {
    if (a.eval_year) raw["corpus"]["eval_year"] = *a.eval_year;
    if (a.max_eval) raw["corpus"]["max_eval"] = *a.max_eval;
  });
  for (auto& inst : instances) rebase(inst, dir_of(a.instances), c.run_dir);
  const auto parts = split_eval(instances, c.cfg.eval_year, c.cfg.seed, c.cfg.max_eval);
  write_instances((c.run_dir / "train.jsonl").string(), parts.train);
  write_instances((c.run_dir / "eval.jsonl").string(), parts.eval);
  std::cout << "train: " << parts.train.size() << " eval: " << parts.eval.size() << "\n";
  finish(c, Json{{"train", parts.train.size()}, {"eval", parts.eval.size()}});
  return 0;
}

int run(const Globals& g, const RunArgs& a) {
  const auto instances = load_instances(a.instances);
  if (instances.empty()) throw Error(ErrorCode::EmptyInput, "no instances in " + a.instances);
  Context c = open_context(g, "run", {a.instances}, [&](Json& raw) {
    if (!a.variant.empty()) raw["pipeline"]["variant"] = a.variant;
  });
  auto executor = make_executor(c.cfg, g.mock);
  const PipelineEnv base = base_env(c, executor.get());
  const fs::path inst_dir = dir_of(a.instances);
  const fs::path tdir = c.run_dir / "transcripts";
  fs::create_directories(tdir);
  DocumentCache docs;

  std::mutex mu;
  std::map<std::string, std::string> failures;
  std::size_t resumed = 0;
  parallel_for(instances.size(), c.cfg.workers, [&](std::size_t i) {
    const auto& inst = instances[i];
    const fs::path out = tdir / (file_stem_for(inst.instance_id) + ".json");
    if (!g.resume.empty() && fs::exists(out)) {
      try {
        transcript_from_json(Json::parse(read_file(out.string())));
        std::lock_guard lock(mu);
        ++resumed;
        return;
      } catch (const std::exception&) {
        // Unreadable leftovers are recomputed.
      }
    }
    try {
      const auto env = instance_env(base, inst, inst_dir, docs);
      auto t = run_pipeline(inst, c.cfg.pipeline, env);
      if (g.mock || !g.replay.empty()) strip_latency(t);
      write_json(out, to_json(t));
    } catch (const std::exception& e) {
      std::lock_guard lock(mu);
      failures[inst.instance_id] = e.what();
    }
  });

  std::vector<Json> generated;
  Json failed = Json::array();
  for (const auto& inst : instances) {
    const fs::path out = tdir / (file_stem_for(inst.instance_id) + ".json");
    if (fs::exists(out)) {
      const auto t = transcript_from_json(Json::parse(read_file(out.string())));
      generated.push_back(Json{{"instance_id", t.instance_id},
                               {"analysis", t.final_answer},
                               {"parsed", t.solution_parsed.empty() ? false : bool(t.solution_parsed.back())},
                               {"model_call_count", t.model_call_count}});
    } else {
      failed.push_back(Json{{"instance_id", inst.instance_id}, {"error", failures[inst.instance_id]}});
    }
  }
  write_jsonl(c.run_dir / "generated.jsonl", generated);
  write_json(c.run_dir / "failures.json", failed);
  std::cout << "completed: " << generated.size() << " resumed: " << resumed << " failed: " << failed.size() << "\n";
  finish(c, Json{{"instances", instances.size()},
                 {"completed", generated.size()},
                 {"resumed", resumed},
                 {"failed", failed.size()}});
  return 0;
}

int eval(const Globals& g, const EvalArgs& a) {
  const auto gold = load_instances(a.gold);
  const auto generated = read_generated(a.generated);
  check_alignment(gold, generated);
  if (gold.empty()) throw Error(ErrorCode::EmptyInput, "no instances in " + a.gold);
  std::vector<std::string> inputs{a.generated, a.gold};
  if (!a.baseline.empty()) inputs.push_back(a.baseline);
  Context c = open_context(g, a.judge ? "eval --judge" : "eval", inputs);
  auto emb = embedder_for(c.cfg, g.mock);

  std::vector<MetricVector> vectors(gold.size());
  std::vector<std::string> ids;
  for (const auto& inst : gold) ids.push_back(inst.instance_id);
  parallel_for(gold.size(), c.cfg.workers, [&](std::size_t i) {
    vectors[i] = score_pair(gold[i].gold, generated.at(gold[i].instance_id), *emb, c.cfg.metrics);
  });
  auto report = aggregate(vectors, ids);
  if (!a.baseline.empty()) {
    if (!fs::exists(a.baseline)) throw Error(ErrorCode::Io, "no such baseline report: " + a.baseline);
    const auto base = score_report_from_json(Json::parse(read_file(a.baseline)));
    report.deltas = delta(report.aggregates, base.aggregates);
  }
  if (a.judge) {
    std::vector<std::string> excluded;
    auto entries = run_judge(c, gold, generated, excluded);
    report.judge = aggregate_judge(std::move(entries), std::move(excluded));
  }
  write_json(c.run_dir / "report.json", to_json(report));
  const std::string table = summary_table(report, fs::path(a.generated).stem().string());
  write_file((c.run_dir / "summary.txt").string(), table);
  std::cout << table;
  finish(c, Json{{"instances", gold.size()}, {"s_avg", report.aggregates.s_avg}});
  return 0;
}

int judge(const Globals& g, const EvalArgs& a) {
  const auto gold = load_instances(a.gold);
  const auto generated = read_generated(a.generated);
  check_alignment(gold, generated);
  Context c = open_context(g, "judge", {a.generated, a.gold});
  std::vector<std::string> excluded;
  auto entries = run_judge(c, gold, generated, excluded);
  const auto report = aggregate_judge(std::move(entries), std::move(excluded));
  write_json(c.run_dir / "judge.json", to_json(report));
  std::cout << "S_Mllm: " << report.s_mllm << " excluded: " << report.excluded.size() << "\n";
  finish(c, Json{{"instances", gold.size()}, {"excluded", report.excluded.size()}});
  return 0;
}

int reward_audit(const Globals& g, const AuditArgs& a) {
  const auto gold = load_instances(a.gold);
  std::map<std::string, const AnalysisInstance*> by_id;
  for (const auto& inst : gold) by_id[inst.instance_id] = &inst;
  std::vector<std::string> files;
  if (fs::is_directory(a.transcripts)) {
    for (const auto& e : fs::directory_iterator(a.transcripts)) {
      if (e.path().extension() == ".json") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::exists(a.transcripts)) {
    files.push_back(a.transcripts);
  } else {
    throw Error(ErrorCode::Io, "no such transcripts: " + a.transcripts);
  }
  Context c = open_context(g, "reward audit", {a.transcripts, a.gold});
  auto emb = embedder_for(c.cfg, g.mock);
  std::vector<Json> rows;
  double solver_sum = 0.0;
  std::size_t skipped = 0;
  for (const auto& f : files) {
    const auto t = transcript_from_json(Json::parse(read_file(f)));
    const auto it = by_id.find(t.instance_id);
    const std::string z = last_reply(t, Agent::solver);
    if (it == by_id.end() || z.empty() || token_count(it->second->gold) == 0) {
      ++skipped;
      continue;
    }
    const auto solver = solver_reward(z, it->second->gold, c.cfg.rewards, *emb);
    solver_sum += solver.total;
    Json formats = Json::object();
    const std::string p = last_reply(t, Agent::planner);
    formats["planner"] = p.empty() ? Json() : Json(format_reward(p, Agent::planner));
    const std::string k = last_reply(t, Agent::critic);
    formats["critic"] = k.empty() ? Json() : Json(format_reward(k, Agent::critic));
    std::size_t expert_ok = 0;
    std::size_t expert_n = 0;
    for (const auto& call : t.calls) {
      if (call.agent != Agent::expert || call.replies.empty()) continue;
      ++expert_n;
      expert_ok += static_cast<std::size_t>(format_reward(call.replies.back(), Agent::expert));
    }
    formats["expert"] = expert_n == 0 ? Json() : Json(static_cast<double>(expert_ok) / static_cast<double>(expert_n));
    rows.push_back(Json{{"instance_id", t.instance_id}, {"solver", to_json(solver)}, {"format", formats}});
  }
  write_jsonl(c.run_dir / "rewards.jsonl", rows);
  const double mean = rows.empty() ? 0.0 : solver_sum / static_cast<double>(rows.size());
  std::cout << "audited: " << rows.size() << " skipped: " << skipped << " mean solver reward: " << mean << "\n";
  finish(c, Json{{"audited", rows.size()}, {"skipped", skipped}, {"mean_solver_reward", mean}});
  return 0;
}

int reward_prefs(const Globals& g, const PrefsArgs& a) {
  const auto instances = load_instances(a.instances);
  std::map<std::string, const AnalysisInstance*> by_id;
  for (const auto& inst : instances) by_id[inst.instance_id] = &inst;
  const auto groups = read_jsonl(a.candidates);
  Context c = open_context(g, "reward prefs", {a.instances, a.candidates}, [&](Json& raw) {
    if (!a.variant.empty()) raw["pipeline"]["variant"] = a.variant;
  });
  auto executor = make_executor(c.cfg, g.mock);
  const PipelineEnv base = base_env(c, executor.get());
  auto emb = embedder_for(c.cfg, g.mock);
  const fs::path inst_dir = dir_of(a.instances);
  DocumentCache docs;

  std::vector<Json> records;
  Json verdicts = Json::array();
  std::size_t kept_total = 0;
  for (const auto& group : groups) {
    const auto id = group.at("instance_id").get<std::string>();
    const Agent agent = parse_agent(group.at("agent").get<std::string>());
    if (agent != Agent::planner && agent != Agent::critic) {
      throw Error(ErrorCode::InvalidArgument, "preference candidates must target the planner or the critic");
    }
    if (agent == Agent::critic && (!c.cfg.pipeline.stages.critic || c.cfg.pipeline.M_s < 2)) {
      throw Error(ErrorCode::InvalidConfig, "critique candidates need an active critic and M_s >= 2");
    }
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw Error(ErrorCode::IdMismatch, "candidate group for unknown instance " + id);
    const AnalysisInstance& inst = *it->second;

    std::vector<PreferenceCandidate> cands;
    for (const auto& cj : group.at("candidates")) {
      cands.push_back({cj.at("id").get<std::string>(), cj.at("text").get<std::string>(),
                       cj.value("provenance", Json::object())});
    }
    const auto env = instance_env(base, inst, inst_dir, docs);
    const auto base_t = run_pipeline(inst, c.cfg.pipeline, env);
    const Aggregates base_scores = score_single(inst.gold, base_t.final_answer, *emb, c.cfg.metrics, id);
    const CandidateRunner runner = [&](const PreferenceCandidate& cand) {
      PipelineEnv e = env;
      if (agent == Agent::planner) {
        auto bullets = plan_bullets(cand.text);
        if (bullets.empty() && !trim(cand.text).empty()) bullets.push_back(trim(cand.text));
        e.plan_override = bullets;
      } else {
        e.feedback_override = cand.text;
      }
      const auto t = run_pipeline(inst, c.cfg.pipeline, e);
      return score_single(inst.gold, t.final_answer, *emb, c.cfg.metrics, id);
    };
    const auto outcome = preference_filter(cands, runner, base_scores);
    for (const auto& v : outcome.verdicts) {
      Json vj{{"instance_id", id}, {"agent", to_string(agent)}, {"candidate", v.id}, {"kept", v.kept},
              {"failed", v.failed}};
      if (v.failed) vj["error"] = v.error;
      if (v.deltas) {
        vj["deltas"] = Json{{"s_lex", v.deltas->s_lex.abs}, {"s_sem", v.deltas->s_sem.abs}, {"s_avg", v.deltas->s_avg.abs}};
      }
      verdicts.push_back(vj);
    }
    if (outcome.kept.empty()) continue;
    kept_total += outcome.kept.size();

    std::vector<PreferenceCandidate> others;
    std::string own = agent == Agent::planner ? base_t.plan.render()
                                              : (base_t.critiques.empty() ? std::string() : base_t.critiques[0].feedback);
    if (!trim(own).empty()) others.push_back({"pipeline", own, Json{{"source", "pipeline"}}});
    std::set<std::string> kept_ids;
    for (const auto& k : outcome.kept) kept_ids.insert(k.id);
    for (const auto& cand : cands) {
      if (!kept_ids.count(cand.id)) others.push_back(cand);
    }
    auto record = build_preference_record("", others, outcome.kept, c.cfg.seed ^ fnv1a64(id),
                                          Json{{"instance_id", id}, {"agent", to_string(agent)},
                                               {"config_hash", c.manifest["config_hash"]}});
    record.prompt = selection_prompt(agent, render_task_problem(inst, c.cfg.pipeline.requirements), record.options);
    records.push_back(to_json(record));
  }
  write_jsonl(c.run_dir / "preferences.jsonl", records);
  write_json(c.run_dir / "prefs_report.json", verdicts);
  std::cout << "groups: " << groups.size() << " records: " << records.size() << " kept: " << kept_total << "\n";
  finish(c, Json{{"groups", groups.size()}, {"records", records.size()}, {"kept", kept_total}});
  return 0;
}

int tools_list(const Globals& g, bool as_json) {
  (void)g;
  const auto reg = ToolRegistry::standard();
  if (!as_json) {
    std::cout << reg->describe() << "\n";
    return 0;
  }
  Json out = Json::array();
  for (const auto& s : reg->specs()) {
    Json params = Json::array();
    for (const auto& p : s.params) {
      params.push_back(Json{{"name", p.name}, {"required", p.required}, {"choices", p.choices},
                            {"description", p.description}});
    }
    out.push_back(Json{{"name", s.name}, {"toolkit", to_string(s.toolkit)}, {"description", s.description},
                       {"params", params}, {"any_of", s.any_of}});
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int tools_invoke(const Globals& g, const ToolsInvokeArgs& a) {
  const auto cfg = effective_config(g);
  auto executor = make_executor(cfg, g.mock);
  ToolCall call;
  call.tool_name = a.name;
  try {
    call.params = Json::parse(a.params);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("--params is not JSON: ") + e.what());
  }
  ToolContext ctx;
  ctx.base_dir = a.base_dir;
  if (!a.document.empty()) {
    if (!fs::exists(a.document)) throw Error(ErrorCode::Io, "no such document: " + a.document);
    ctx.document = std::make_shared<const PaperDocument>(load_document(a.document));
    if (a.base_dir.empty()) ctx.base_dir = dir_of(a.document).string();
  }
  if (ctx.base_dir.empty()) ctx.base_dir = ".";
  const auto result = executor->invoke(call, ctx);
  std::cout << to_json(result).dump(2) << "\n";
  return result.status == ToolStatus::ok ? 0 : 6;
}

}  // namespace sciana::cli
