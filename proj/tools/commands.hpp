#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sciana::cli {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<std::string> out;
  bool mock = false;
  std::string replay;
  std::string resume;
  // Exact run directory instead of <out>/<timestamp>_<hash8>.
  std::string run_dir;
};

struct CorpusBuildArgs {
  std::vector<std::string> inputs;
};

struct InstancesArgs {
  std::string instances;
};

struct SplitArgs {
  std::string instances;
  std::optional<int> eval_year;
  std::optional<std::size_t> max_eval;
};

struct RunArgs {
  std::string instances;
  std::string variant;
};

struct EvalArgs {
  std::string generated;
  std::string gold;
  std::string baseline;
  bool judge = false;
};

struct AuditArgs {
  std::string transcripts;
  std::string gold;
};

struct PrefsArgs {
  std::string instances;
  std::string candidates;
  std::string variant;
};

struct ToolsInvokeArgs {
  std::string name;
  std::string params = "{}";
  std::string document;
  // Empty means the document's directory, or "." without a document.
  std::string base_dir;
};

int corpus_build(const Globals& g, const CorpusBuildArgs& a);
int corpus_classify(const Globals& g, const InstancesArgs& a);
int corpus_split(const Globals& g, const SplitArgs& a);
int run(const Globals& g, const RunArgs& a);
int eval(const Globals& g, const EvalArgs& a);
int judge(const Globals& g, const EvalArgs& a);
int reward_audit(const Globals& g, const AuditArgs& a);
int reward_prefs(const Globals& g, const PrefsArgs& a);
int tools_list(const Globals& g, bool as_json);
int tools_invoke(const Globals& g, const ToolsInvokeArgs& a);

}  // namespace sciana::cli
