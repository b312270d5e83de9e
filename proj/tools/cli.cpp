#include "cli.hpp"

#include <CLI11.hpp>
#include <iostream>

#include "commands.hpp"
#include "sciana/error.hpp"
#include "sciana/text.hpp"

namespace sciana::cli {

namespace {

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidArgument: return 2;
    case ErrorCode::IdMismatch: return 3;
    case ErrorCode::BackendUnavailable: return 4;
    case ErrorCode::Io:
    case ErrorCode::NotFound: return 5;
    default: return 1;
  }
}

void shared_flags(CLI::App* cmd, Globals& g) {
  cmd->add_option("--config", g.config, "Configuration file (JSON)");
  cmd->add_option("--seed", g.seed, "Seed; overrides the configuration");
  cmd->add_option("--out", g.out, "Parent directory for run directories");
  cmd->add_flag("--mock", g.mock, "Offline deterministic backends; no network");
  cmd->add_option("--replay", g.replay, "Replay tool results from this fixture directory");
  cmd->add_option("--workers", g.workers, "Instances processed concurrently")->check(CLI::PositiveNumber);
  cmd->add_option("--resume", g.resume, "Continue the run in this directory");
  cmd->add_option("--run-dir", g.run_dir, "Write artifacts to exactly this directory");
}

}  // namespace

int main(const std::vector<std::string>& args) {
  CLI::App app{"Scientific table and figure analysis: corpus, agents, evaluation and rewards", "sciana"};
  app.require_subcommand(1);
  Globals g;
  std::function<int()> action;

  auto* corpus = app.add_subcommand("corpus", "Build, label and split analysis instances");
  corpus->require_subcommand(1);
  CorpusBuildArgs build_args;
  auto* build = corpus->add_subcommand("build", "Extract instances from source papers");
  build->add_option("--input", build_args.inputs, "Source files or directories (.tex, .xml)");
  shared_flags(build, g);
  build->callback([&] { action = [&] { return corpus_build(g, build_args); }; });

  InstancesArgs classify_args;
  auto* classify = corpus->add_subcommand("classify", "Add depth and objective labels with the judge");
  classify->add_option("--instances", classify_args.instances, "Instance JSONL")->required();
  shared_flags(classify, g);
  classify->callback([&] { action = [&] { return corpus_classify(g, classify_args); }; });

  SplitArgs split_args;
  auto* split = corpus->add_subcommand("split", "Partition instances into train and eval");
  split->add_option("--instances", split_args.instances, "Instance JSONL")->required();
  split->add_option("--eval-year", split_args.eval_year, "Publication year drawn for eval");
  split->add_option("--max-eval", split_args.max_eval, "Eval size cap; 0 keeps every eligible instance");
  shared_flags(split, g);
  split->callback([&] { action = [&] { return corpus_split(g, split_args); }; });

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Run an agent variant over instances");
  run_cmd->add_option("--instances", run_args.instances, "Instance JSONL")->required();
  run_cmd->add_option("--variant", run_args.variant, "baseline | omnion | symnion | anagent | anagent_critic");
  shared_flags(run_cmd, g);
  run_cmd->callback([&] { action = [&] { return run(g, run_args); }; });

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Score generated analyses against gold");
  eval_cmd->add_option("--generated", eval_args.generated, "Generated JSONL (analysis or gold field)")->required();
  eval_cmd->add_option("--gold", eval_args.gold, "Instance JSONL with gold analyses")->required();
  eval_cmd->add_option("--baseline", eval_args.baseline, "Baseline report.json; attaches deltas");
  eval_cmd->add_flag("--judge", eval_args.judge, "Add the five-dimensional judge pass");
  shared_flags(eval_cmd, g);
  eval_cmd->callback([&] { action = [&] { return eval(g, eval_args); }; });

  EvalArgs judge_args;
  auto* judge_cmd = app.add_subcommand("judge", "Five-dimensional judge scores only");
  judge_cmd->add_option("--generated", judge_args.generated, "Generated JSONL")->required();
  judge_cmd->add_option("--gold", judge_args.gold, "Instance JSONL with gold analyses")->required();
  shared_flags(judge_cmd, g);
  judge_cmd->callback([&] { action = [&] { return judge(g, judge_args); }; });

  auto* reward = app.add_subcommand("reward", "Reward audits and preference data");
  reward->require_subcommand(1);
  AuditArgs audit_args;
  auto* audit = reward->add_subcommand("audit", "Per-agent rewards for run transcripts");
  audit->add_option("--transcripts", audit_args.transcripts, "Transcript directory or file")->required();
  audit->add_option("--gold", audit_args.gold, "Instance JSONL with gold analyses")->required();
  shared_flags(audit, g);
  audit->callback([&] { action = [&] { return reward_audit(g, audit_args); }; });

  PrefsArgs prefs_args;
  auto* prefs = reward->add_subcommand("prefs", "Filter candidate plans or critiques into preference records");
  prefs->add_option("--instances", prefs_args.instances, "Instance JSONL")->required();
  prefs->add_option("--candidates", prefs_args.candidates, "Candidate JSONL")->required();
  prefs->add_option("--variant", prefs_args.variant, "Pipeline variant used for the runs");
  shared_flags(prefs, g);
  prefs->callback([&] { action = [&] { return reward_prefs(g, prefs_args); }; });

  auto* tools = app.add_subcommand("tools", "Inspect and call the tool registry");
  tools->require_subcommand(1);
  bool list_json = false;
  auto* list = tools->add_subcommand("list", "Print the tool catalogue");
  list->add_flag("--json", list_json, "Machine-readable output");
  shared_flags(list, g);
  list->callback([&] { action = [&] { return tools_list(g, list_json); }; });

  ToolsInvokeArgs invoke_args;
  auto* invoke = tools->add_subcommand("invoke", "Call one tool and print its result");
  invoke->add_option("--name", invoke_args.name, "Tool name")->required();
  invoke->add_option("--params", invoke_args.params, "Parameters as a JSON object");
  invoke->add_option("--document", invoke_args.document, "Paper source given to document tools");
  invoke->add_option("--base-dir", invoke_args.base_dir, "Directory for relative image and document paths");
  shared_flags(invoke, g);
  invoke->callback([&] { action = [&] { return tools_invoke(g, invoke_args); }; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    return action ? action() : 2;
  } catch (const Error& e) {
    std::cerr << Json{{"error", to_string(e.code())}, {"message", e.what()}}.dump() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << Json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
}

int main(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return main(args);
}

}  // namespace sciana::cli
