#include "sciana/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace sciana {

std::string_view to_string(Agent a) noexcept {
  switch (a) {
    case Agent::planner: return "planner";
    case Agent::expert: return "expert";
    case Agent::solver: return "solver";
    case Agent::critic: return "critic";
  }
  return "solver";
}

Agent parse_agent(std::string_view s) {
  if (s == "planner") return Agent::planner;
  if (s == "expert") return Agent::expert;
  if (s == "solver") return Agent::solver;
  if (s == "critic") return Agent::critic;
  throw Error(ErrorCode::InvalidArgument, "unknown agent " + std::string(s));
}

std::vector<std::string> required_tags(Agent a) {
  switch (a) {
    case Agent::planner: return {"think", "plan"};
    case Agent::expert: return {"think"};
    case Agent::solver: return {"think", "answer"};
    case Agent::critic: {
      std::vector<std::string> t = {"think"};
      t.insert(t.end(), kGradeTags.begin(), kGradeTags.end());
      t.push_back("feedback");
      return t;
    }
  }
  return {};
}

std::optional<ToolCall> parse_expert_call(std::string_view z) {
  const auto parsed = parse_tags(z, {"tool", "params"});
  if (!parsed.ok()) return std::nullopt;
  ToolCall call;
  call.tool_name = trim(*parsed.find("tool"));
  try {
    call.params = Json::parse(trim(*parsed.find("params")));
  } catch (const Json::exception&) {
    return std::nullopt;
  }
  if (!call.params.is_object() || call.tool_name.empty()) return std::nullopt;
  return call;
}

int format_reward(std::string_view z, Agent a) {
  const auto parsed = parse_tags(z, required_tags(a));
  if (!parsed.ok()) return 0;
  if (a == Agent::critic) {
    for (const char* g : kGradeTags) {
      if (!parse_grade(*parsed.find(g))) return 0;
    }
  }
  if (a == Agent::expert) {
    if (parsed.find("summary")) return 1;
    return parse_expert_call(z) ? 1 : 0;
  }
  return 1;
}

double multichoice_f1(const std::set<std::string>& pred, const std::set<std::string>& gold) {
  if (gold.empty()) throw Error(ErrorCode::EmptyGold, "gold option set is empty");
  if (pred == gold) return 1.0;
  if (pred.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& o : pred) inter += gold.count(o);
  if (inter == 0) return 0.0;
  const double p = static_cast<double>(inter) / static_cast<double>(pred.size());
  const double r = static_cast<double>(inter) / static_cast<double>(gold.size());
  return 2.0 * p * r / (p + r);
}

std::set<std::string> extract_options(std::string_view text) {
  std::set<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!std::isalnum(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && std::isalnum(static_cast<unsigned char>(text[j]))) ++j;
    const std::string_view tok = text.substr(i, j - i);
    const bool upper = std::all_of(tok.begin(), tok.end(), [](char c) { return c >= 'A' && c <= 'Z'; });
    if (upper && tok.size() <= 2) out.emplace(tok);
    i = j;
  }
  return out;
}

double expert_accuracy(const ToolCall& call, const ToolCall& gold, const ToolRegistry& registry) {
  if (call.tool_name != gold.tool_name) return 0.0;
  const ToolSpec* spec = registry.find(gold.tool_name);
  if (!gold.params.is_object() || gold.params.empty()) return 1.0;
  std::size_t matched = 0;
  for (const auto& [key, want] : gold.params.items()) {
    if (!call.params.is_object() || !call.params.contains(key)) continue;
    const Json& got = call.params[key];
    const ParamSpec* ps = spec ? spec->param(key) : nullptr;
    bool same = false;
    if (ps && ps->free_text && want.is_string() && got.is_string()) {
      same = to_lower_ascii(normalize_whitespace(want.get<std::string>())) ==
             to_lower_ascii(normalize_whitespace(got.get<std::string>()));
    } else if (want.is_number() && got.is_number()) {
      same = want.get<double>() == got.get<double>();
    } else {
      same = want == got;
    }
    matched += same ? 1 : 0;
  }
  return static_cast<double>(matched) / static_cast<double>(gold.params.size());
}

int length_reward(std::string_view z, std::string_view ref) {
  const auto r = token_count(ref);
  if (r == 0) throw Error(ErrorCode::EmptyReference, "reference has no tokens");
  const auto n = token_count(z);
  // Doubled to keep the inclusive bounds exact in integers.
  return (2 * n >= r && 2 * n <= 3 * r) ? 1 : 0;
}

const AgentWeights& RewardWeights::of(Agent a) const {
  switch (a) {
    case Agent::planner: return planner;
    case Agent::expert: return expert;
    case Agent::solver: return solver;
    case Agent::critic: return critic;
  }
  return solver;
}

void RewardWeights::validate() const {
  for (Agent a : {Agent::planner, Agent::expert, Agent::solver, Agent::critic}) {
    const auto& w = of(a);
    if (w.names.size() != w.values.size()) {
      throw Error(ErrorCode::InvalidConfig, std::string(to_string(a)) + " weights do not match their components");
    }
    double sum = 0.0;
    for (double v : w.values) {
      if (!(v >= 0.0)) throw Error(ErrorCode::InvalidConfig, std::string(to_string(a)) + " weight is negative");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw Error(ErrorCode::InvalidConfig, std::string(to_string(a)) + " weights must sum to 1");
    }
  }
}

RewardWeights reward_weights_from_json(const Json& j) {
  RewardWeights w;
  auto load = [&](const char* agent, AgentWeights& slot) {
    if (!j.contains(agent)) return;
    const auto& o = j[agent];
    for (std::size_t k = 0; k < slot.names.size(); ++k) {
      if (o.contains(slot.names[k])) slot.values[k] = o[slot.names[k]].get<double>();
    }
  };
  load("planner", w.planner);
  load("expert", w.expert);
  load("solver", w.solver);
  load("critic", w.critic);
  w.validate();
  return w;
}

Json to_json(const RewardWeights& w) {
  Json j = Json::object();
  for (Agent a : {Agent::planner, Agent::expert, Agent::solver, Agent::critic}) {
    Json o = Json::object();
    const auto& aw = w.of(a);
    for (std::size_t k = 0; k < aw.names.size(); ++k) o[aw.names[k]] = aw.values[k];
    j[std::string(to_string(a))] = o;
  }
  return j;
}

Json to_json(const RewardBreakdown& b) {
  Json comps = Json::object();
  Json weights = Json::object();
  for (std::size_t k = 0; k < b.names.size(); ++k) {
    comps[b.names[k]] = b.components[k];
    weights[b.names[k]] = b.weights[k];
  }
  return Json{{"agent", to_string(b.agent)}, {"components", comps}, {"weights", weights}, {"total", b.total}};
}

RewardBreakdown combine(Agent agent, const AgentWeights& w, std::vector<double> components) {
  if (components.size() != w.values.size()) {
    throw Error(ErrorCode::InvalidArgument, "component count does not match the weights");
  }
  RewardBreakdown b;
  b.agent = agent;
  b.names = w.names;
  b.weights = w.values;
  b.components = std::move(components);
  for (std::size_t k = 0; k < b.components.size(); ++k) b.total += b.weights[k] * b.components[k];
  b.total = std::clamp(b.total, 0.0, 1.0);
  return b;
}

std::string answer_text(std::string_view z) {
  const auto parsed = parse_tags(z, {"answer"});
  return parsed.ok() ? trim(*parsed.find("answer")) : std::string(z);
}

RewardBreakdown solver_reward(std::string_view z, std::string_view ref, const RewardWeights& w, Embedder& embedder) {
  const std::string cand = answer_text(z);
  const std::string gold = answer_text(ref);
  const double fmt = format_reward(z, Agent::solver);
  const double len = length_reward(cand, gold);
  const double sem = embedding_f1(gold, cand, embedder);
  return combine(Agent::solver, w.solver, {fmt, len, sem});
}

namespace {

RewardBreakdown selection_reward(Agent agent, const char* primary, std::string_view z,
                                 const std::set<std::string>& gold, const AgentWeights& w) {
  if (gold.empty()) throw Error(ErrorCode::EmptyGold, "gold option set is empty");
  const int fmt = format_reward(z, agent);
  double acc = 0.0;
  if (fmt == 1) {
    const auto parsed = parse_tags(z);
    acc = multichoice_f1(extract_options(*parsed.find(primary)), gold);
  }
  return combine(agent, w, {static_cast<double>(fmt), acc});
}

}  // namespace

RewardBreakdown planner_reward(std::string_view z, const std::set<std::string>& gold, const RewardWeights& w) {
  return selection_reward(Agent::planner, "plan", z, gold, w.planner);
}

RewardBreakdown critic_reward(std::string_view z, const std::set<std::string>& gold, const RewardWeights& w) {
  return selection_reward(Agent::critic, "feedback", z, gold, w.critic);
}

RewardBreakdown expert_reward(std::string_view z, const ToolCall& gold, const ToolRegistry& registry,
                              const RewardWeights& w) {
  const auto call = parse_expert_call(z);
  const bool valid = call && !registry.validate(*call);
  const double fmt = (format_reward(z, Agent::expert) == 1 && call && valid) ? 1.0 : 0.0;
  const double acc = call ? expert_accuracy(*call, gold, registry) : 0.0;
  return combine(Agent::expert, w.expert, {fmt, acc});
}

std::vector<double> group_advantages(const std::vector<double>& rewards, double eps) {
  if (rewards.size() < 2) throw Error(ErrorCode::GroupTooSmall, "a group needs at least two samples");
  std::vector<double> out(rewards.size(), 0.0);
  if (std::adjacent_find(rewards.begin(), rewards.end(), std::not_equal_to<>()) == rewards.end()) return out;
  const double k = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / k;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / k);
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / (sd + eps);
  return out;
}

PreferenceOutcome preference_filter(const std::vector<PreferenceCandidate>& candidates, const CandidateRunner& run,
                                    const Aggregates& baseline) {
  PreferenceOutcome out;
  for (const auto& c : candidates) {
    PreferenceVerdict v;
    v.id = c.id;
    try {
      const Aggregates got = run(c);
      DeltaReport d;
      d.s_lex.abs = got.s_lex - baseline.s_lex;
      d.s_sem.abs = got.s_sem - baseline.s_sem;
      d.s_avg.abs = got.s_avg - baseline.s_avg;
      d.s_lex.rel = baseline.s_lex != 0.0 ? d.s_lex.abs / baseline.s_lex * 100.0 : 0.0;
      d.s_sem.rel = baseline.s_sem != 0.0 ? d.s_sem.abs / baseline.s_sem * 100.0 : 0.0;
      d.s_avg.rel = baseline.s_avg != 0.0 ? d.s_avg.abs / baseline.s_avg * 100.0 : 0.0;
      v.deltas = d;
      v.kept = d.s_lex.abs > 0.0 && d.s_sem.abs > 0.0 && d.s_avg.abs > 0.0;
      if (v.kept) out.kept.push_back(c);
    } catch (const std::exception& e) {
      v.failed = true;
      v.error = e.what();
      ++out.failed;
    }
    out.verdicts.push_back(std::move(v));
  }
  return out;
}

Json to_json(const PreferenceRecord& r) {
  Json opts = Json::array();
  for (const auto& o : r.options) opts.push_back(Json{{"id", o.id}, {"text", o.text}});
  return Json{{"prompt", r.prompt}, {"options", opts}, {"gold_option_ids", r.gold_option_ids}, {"provenance", r.provenance}};
}

namespace {

std::string option_id(std::size_t k) {
  std::string id;
  if (k >= 26) id.push_back(static_cast<char>('A' + k / 26 - 1));
  id.push_back(static_cast<char>('A' + k % 26));
  return id;
}

}  // namespace

PreferenceRecord build_preference_record(std::string prompt, const std::vector<PreferenceCandidate>& baseline,
                                         const std::vector<PreferenceCandidate>& kept, std::uint64_t seed,
                                         Json provenance) {
  struct Item {
    std::uint64_t key;
    const PreferenceCandidate* cand;
    bool gold;
  };
  std::vector<Item> items;
  for (const auto& c : baseline) items.push_back({splitmix64(seed ^ fnv1a64("b:" + c.id)), &c, false});
  for (const auto& c : kept) items.push_back({splitmix64(seed ^ fnv1a64("r:" + c.id)), &c, true});
  if (items.size() > 26 * 27) throw Error(ErrorCode::InvalidArgument, "too many options for one record");
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.key < b.key; });
  PreferenceRecord r;
  r.prompt = std::move(prompt);
  r.provenance = std::move(provenance);
  Json sources = Json::object();
  for (std::size_t k = 0; k < items.size(); ++k) {
    const std::string id = option_id(k);
    r.options.push_back({id, items[k].cand->text});
    if (items[k].gold) r.gold_option_ids.push_back(id);
    sources[id] = Json{{"candidate", items[k].cand->id}, {"role", items[k].gold ? "reference" : "baseline"},
                       {"provenance", items[k].cand->provenance}};
  }
  r.provenance["options"] = sources;
  return r;
}

std::string selection_prompt(Agent agent, std::string_view task, const std::vector<PreferenceOption>& options) {
  const bool planner = agent == Agent::planner;
  std::string out = planner ? "You are the planning agent. Select every problem-solving plan below that would lead "
                              "to the best scientific analysis for the task.\n\n"
                            : "You are the reviewing agent. Select every critique below whose suggested revisions would "
                              "most improve the analysis.\n\n";
  out += "**Task**\n\n" + std::string(task) + "\n\n**Options**\n\n";
  for (const auto& o : options) out += "(" + o.id + ")\n" + o.text + "\n\n";
  if (planner) {
    out += "Respond with your reasoning and the letters of the selected options, comma separated:\n\n"
           "<think>your reasoning</think>\n<plan>selected option letters</plan>\n";
  } else {
    out += "Grade the analysis quality each selected critique targets, then list the selected option letters, comma "
           "separated, in the feedback tag:\n\n<think>your reasoning</think>\n<accuracy>0-2</accuracy>\n"
           "<completeness>0-2</completeness>\n<format>0-2</format>\n<writing>0-2</writing>\n"
           "<faithfulness>0-2</faithfulness>\n<feedback>selected option letters</feedback>\n";
  }
  return out;
}

}  // namespace sciana
