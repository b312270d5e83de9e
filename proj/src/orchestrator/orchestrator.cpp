#include "sciana/orchestrator.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "sciana/protocol.hpp"

namespace sciana {

std::string_view to_string(Variant v) noexcept {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::omnion: return "omnion";
    case Variant::symnion: return "symnion";
    case Variant::anagent: return "anagent";
    case Variant::anagent_critic: return "anagent_critic";
    case Variant::custom: return "custom";
  }
  return "custom";
}

Variant parse_variant(std::string_view s) {
  for (Variant v : {Variant::baseline, Variant::omnion, Variant::symnion, Variant::anagent, Variant::anagent_critic,
                    Variant::custom}) {
    if (to_string(v) == s) return v;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown variant '" + std::string(s) + "'");
}

StageSwitches stages_for(Variant v) {
  switch (v) {
    case Variant::baseline: return {false, false, false, false};
    case Variant::omnion: return {false, false, false, true};
    case Variant::symnion: return {false, true, false, false};
    case Variant::anagent: return {true, true, false, false};
    case Variant::anagent_critic:
    case Variant::custom: return {true, true, true, false};
  }
  return {};
}

ExemplarPool ExemplarPool::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open exemplar file " + path);
  ExemplarPool pool;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      const auto j = Json::parse(line);
      pool.items[parse_agent(j.at("agent").get<std::string>())].push_back(j.at("text").get<std::string>());
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::InvalidConfig, path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return pool;
}

namespace {

const char* const kWidths[] = {"self-contained", "internal", "external", "mixed"};
const char* const kDepths[] = {"shallow", "in-depth"};

template <std::size_t N>
bool one_of(const std::string& v, const char* const (&options)[N]) {
  return std::any_of(std::begin(options), std::end(options), [&](const char* o) { return v == o; });
}

}  // namespace

void PipelineConfig::validate() const {
  if (M_p < 0 || M_e < 0 || M_s < 1 || M_c < 0) {
    throw Error(ErrorCode::InvalidConfig, "turn limits must be non-negative and M_s at least 1");
  }
  if (stages.planner && M_p == 0) throw Error(ErrorCode::InvalidConfig, "planner stage needs M_p >= 1");
  if ((stages.expert || stages.solver_tools) && M_e == 0) {
    throw Error(ErrorCode::InvalidConfig, "tool stage needs M_e >= 1");
  }
  if (stages.expert && stages.solver_tools) {
    throw Error(ErrorCode::InvalidConfig, "tools go to either the Expert or the Solver, not both");
  }
  if (requirements.width && !one_of(*requirements.width, kWidths)) {
    throw Error(ErrorCode::InvalidConfig, "unknown analysis width '" + *requirements.width + "'");
  }
  if (requirements.depth && !one_of(*requirements.depth, kDepths)) {
    throw Error(ErrorCode::InvalidConfig, "unknown analysis depth '" + *requirements.depth + "'");
  }
  if (requirements.length_target && *requirements.length_target == 0) {
    throw Error(ErrorCode::InvalidConfig, "length target must be positive");
  }
  if (plan_limit == 0 || summary_len == 0 || feedback_limit == 0) {
    throw Error(ErrorCode::InvalidConfig, "character budgets must be positive");
  }
  for (const auto& [agent, spec] : backends) sciana::validate(spec);
}

int PipelineConfig::call_budget() const {
  int b = M_s;
  if (stages.planner) b += M_p;
  if (stages.expert || stages.solver_tools) b += M_e;
  if (stages.critic) b += M_c;
  if (stages.expert && forced_summary_extra_call) b += 1;
  return b;
}

PipelineConfig pipeline_config_from_json(const Json& j) {
  PipelineConfig c;
  c.variant = parse_variant(j.value("variant", std::string(to_string(c.variant))));
  c.stages = stages_for(c.variant);
  if (j.contains("turns")) {
    const auto& t = j["turns"];
    c.M_p = t.value("planner", c.M_p);
    c.M_e = t.value("expert", c.M_e);
    c.M_s = t.value("solver", c.M_s);
    c.M_c = t.value("critic", c.M_c);
  }
  if (j.contains("stages")) {
    const auto& s = j["stages"];
    StageSwitches got = c.stages;
    got.planner = s.value("planner", got.planner);
    got.expert = s.value("expert", got.expert);
    got.critic = s.value("critic", got.critic);
    got.solver_tools = s.value("solver_tools", got.solver_tools);
    // Named variants accept only their own switches, as written back by to_json.
    const bool same = got.planner == c.stages.planner && got.expert == c.stages.expert &&
                      got.critic == c.stages.critic && got.solver_tools == c.stages.solver_tools;
    if (c.variant != Variant::custom && !same) {
      throw Error(ErrorCode::InvalidConfig, "stages may only be changed for variant custom");
    }
    c.stages = got;
  }
  if (j.contains("backends")) {
    for (const auto& [name, spec] : j["backends"].items()) c.backends[parse_agent(name)] = backend_from_json(spec);
  }
  c.k_shot = j.value("k_shot", c.k_shot);
  c.exemplar_path = j.value("exemplars", c.exemplar_path);
  if (j.contains("requirements")) {
    const auto& r = j["requirements"];
    if (r.contains("length_target")) c.requirements.length_target = r["length_target"].get<std::size_t>();
    if (r.contains("width")) c.requirements.width = r["width"].get<std::string>();
    if (r.contains("depth")) c.requirements.depth = r["depth"].get<std::string>();
  }
  c.plan_limit = j.value("plan_limit", c.plan_limit);
  c.summary_len = j.value("summary_len", c.summary_len);
  c.feedback_limit = j.value("feedback_limit", c.feedback_limit);
  c.summary_structure = j.value("summary_structure", c.summary_structure);
  if (j.contains("tools")) c.tools = j["tools"].get<std::vector<std::string>>();
  c.forced_summary_extra_call = j.value("forced_summary_extra_call", c.forced_summary_extra_call);
  c.attach_images = j.value("attach_images", c.attach_images);
  c.chat.temperature = j.value("temperature", c.chat.temperature);
  c.chat.max_tokens = j.value("max_tokens", c.chat.max_tokens);
  c.validate();
  return c;
}

Json to_json(const PipelineConfig& c) {
  Json backends = Json::object();
  for (const auto& [agent, spec] : c.backends) backends[std::string(to_string(agent))] = to_json(spec);
  Json req = Json::object();
  if (c.requirements.length_target) req["length_target"] = *c.requirements.length_target;
  if (c.requirements.width) req["width"] = *c.requirements.width;
  if (c.requirements.depth) req["depth"] = *c.requirements.depth;
  return Json{{"variant", to_string(c.variant)},
              {"turns", {{"planner", c.M_p}, {"expert", c.M_e}, {"solver", c.M_s}, {"critic", c.M_c}}},
              {"stages",
               {{"planner", c.stages.planner},
                {"expert", c.stages.expert},
                {"critic", c.stages.critic},
                {"solver_tools", c.stages.solver_tools}}},
              {"backends", backends},
              {"k_shot", c.k_shot},
              {"exemplars", c.exemplar_path},
              {"requirements", req},
              {"plan_limit", c.plan_limit},
              {"summary_len", c.summary_len},
              {"feedback_limit", c.feedback_limit},
              {"summary_structure", c.summary_structure},
              {"tools", c.tools},
              {"forced_summary_extra_call", c.forced_summary_extra_call},
              {"attach_images", c.attach_images},
              {"temperature", c.chat.temperature},
              {"max_tokens", c.chat.max_tokens}};
}

std::string Plan::render() const {
  if (subtasks.empty()) return "No plan is available; decide the steps yourself.";
  std::string out;
  for (const auto& s : subtasks) out += "* " + s + "\n";
  return out;
}

std::vector<KnowledgeEntry> KnowledgeBase::at(int turn) const {
  std::vector<KnowledgeEntry> out;
  for (const auto& e : entries) {
    if (e.turn <= turn) out.push_back(e);
  }
  return out;
}

std::string KnowledgeBase::render() const {
  if (summary) return *summary;
  std::string out;
  for (const auto& e : entries) {
    if (e.error) continue;
    out += "[" + e.source + ", turn " + std::to_string(e.turn) + "]\n" + e.content + "\n\n";
  }
  return trim(out);
}

bool CritiqueReport::perfect() const noexcept {
  return std::all_of(grades.begin(), grades.end(), [](int g) { return g == 2; });
}

ChatClient& AgentClients::of(Agent a) const {
  const auto it = by_agent.find(a);
  if (it != by_agent.end() && it->second) return *it->second;
  if (!fallback) throw Error(ErrorCode::BackendUnavailable, "no chat client for " + std::string(to_string(a)));
  return *fallback;
}

std::string requirement_sentences(const Requirements& req) {
  std::string out;
  if (req.length_target) {
    out += " The analysis should be around " + std::to_string(*req.length_target) + " words long.";
  }
  if (req.width) {
    const std::string& w = *req.width;
    std::string scope = "both the rest of this paper and other papers";
    if (w == "self-contained") scope = "only the given data";
    if (w == "internal") scope = "the given data and other parts of this paper";
    if (w == "external") scope = "the given data and other papers";
    out += " The analysis width should be " + w + ", drawing on " + scope + ".";
  }
  if (req.depth) {
    out += *req.depth == "shallow"
               ? std::string(" The analysis depth should be shallow, describing what the data shows.")
               : std::string(" The analysis depth should be in-depth, interpreting causes, implications and "
                             "comparisons.");
  }
  return out;
}

std::string render_task_problem(const AnalysisInstance& inst, const Requirements& req) {
  std::string out = inst.query + requirement_sentences(req) + "\n";
  for (const auto& in : inst.inputs) {
    std::string noun(to_string(in.kind));
    if (!noun.empty()) noun[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(noun[0])));
    out += "\n**Input " + noun + "**\n\n";
    out += "Id: " + in.element_id + "\n";
    if (in.label) out += "Label: " + *in.label + "\n";
    if (in.caption) out += "Caption: " + *in.caption + "\n";
    if (!in.body.empty()) out += "\n" + in.body + "\n";
  }
  return out;
}

std::string render_few_shot(const ExemplarPool& pool, Agent agent, std::size_t k) {
  if (k == 0) return "";
  const auto it = pool.items.find(agent);
  const std::size_t have = it == pool.items.end() ? 0 : it->second.size();
  if (have < k) {
    throw Error(ErrorCode::InvalidConfig, "k_shot " + std::to_string(k) + " exceeds the " + std::to_string(have) +
                                              " " + std::string(to_string(agent)) + " exemplars available");
  }
  std::string out;
  for (std::size_t i = 0; i < k; ++i) {
    out += "\n**Example " + std::to_string(i + 1) + "**\n\n" + trim(it->second[i]) + "\n";
  }
  return out;
}

std::string feedback_block(const std::string& feedback) {
  return "\n**Critic Feedback On Your Previous Answer**\n\n" + feedback +
         "\n\nRevise your analysis so that it addresses this feedback.\n";
}

namespace {

std::string context_of(const AnalysisInstance& inst) {
  return inst.source.context.empty() ? std::string("None.") : inst.source.context;
}

std::string context_with_knowledge(const AnalysisInstance& inst, const KnowledgeBase& kb) {
  std::string out = context_of(inst);
  const std::string k = kb.render();
  if (!k.empty()) out += "\n\n**Knowledge Summary**\n\n" + k;
  return out;
}

std::string data_noun(const AnalysisInstance& inst) {
  return inst.labels.data_type.empty() ? std::string("table") : inst.labels.data_type;
}

std::string tool_catalogue(const PipelineConfig& cfg, const PipelineEnv& env) {
  if (env.executor) return env.executor->registry().describe(cfg.tools);
  return ToolRegistry::standard()->describe(cfg.tools);
}

}  // namespace

std::string render_planner_prompt(const AnalysisInstance& inst, const PipelineConfig& cfg, const PipelineEnv& env) {
  return render_template(env.prompts.planner,
                         {{"few_shot_examples", render_few_shot(env.exemplars, Agent::planner, cfg.k_shot)},
                          {"task_problem", render_task_problem(inst, cfg.requirements)},
                          {"task_context", context_of(inst)},
                          {"plan_limit", std::to_string(cfg.plan_limit)}});
}

std::string render_expert_prompt(const AnalysisInstance& inst, const Plan& plan, const PipelineConfig& cfg,
                                 const PipelineEnv& env, int turn) {
  return render_template(env.prompts.expert,
                         {{"few_shot_examples", render_few_shot(env.exemplars, Agent::expert, cfg.k_shot)},
                          {"task_problem", render_task_problem(inst, cfg.requirements)},
                          {"task_context", context_of(inst)},
                          {"planner_plan", plan.render()},
                          {"tool_info", tool_catalogue(cfg, env)},
                          {"max_turns", std::to_string(cfg.M_e)},
                          {"turn", std::to_string(turn)},
                          {"summary_len", std::to_string(cfg.summary_len)},
                          {"summary_structure", cfg.summary_structure}});
}

std::string render_solver_prompt(const AnalysisInstance& inst, const Plan& plan, const KnowledgeBase& kb,
                                 const std::optional<std::string>& feedback, const PipelineConfig& cfg,
                                 const PipelineEnv& env, int tool_turns_left) {
  std::string tools;
  if (cfg.stages.solver_tools) {
    tools = "\n**Available Tools**\n\n" + tool_catalogue(cfg, env) + "\n\nBefore answering you may call ONE tool per " +
            "turn, with at most " + std::to_string(tool_turns_left) +
            " tool turns in total. To call a tool reply with <think>...</think>, <tool>...</tool> and "
            "<params>...</params> instead of an answer.\n";
  }
  return render_template(env.prompts.solver,
                         {{"few_shot_examples", render_few_shot(env.exemplars, Agent::solver, cfg.k_shot)},
                          {"task_problem", render_task_problem(inst, cfg.requirements)},
                          {"task_context", context_with_knowledge(inst, kb)},
                          {"planner_plan", plan.render()},
                          {"tool_block", tools},
                          {"feedback_block", feedback ? feedback_block(*feedback) : std::string()}});
}

std::string render_critic_prompt(const AnalysisInstance& inst, const Plan& plan, const KnowledgeBase& kb,
                                 const std::string& solution, const PipelineConfig& cfg, const PipelineEnv& env) {
  return render_template(env.prompts.critic,
                         {{"few_shot_examples", render_few_shot(env.exemplars, Agent::critic, cfg.k_shot)},
                          {"task_problem", render_task_problem(inst, cfg.requirements)},
                          {"task_context", context_with_knowledge(inst, kb)},
                          {"planner_plan", plan.render()},
                          {"solver_solution", solution},
                          {"data_type", data_noun(inst)},
                          {"feedback_limit", std::to_string(cfg.feedback_limit)}});
}

namespace {

// One counted call: the opening request plus any repair or forced follow-up.
class Call {
 public:
  Call(Agent agent, const PipelineConfig& cfg, const PipelineEnv& env, AgentTranscript& t, std::string prompt,
       std::vector<ImagePayload> images)
      : client_(env.clients.of(agent)), params_(cfg.chat), t_(t) {
    t_.model_call_count += 1;
    rec_.agent = agent;
    rec_.requests = 0;
    rec_.prompt_sha256 = sha256_hex(prompt);
    turns_.push_back({Role::user, std::move(prompt), std::move(images)});
  }
  Call(const Call&) = delete;
  Call& operator=(const Call&) = delete;
  ~Call() { t_.calls.push_back(std::move(rec_)); }

  // Empty optional when the backend returned a non-fatal error.
  std::optional<std::string> send() {
    ++rec_.requests;
    ++t_.request_count;
    try {
      std::string reply = client_.chat(turns_, params_).text;
      rec_.replies.push_back(reply);
      turns_.push_back({Role::assistant, reply.empty() ? std::string("(empty)") : reply, {}});
      return reply;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::BackendUnavailable) throw;
      rec_.replies.push_back("");
      turns_.push_back({Role::assistant, "(no response)", {}});
      t_.failures.push_back(std::string(to_string(rec_.agent)) + "_backend_error: " + e.what());
      return std::nullopt;
    }
  }

  void say(std::string text) { turns_.push_back({Role::user, std::move(text), {}}); }

  // Opens a new counted call that continues this conversation.
  void recount() {
    t_.calls.push_back(rec_);
    rec_.requests = 0;
    rec_.replies.clear();
    t_.model_call_count += 1;
  }

 private:
  ChatClient& client_;
  ChatParams params_;
  AgentTranscript& t_;
  CallRecord rec_;
  std::vector<ChatTurn> turns_;
};

std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

std::string utf8_prefix(std::string_view s, std::size_t chars) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) {
      if (n == chars) return std::string(s.substr(0, i));
      ++n;
    }
  }
  return std::string(s);
}

std::vector<ImagePayload> input_images(const AnalysisInstance& inst, const PipelineConfig& cfg,
                                       const PipelineEnv& env, Agent agent, AgentTranscript& t) {
  std::vector<ImagePayload> out;
  if (!cfg.attach_images) return out;
  for (const auto& in : inst.inputs) {
    if (!in.image_ref) continue;
    const auto path = (std::filesystem::path(env.image_dir) / *in.image_ref).string();
    try {
      out.push_back(load_image(path, env.clients.of(agent).bounds()));
    } catch (const Error& e) {
      const std::string note = "image_unavailable: " + *in.image_ref;
      if (std::find(t.failures.begin(), t.failures.end(), note) == t.failures.end()) t.failures.push_back(note);
    }
  }
  return out;
}

std::string expert_reminder() {
  return format_reminder({"think", "tool", "params"}) +
         "\nOr, if the collected information is sufficient:\n<think>...</think>\n<summary>...</summary>";
}

std::string observation(const ToolCall& call, const ToolResult& r) {
  std::string out = "**Tool Result** (" + call.tool_name + ")\n\n";
  if (r.status == ToolStatus::error) out += "ERROR (" + r.error_kind.value_or("internal") + "): ";
  out += r.payload;
  if (r.truncated) out += "\n[truncated]";
  return out;
}

struct TurnOutcome {
  std::optional<ToolCall> call;
  std::optional<ToolResult> result;
  std::optional<SchemaViolation> violation;
  std::string message;
};

// Parses a tool call out of `reply` and runs it when valid.
TurnOutcome run_tool_turn(const std::string& reply, int turn, const PipelineEnv& env) {
  TurnOutcome o;
  const auto parsed = parse_tags(reply, {"tool", "params"});
  ToolCall call;
  call.tool_name = trim(*parsed.find("tool"));
  call.turn_index = turn;
  try {
    call.params = Json::parse(trim(*parsed.find("params")));
  } catch (const Json::exception&) {
    call.params = Json();
  }
  o.call = call;
  const ToolRegistry& reg = env.executor ? env.executor->registry() : *ToolRegistry::standard();
  if (auto v = reg.validate(call)) {
    o.violation = v;
    o.message = "**Tool Call Rejected**\n\n" + v->kind + (v->param.empty() ? "" : " (" + v->param + ")") + ": " +
                v->detail;
    return o;
  }
  ToolResult r;
  if (env.executor) {
    r = env.executor->invoke(call, env.tool_context);
  } else {
    r.status = ToolStatus::error;
    r.error_kind = "disabled";
    r.payload = "no tool executor is configured";
  }
  o.message = observation(call, r);
  o.result = std::move(r);
  return o;
}

bool has_tool_call(const TagParse& p) { return p.find("tool") && p.find("params"); }

}  // namespace

Plan plan(const AnalysisInstance& inst, const PipelineConfig& cfg, const PipelineEnv& env, AgentTranscript& t) {
  Plan out;
  const std::vector<std::string> required{"think", "plan"};
  const std::string prompt = render_planner_prompt(inst, cfg, env);
  std::string last_error = "no reply";
  for (int attempt = 0; attempt < cfg.M_p; ++attempt) {
    Call call(Agent::planner, cfg, env, t, prompt, input_images(inst, cfg, env, Agent::planner, t));
    for (int round = 0; round < 2; ++round) {
      if (round == 1) call.say(format_reminder(required));
      const auto reply = call.send();
      if (!reply) continue;
      const auto parsed = parse_tags(*reply, required);
      if (!parsed.ok()) {
        last_error = std::string(parsed.error->kind == TagErrorKind::missing ? "missing" : "unbalanced") + " <" +
                     parsed.error->tag + ">";
        continue;
      }
      out.raw_think = trim(*parsed.find("think"));
      out.subtasks = plan_bullets(*parsed.find("plan"));
      if (out.subtasks.empty()) {
        const std::string whole = trim(*parsed.find("plan"));
        if (!whole.empty()) out.subtasks.push_back(normalize_whitespace(whole));
      }
      if (!out.subtasks.empty()) return out;
      last_error = "empty plan";
    }
  }
  out.failed = true;
  out.error = last_error;
  out.raw_think.clear();
  out.subtasks = {"Write the requested analysis directly from the given data and contexts."};
  t.failures.push_back("plan_failure: " + last_error);
  return out;
}

KnowledgeBase expert_loop(const AnalysisInstance& inst, const Plan& plan, const PipelineConfig& cfg,
                          const PipelineEnv& env, AgentTranscript& t) {
  KnowledgeBase kb;
  if (cfg.M_e <= 0) return kb;
  Call call(Agent::expert, cfg, env, t, render_expert_prompt(inst, plan, cfg, env, 1),
            input_images(inst, cfg, env, Agent::expert, t));
  for (int turn = 1; turn <= cfg.M_e; ++turn) {
    if (turn > 1) call.recount();
    ExpertTurn rec;
    rec.turn = turn;
    std::optional<TagParse> parsed;
    for (int round = 0; round < 2; ++round) {
      if (round == 1) {
        call.say(expert_reminder());
        rec.repaired = true;
      }
      const auto reply = call.send();
      if (!reply) continue;
      rec.text = *reply;
      auto p = parse_tags(*reply);
      if (p.find("summary") || has_tool_call(p)) {
        parsed = std::move(p);
        break;
      }
    }

    std::string message;
    if (parsed && parsed->find("summary")) {
      kb.summary = trim(*parsed->find("summary"));
      kb.entries.push_back({turn, "summary", *kb.summary, false});
      rec.knowledge_size = kb.entries.size();
      t.expert_turns.push_back(std::move(rec));
      return kb;
    }
    if (parsed) {
      auto o = run_tool_turn(rec.text, turn, env);
      rec.call = o.call;
      rec.violation = o.violation;
      if (o.violation) {
        kb.entries.push_back({turn, o.call->tool_name, o.message, true});
      } else {
        kb.entries.push_back({turn, o.call->tool_name, o.result->payload, o.result->status == ToolStatus::error});
      }
      rec.result = std::move(o.result);
      message = std::move(o.message);
    } else {
      kb.entries.push_back({turn, "format", "reply had neither a valid tool call nor a summary", true});
      message = "Your reply had neither a valid tool call nor a summary.";
    }

    if (turn < cfg.M_e) {
      rec.knowledge_size = kb.entries.size();
      t.expert_turns.push_back(std::move(rec));
      call.say(message + "\n\nThis is TURN " + std::to_string(turn + 1) + ".");
      continue;
    }

    // Turn budget spent: ask for the summary once.
    rec.forced_summary = true;
    if (cfg.forced_summary_extra_call) call.recount();
    call.say(message + "\n\nYou have used all " + std::to_string(cfg.M_e) +
             " turns. Do not call any more tools. Respond now with:\n<think>...</think>\n<summary>...</summary>");
    const auto reply = call.send();
    if (reply) {
      const auto p = parse_tags(*reply, {"summary"});
      if (p.ok()) {
        kb.summary = trim(*p.find("summary"));
        kb.entries.push_back({turn, "summary", *kb.summary, false});
      }
    }
    if (!kb.summary) t.failures.push_back("expert_summary_missing");
    rec.knowledge_size = kb.entries.size();
    t.expert_turns.push_back(std::move(rec));
  }
  return kb;
}

SolveAttempt solve(const AnalysisInstance& inst, const Plan& plan, const KnowledgeBase& kb,
                   const std::optional<std::string>& feedback, const PipelineConfig& cfg, const PipelineEnv& env,
                   AgentTranscript& t, int& tool_budget) {
  const std::vector<std::string> required{"think", "answer"};
  SolveAttempt out;
  Call call(Agent::solver, cfg, env, t, render_solver_prompt(inst, plan, kb, feedback, cfg, env, tool_budget),
            input_images(inst, cfg, env, Agent::solver, t));
  std::string last_raw;
  bool repaired = false;
  while (true) {
    const auto reply = call.send();
    if (reply) {
      last_raw = *reply;
      const auto parsed = parse_tags(*reply, required);
      if (parsed.ok()) {
        out.text = trim(*parsed.find("answer"));
        out.repaired = repaired;
        return out;
      }
      const auto loose = parse_tags(*reply);
      if (cfg.stages.solver_tools && tool_budget > 0 && has_tool_call(loose)) {
        // A tool turn spends Expert budget and opens a fresh counted call.
        auto o = run_tool_turn(*reply, out.tool_turns + 1, env);
        --tool_budget;
        ++out.tool_turns;
        call.say(o.message + "\n\nTool turns left: " + std::to_string(tool_budget) + ".");
        call.recount();
        continue;
      }
    }
    if (repaired) break;
    repaired = true;
    call.say(format_reminder(required));
  }
  out.text = trim(last_raw);
  out.parsed = false;
  out.repaired = true;
  t.failures.push_back("solve_failure: no <answer> after repair");
  return out;
}

std::optional<CritiqueReport> critique(const std::string& solution, const AnalysisInstance& inst, const Plan& plan,
                                       const KnowledgeBase& kb, const PipelineConfig& cfg, const PipelineEnv& env,
                                       AgentTranscript& t) {
  std::vector<std::string> required{"think"};
  required.insert(required.end(), kGradeTags.begin(), kGradeTags.end());
  required.push_back("feedback");
  Call call(Agent::critic, cfg, env, t, render_critic_prompt(inst, plan, kb, solution, cfg, env),
            input_images(inst, cfg, env, Agent::critic, t));
  for (int round = 0; round < 2; ++round) {
    if (round == 1) call.say(format_reminder(required));
    const auto reply = call.send();
    if (!reply) continue;
    const auto parsed = parse_tags(*reply, required);
    if (!parsed.ok()) continue;
    CritiqueReport r;
    bool grades_ok = true;
    for (std::size_t k = 0; k < kGradeTags.size(); ++k) {
      const auto g = parse_grade(*parsed.find(kGradeTags[k]));
      if (!g) {
        grades_ok = false;
        break;
      }
      r.grades[k] = g->value;
      r.clamped[k] = g->clamped;
    }
    if (!grades_ok) continue;
    r.raw_think = trim(*parsed.find("think"));
    const std::string fb = trim(*parsed.find("feedback"));
    r.feedback_truncated = utf8_length(fb) > cfg.feedback_limit;
    r.feedback = r.feedback_truncated ? utf8_prefix(fb, cfg.feedback_limit) : fb;
    return r;
  }
  t.failures.push_back("critique_failure: unparseable report");
  return std::nullopt;
}

AgentTranscript run_pipeline(const AnalysisInstance& inst, const PipelineConfig& cfg, const PipelineEnv& env) {
  cfg.validate();
  AgentTranscript t;
  t.instance_id = inst.instance_id;
  t.variant = cfg.variant;
  if (env.plan_override) {
    t.plan.subtasks = *env.plan_override;
    if (t.plan.subtasks.empty()) throw Error(ErrorCode::InvalidArgument, "substituted plan has no subtasks");
  } else if (cfg.stages.planner) {
    t.plan = plan(inst, cfg, env, t);
  }
  if (cfg.stages.expert) t.knowledge = expert_loop(inst, t.plan, cfg, env, t);

  int tool_budget = cfg.stages.solver_tools ? cfg.M_e : 0;
  std::optional<std::string> feedback;
  int critiques = 0;
  for (int i = 1; i <= cfg.M_s; ++i) {
    auto y = solve(inst, t.plan, t.knowledge, feedback, cfg, env, t, tool_budget);
    t.solutions.push_back(y.text);
    t.solution_parsed.push_back(y.parsed);
    if (i == cfg.M_s || !cfg.stages.critic || critiques >= cfg.M_c) break;
    auto report = critique(y.text, inst, t.plan, t.knowledge, cfg, env, t);
    ++critiques;
    if (env.feedback_override && critiques == 1) {
      if (!report) report = CritiqueReport{};
      report->feedback = *env.feedback_override;
      report->feedback_truncated = false;
      report->substituted = true;
    }
    if (!report) break;
    t.critiques.push_back(*report);
    if (report->perfect() && !report->substituted) break;
    feedback = report->feedback;
  }
  t.final_answer = t.solutions.back();
  return t;
}

namespace {

Json to_json(const Plan& p) {
  return Json{{"subtasks", p.subtasks}, {"raw_think", p.raw_think}, {"failed", p.failed}, {"error", p.error}};
}

Json to_json(const KnowledgeEntry& e) {
  return Json{{"turn", e.turn}, {"source", e.source}, {"content", e.content}, {"error", e.error}};
}

Json to_json(const ExpertTurn& e) {
  Json j{{"turn", e.turn}, {"text", e.text}, {"repaired", e.repaired}, {"forced_summary", e.forced_summary},
         {"knowledge_size", e.knowledge_size}};
  j["call"] = e.call ? sciana::to_json(*e.call) : Json();
  j["result"] = e.result ? sciana::to_json(*e.result) : Json();
  j["violation"] = e.violation
                       ? Json{{"kind", e.violation->kind}, {"param", e.violation->param}, {"detail", e.violation->detail}}
                       : Json();
  return j;
}

Json to_json(const CritiqueReport& r) {
  Json grades = Json::object();
  Json clamped = Json::object();
  for (std::size_t k = 0; k < kGradeTags.size(); ++k) {
    grades[kGradeTags[k]] = r.grades[k];
    clamped[kGradeTags[k]] = r.clamped[k];
  }
  return Json{{"grades", grades},
              {"clamped", clamped},
              {"feedback", r.feedback},
              {"feedback_truncated", r.feedback_truncated},
              {"substituted", r.substituted},
              {"raw_think", r.raw_think}};
}

}  // namespace

Json to_json(const AgentTranscript& t) {
  Json turns = Json::array();
  for (const auto& e : t.expert_turns) turns.push_back(to_json(e));
  Json entries = Json::array();
  for (const auto& e : t.knowledge.entries) entries.push_back(to_json(e));
  Json critiques = Json::array();
  for (const auto& c : t.critiques) critiques.push_back(to_json(c));
  Json calls = Json::array();
  for (const auto& c : t.calls) {
    calls.push_back(Json{{"agent", to_string(c.agent)},
                         {"requests", c.requests},
                         {"prompt_sha256", c.prompt_sha256},
                         {"replies", c.replies}});
  }
  return Json{{"instance_id", t.instance_id},
              {"variant", to_string(t.variant)},
              {"plan", to_json(t.plan)},
              {"expert_turns", turns},
              {"knowledge",
               {{"entries", entries}, {"summary", t.knowledge.summary ? Json(*t.knowledge.summary) : Json()}}},
              {"solutions", t.solutions},
              {"solution_parsed", t.solution_parsed},
              {"critiques", critiques},
              {"failures", t.failures},
              {"final", t.final_answer},
              {"model_call_count", t.model_call_count},
              {"request_count", t.request_count},
              {"calls", calls}};
}

AgentTranscript transcript_from_json(const Json& j) {
  AgentTranscript t;
  try {
    t.instance_id = j.at("instance_id").get<std::string>();
    t.variant = parse_variant(j.at("variant").get<std::string>());
    const auto& p = j.at("plan");
    t.plan.subtasks = p.at("subtasks").get<std::vector<std::string>>();
    t.plan.raw_think = p.value("raw_think", "");
    t.plan.failed = p.value("failed", false);
    t.plan.error = p.value("error", "");
    for (const auto& e : j.at("expert_turns")) {
      ExpertTurn x;
      x.turn = e.at("turn").get<int>();
      x.text = e.value("text", "");
      x.repaired = e.value("repaired", false);
      x.forced_summary = e.value("forced_summary", false);
      x.knowledge_size = e.value("knowledge_size", std::size_t{0});
      if (!e.at("call").is_null()) x.call = tool_call_from_json(e["call"]);
      if (!e.at("result").is_null()) x.result = tool_result_from_json(e["result"]);
      if (!e.at("violation").is_null()) {
        x.violation = SchemaViolation{e["violation"].value("kind", ""), e["violation"].value("param", ""),
                                      e["violation"].value("detail", "")};
      }
      t.expert_turns.push_back(std::move(x));
    }
    const auto& k = j.at("knowledge");
    for (const auto& e : k.at("entries")) {
      t.knowledge.entries.push_back({e.at("turn").get<int>(), e.at("source").get<std::string>(),
                                     e.at("content").get<std::string>(), e.value("error", false)});
    }
    if (!k.at("summary").is_null()) t.knowledge.summary = k["summary"].get<std::string>();
    t.solutions = j.at("solutions").get<std::vector<std::string>>();
    t.solution_parsed = j.at("solution_parsed").get<std::vector<bool>>();
    for (const auto& c : j.at("critiques")) {
      CritiqueReport r;
      for (std::size_t n = 0; n < kGradeTags.size(); ++n) {
        r.grades[n] = c.at("grades").at(kGradeTags[n]).get<int>();
        r.clamped[n] = c.at("clamped").at(kGradeTags[n]).get<bool>();
      }
      r.feedback = c.value("feedback", "");
      r.feedback_truncated = c.value("feedback_truncated", false);
      r.substituted = c.value("substituted", false);
      r.raw_think = c.value("raw_think", "");
      t.critiques.push_back(std::move(r));
    }
    t.failures = j.at("failures").get<std::vector<std::string>>();
    t.final_answer = j.at("final").get<std::string>();
    t.model_call_count = j.at("model_call_count").get<int>();
    t.request_count = j.value("request_count", 0);
    for (const auto& c : j.value("calls", Json::array())) {
      CallRecord r;
      r.agent = parse_agent(c.at("agent").get<std::string>());
      r.requests = c.value("requests", 1);
      r.prompt_sha256 = c.value("prompt_sha256", "");
      r.replies = c.value("replies", std::vector<std::string>{});
      t.calls.push_back(std::move(r));
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ResponseMalformed, std::string("transcript: ") + e.what());
  }
  return t;
}

}  // namespace sciana
