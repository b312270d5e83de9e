#include <algorithm>
#include <regex>

#include "sciana/evaluation.hpp"
#include "sciana/orchestrator.hpp"
#include "sciana/protocol.hpp"

namespace sciana {

namespace {

std::string between(const std::string& text, const std::string& open, const std::string& close) {
  const auto a = text.find(open);
  if (a == std::string::npos) return "";
  const auto from = a + open.size();
  const auto b = close.empty() ? std::string::npos : text.find(close, from);
  return text.substr(from, b == std::string::npos ? std::string::npos : b - from);
}

std::string first_words(const std::string& text, std::size_t n) {
  std::string out;
  std::size_t count = 0;
  std::size_t i = 0;
  while (i < text.size() && count < n) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) {
      if (!out.empty()) out += ' ';
      out += text.substr(i, j - i);
      ++count;
    }
    i = j;
  }
  return out;
}

std::vector<std::string> letters_in(const std::string& options) {
  std::vector<std::string> out;
  static const std::regex re(R"(\(([A-Z]{1,2})\)\n)");
  for (auto it = std::sregex_iterator(options.begin(), options.end(), re); it != std::sregex_iterator(); ++it) {
    out.push_back((*it)[1].str());
  }
  return out;
}

std::string planner_reply(const std::string& prompt) {
  if (contains(prompt, "**Options**")) {
    const auto ids = letters_in(prompt);
    return "<think>The first option covers retrieval and citation.</think>\n<plan>" + (ids.empty() ? "A" : ids[0]) +
           "</plan>";
  }
  const std::string label = trim(between(prompt, "Label: ", "\n"));
  const std::string target = label.empty() ? "the input data" : label;
  return "<think>The task asks for an analysis of " + target +
         "; related contexts come first.</think>\n<plan>\n"
         "* Collect and condense the paper contexts that refer to " + target + "\n"
         "* Identify the main values, trends and comparisons reported in " + target + "\n"
         "* Write the analysis with the required citations and references\n</plan>";
}

std::string expert_reply(const std::vector<ChatTurn>& turns) {
  const std::string& prompt = turns.front().content;
  std::string gathered;
  for (const auto& t : turns) {
    if (t.role == Role::user && starts_with(t.content, "**Tool Result**")) {
      const auto body = t.content.substr(t.content.find("\n\n") + 2);
      gathered += first_words(body.substr(0, body.find("\n\nThis is TURN")), 60) + "\n";
    }
  }
  const bool tool_used = std::any_of(turns.begin(), turns.end(), [](const ChatTurn& t) {
    return t.role == Role::assistant && contains(t.content, "<tool>");
  });
  const std::string& last = turns.back().content;
  const std::string id = trim(between(prompt, "Id: ", "\n"));
  if (!tool_used && !id.empty() && !contains(last, "Do not call any more tools")) {
    return "<think>The referring contexts of the target explain its role in the paper.</think>\n"
           "<tool>context_finder</tool>\n<params>" + Json{{"query", id}, {"depth", 1}}.dump() + "</params>";
  }
  if (gathered.empty()) gathered = first_words(between(prompt, "**Additional Contexts**\n\n", "\n\n**"), 60);
  return "<think>The retrieved contexts are sufficient.</think>\n<summary>**Relevant Contexts**: " + trim(gathered) +
         "</summary>";
}

std::string solver_reply(const std::string& prompt) {
  const std::string caption = trim(between(prompt, "Caption: ", "\n"));
  const std::string context = between(prompt, "**Additional Contexts**\n\n", "\n\n**Problem-Solving Plan**");
  std::string answer = caption.empty() ? std::string("The data") : caption;
  answer += ". " + first_words(context, 80);
  if (contains(prompt, "**Critic Feedback On Your Previous Answer**")) {
    answer += " The reported trends are discussed together with the referenced sections.";
  }
  return "<think>Summarize the data with its context.</think>\n<answer>" + trim(answer) + "</answer>";
}

std::string critic_reply(const std::string& prompt) {
  if (contains(prompt, "**Options**")) {
    const auto ids = letters_in(prompt);
    return "<think>Option review.</think>\n<accuracy>2</accuracy>\n<completeness>1</completeness>\n<format>2</format>\n"
           "<writing>2</writing>\n<faithfulness>1</faithfulness>\n<feedback>" + (ids.empty() ? "A" : ids[0]) +
           "</feedback>";
  }
  return "<think>The answer restates the data but misses implications.</think>\n<accuracy>2</accuracy>\n"
         "<completeness>1</completeness>\n<format>2</format>\n<writing>2</writing>\n<faithfulness>1</faithfulness>\n"
         "<feedback>Discuss the implications of the reported trends and cite the referring sections.</feedback>";
}

std::string judge_reply(const std::string& prompt) {
  const std::string gold = between(prompt, "**Ground-truth Analysis**\n\n", "\n\n**Model Analysis**");
  const std::string model = between(prompt, "**Model Analysis**\n\n", "\n\n**Evaluation Criteria**");
  const double overlap = word_overlap(gold, model);
  const int g = overlap >= 0.8 ? 2 : overlap >= 0.3 ? 1 : 0;
  const std::string s = std::to_string(g);
  return "<think>Word overlap with the reference is " + std::to_string(overlap) + ".</think>\n<accuracy>" + s +
         "</accuracy>\n<completeness>" + s + "</completeness>\n<format>" + s + "</format>\n<writing>" + s +
         "</writing>\n<faithfulness>" + s + "</faithfulness>";
}

}  // namespace

std::string mock_reply(const std::vector<ChatTurn>& turns) {
  if (turns.empty()) return "";
  const std::string& prompt = turns.front().content;
  if (starts_with(prompt, "You are the planning agent")) return planner_reply(prompt);
  if (starts_with(prompt, "You are the research agent")) return expert_reply(turns);
  if (starts_with(prompt, "You are the writing agent")) return solver_reply(prompt);
  if (starts_with(prompt, "You are the reviewing agent")) return critic_reply(prompt);
  if (starts_with(prompt, "You grade analyses")) return judge_reply(prompt);
  if (starts_with(prompt, "LABEL TASK: analysis depth.")) {
    const std::string gold = between(prompt, "Reference analysis:\n", "\n\nReply with");
    return token_count(gold) > 60 ? "<depth>in_depth</depth>" : "<depth>shallow</depth>";
  }
  if (starts_with(prompt, "LABEL TASK: analysis objective.")) {
    const std::string gold = between(prompt, "Reference analysis:\n", "\n\nReply with");
    const bool numeric = std::any_of(gold.begin(), gold.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
    return numeric ? "<objective>experiment</objective>" : "<objective>methodology</objective>";
  }
  return "No visual or textual content can be inspected by the offline backend.";
}

std::shared_ptr<ChatClient> make_mock_client() {
  auto backend = std::make_shared<ScriptedChatBackend>("mock");
  backend->respond_with(mock_reply);
  return std::make_shared<ChatClient>(backend, RetryPolicy{0, 0.0, 1.0});
}

}  // namespace sciana
