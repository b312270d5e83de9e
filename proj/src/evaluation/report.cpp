#include <algorithm>
#include <cstdio>
#include <functional>

#include "sciana/evaluation.hpp"

namespace sciana {

namespace {

// Sorting before summation makes the mean independent of input order.
double order_free_mean(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

Json delta_json(const Delta& d) { return Json{{"abs", d.abs}, {"rel", d.rel}}; }

Delta delta_from_json(const Json& j) { return {j.at("abs").get<double>(), j.at("rel").get<double>()}; }

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

Json to_json(const MetricVector& m) {
  Json j{{"rouge_l", m.rouge_l}, {"bleu", m.bleu},         {"word_overlap", m.word_overlap},
         {"cosine", m.cosine},   {"embedding_f1", m.embedding_f1}, {"meteor", m.meteor}};
  if (m.rouge_l_f) j["rouge_l_f"] = *m.rouge_l_f;
  return j;
}

MetricVector metric_vector_from_json(const Json& j) {
  MetricVector m;
  m.rouge_l = j.at("rouge_l").get<double>();
  m.bleu = j.at("bleu").get<double>();
  m.word_overlap = j.at("word_overlap").get<double>();
  m.cosine = j.at("cosine").get<double>();
  m.embedding_f1 = j.at("embedding_f1").get<double>();
  m.meteor = j.at("meteor").get<double>();
  if (j.contains("rouge_l_f")) m.rouge_l_f = j["rouge_l_f"].get<double>();
  return m;
}

Aggregates aggregate_means(const MetricMeans& means) {
  Aggregates a;
  a.means = means;
  a.s_sem = (means.cosine + means.embedding_f1 + means.meteor) / 3.0;
  a.s_lex = (means.rouge_l + means.bleu + means.word_overlap) / 3.0;
  a.s_avg = (means.cosine + means.embedding_f1 + means.meteor + means.rouge_l + means.bleu + means.word_overlap) / 6.0;
  return a;
}

Delta delta(double ours, double baseline) {
  if (baseline == 0.0) throw Error(ErrorCode::DivisionByZeroBaseline, "relative delta against a zero baseline");
  return {ours - baseline, (ours - baseline) / baseline * 100.0};
}

DeltaReport delta(const Aggregates& ours, const Aggregates& baseline) {
  return {delta(ours.s_lex, baseline.s_lex), delta(ours.s_sem, baseline.s_sem), delta(ours.s_avg, baseline.s_avg)};
}

ScoreReport aggregate(const std::vector<MetricVector>& vectors, std::vector<std::string> ids) {
  if (vectors.empty()) throw Error(ErrorCode::EmptyInput, "no metric vectors to aggregate");
  if (!ids.empty() && ids.size() != vectors.size()) {
    throw Error(ErrorCode::InvalidArgument, "instance ids and metric vectors differ in length");
  }
  auto column = [&](double MetricVector::*field) {
    std::vector<double> v;
    v.reserve(vectors.size());
    for (const auto& m : vectors) v.push_back(m.*field * 100.0);
    return order_free_mean(std::move(v));
  };
  MetricMeans means;
  means.cosine = column(&MetricVector::cosine);
  means.embedding_f1 = column(&MetricVector::embedding_f1);
  means.meteor = column(&MetricVector::meteor);
  means.rouge_l = column(&MetricVector::rouge_l);
  means.bleu = column(&MetricVector::bleu);
  means.word_overlap = column(&MetricVector::word_overlap);
  ScoreReport r;
  r.ids = std::move(ids);
  r.vectors = vectors;
  r.aggregates = aggregate_means(means);
  return r;
}

std::pair<std::array<double, 5>, double> judge_percentages(const std::array<int, 5>& grades) {
  std::array<double, 5> pct{};
  double sum = 0.0;
  for (std::size_t k = 0; k < 5; ++k) {
    pct[k] = 100.0 * grades[k] / 2.0;
    sum += pct[k];
  }
  return {pct, sum / 5.0};
}

JudgeReport aggregate_judge(std::vector<JudgeEntry> entries, std::vector<std::string> excluded) {
  JudgeReport r;
  r.entries = std::move(entries);
  r.excluded = std::move(excluded);
  if (r.entries.empty()) return r;
  for (std::size_t k = 0; k < 5; ++k) {
    std::vector<double> g;
    for (const auto& e : r.entries) g.push_back(e.grades[k]);
    r.dimensions[k] = 100.0 * order_free_mean(std::move(g)) / 2.0;
  }
  double s = 0.0;
  for (double d : r.dimensions) s += d;
  r.s_mllm = s / 5.0;
  return r;
}

Json to_json(const JudgeReport& r) {
  Json entries = Json::array();
  for (const auto& e : r.entries) {
    Json g = Json::object();
    for (std::size_t k = 0; k < 5; ++k) g[kGradeTags[k]] = e.grades[k];
    entries.push_back(
        Json{{"instance_id", e.instance_id}, {"grades", g}, {"clamped", e.clamped}, {"retries", e.retries}});
  }
  Json dims = Json::object();
  dims["s_acc"] = r.dimensions[0];
  dims["s_complete"] = r.dimensions[1];
  dims["s_format"] = r.dimensions[2];
  dims["s_clarity"] = r.dimensions[3];
  dims["s_faith"] = r.dimensions[4];
  return Json{{"entries", entries},
              {"excluded", r.excluded},
              {"excluded_count", r.excluded.size()},
              {"dimensions", dims},
              {"s_mllm", r.s_mllm}};
}

Json to_json(const ScoreReport& r) {
  Json inst = Json::array();
  for (std::size_t i = 0; i < r.vectors.size(); ++i) {
    Json row;
    row["instance_id"] = i < r.ids.size() ? r.ids[i] : std::to_string(i);
    row["metrics"] = to_json(r.vectors[i]);
    inst.push_back(std::move(row));
  }
  const auto& m = r.aggregates.means;
  Json agg{{"cosine", m.cosine},   {"embedding_f1", m.embedding_f1}, {"meteor", m.meteor},
           {"rouge_l", m.rouge_l}, {"bleu", m.bleu},                 {"word_overlap", m.word_overlap},
           {"s_sem", r.aggregates.s_sem}, {"s_lex", r.aggregates.s_lex}, {"s_avg", r.aggregates.s_avg}};
  Json j{{"count", r.vectors.size()}, {"aggregates", agg}, {"instances", inst}};
  if (r.deltas) {
    j["deltas"] = Json{{"s_lex", delta_json(r.deltas->s_lex)},
                       {"s_sem", delta_json(r.deltas->s_sem)},
                       {"s_avg", delta_json(r.deltas->s_avg)}};
  }
  if (r.judge) j["judge"] = to_json(*r.judge);
  return j;
}

ScoreReport score_report_from_json(const Json& j) {
  ScoreReport r;
  for (const auto& row : j.at("instances")) {
    r.ids.push_back(row.at("instance_id").get<std::string>());
    r.vectors.push_back(metric_vector_from_json(row.at("metrics")));
  }
  const auto& a = j.at("aggregates");
  MetricMeans m;
  m.cosine = a.at("cosine").get<double>();
  m.embedding_f1 = a.at("embedding_f1").get<double>();
  m.meteor = a.at("meteor").get<double>();
  m.rouge_l = a.at("rouge_l").get<double>();
  m.bleu = a.at("bleu").get<double>();
  m.word_overlap = a.at("word_overlap").get<double>();
  r.aggregates = aggregate_means(m);
  if (j.contains("deltas")) {
    const auto& d = j["deltas"];
    r.deltas = DeltaReport{delta_from_json(d.at("s_lex")), delta_from_json(d.at("s_sem")),
                           delta_from_json(d.at("s_avg"))};
  }
  return r;
}

std::string summary_table(const ScoreReport& r, std::string_view label) {
  const auto& m = r.aggregates.means;
  const std::vector<std::string> head = {"", "Cosine", "BERT", "Meteor", "Rouge-L", "Bleu",
                                         "Word", "S_Sem", "S_Lex", "S_Avg"};
  const std::vector<std::string> row = {std::string(label), fmt2(m.cosine),  fmt2(m.embedding_f1),
                                        fmt2(m.meteor),     fmt2(m.rouge_l), fmt2(m.bleu),
                                        fmt2(m.word_overlap), fmt2(r.aggregates.s_sem), fmt2(r.aggregates.s_lex),
                                        fmt2(r.aggregates.s_avg)};
  std::vector<std::vector<std::string>> rows = {head, row};
  if (r.deltas) {
    auto sign = [](double v) { return (v >= 0 ? "+" : "") + fmt2(v); };
    rows.push_back({"delta_abs", "", "", "", "", "", "", sign(r.deltas->s_sem.abs), sign(r.deltas->s_lex.abs),
                    sign(r.deltas->s_avg.abs)});
    rows.push_back({"delta_rel%", "", "", "", "", "", "", sign(r.deltas->s_sem.rel), sign(r.deltas->s_lex.rel),
                    sign(r.deltas->s_avg.rel)});
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& rr : rows) {
    for (std::size_t k = 0; k < rr.size(); ++k) width[k] = std::max(width[k], rr[k].size());
  }
  std::string out;
  for (const auto& rr : rows) {
    for (std::size_t k = 0; k < rr.size(); ++k) {
      if (k > 0) out += "  ";
      const std::string pad(width[k] - rr[k].size(), ' ');
      out += k == 0 ? rr[k] + pad : pad + rr[k];
    }
    out += '\n';
  }
  return out;
}

JudgeEntry judge_five_dim(const std::string& instance_id, std::string_view data_type, std::string_view gold,
                          std::string_view candidate, ChatClient& judge, std::string_view judge_template) {
  const std::vector<std::string> required(kGradeTags.begin(), kGradeTags.end());
  const std::string prompt = render_template(judge_template, {{"data_type", std::string(data_type)},
                                                              {"gt_analysis", std::string(gold)},
                                                              {"model_analysis", std::string(candidate)}});
  std::vector<ChatTurn> turns = {{Role::user, prompt, {}}};
  for (int attempt = 0; attempt < 2; ++attempt) {
    const auto reply = judge.chat(turns);
    const auto parsed = parse_tags(reply.text, required);
    JudgeEntry e;
    e.instance_id = instance_id;
    e.retries = attempt;
    bool complete = parsed.ok();
    for (std::size_t k = 0; complete && k < 5; ++k) {
      const auto g = parse_grade(*parsed.find(kGradeTags[k]));
      if (!g) {
        complete = false;
        break;
      }
      e.grades[k] = g->value;
      e.clamped = e.clamped || g->clamped;
    }
    if (complete) return e;
    turns.push_back({Role::assistant, reply.text, {}});
    turns.push_back({Role::user, format_reminder(required), {}});
  }
  throw Error(ErrorCode::JudgeUnparseable, "judge reply for " + instance_id + " has no usable grades");
}

}  // namespace sciana
