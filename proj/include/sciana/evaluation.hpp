#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "sciana/gateway.hpp"
#include "sciana/protocol.hpp"
#include "sciana/text.hpp"

namespace sciana {

// Every metric takes the reference first and the candidate second, tokenized
// with the shared evaluation tokenizer.

/// LCS length over the longer of the two token sequences.
double rouge_l(const std::vector<std::string>& ref, const std::vector<std::string>& cand);
double rouge_l(std::string_view ref, std::string_view cand);

/// Conventional ROUGE-L F1 (LCS precision and recall), kept for diagnostics.
double rouge_l_f(const std::vector<std::string>& ref, const std::vector<std::string>& cand);

struct BleuOptions {
  int max_n = 4;
  // Empty means uniform 1/max_n.
  std::vector<double> weights;
  // A zero match count at order n contributes epsilon / total_n instead of 0.
  double epsilon = 0.1;
};

/// Brevity-penalised geometric mean of clipped n-gram precisions. Orders for
/// which the candidate has no n-grams are left out and the remaining weights
/// renormalised.
double bleu(const std::vector<std::string>& ref, const std::vector<std::string>& cand, const BleuOptions& opt = {});
double bleu(std::string_view ref, std::string_view cand, const BleuOptions& opt = {});

/// Jaccard similarity of the two token sets.
double word_overlap(const std::vector<std::string>& ref, const std::vector<std::string>& cand);
double word_overlap(std::string_view ref, std::string_view cand);

/// Cosine clamped into [0,1]. Identical vectors give exactly 1 and a zero vector gives 0.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// Cosine of the sentence embeddings. Two empty texts give 1, one empty text gives 0.
double cosine_sim(std::string_view ref, std::string_view cand, Embedder& embedder);

/// Greedy token matching: precision averages each candidate token's best
/// clamped cosine against the reference tokens, recall the reverse; returns
/// their harmonic mean. Either side empty gives 0.
double embedding_f1_vectors(const std::vector<EmbeddingVector>& ref, const std::vector<EmbeddingVector>& cand);
double embedding_f1(std::string_view ref, std::string_view cand, Embedder& embedder);

struct MeteorOptions {
  double alpha = 0.9;
  double beta = 3.0;
  double gamma = 0.5;
  // Memoised alignment states explored before falling back to the greedy aligner.
  std::size_t state_budget = 1u << 16;
};

struct MeteorDetail {
  std::size_t matches = 0;
  std::size_t chunks = 0;
  double precision = 0.0;
  double recall = 0.0;
  double fmean = 0.0;
  double penalty = 0.0;
  double score = 0.0;
  // False when the state budget ran out and the greedy alignment was used.
  bool exact = true;
};

/// Exact-match METEOR. The alignment maximises matches and, among those,
/// minimises the number of chunks.
MeteorDetail meteor_detail(const std::vector<std::string>& ref, const std::vector<std::string>& cand,
                           const MeteorOptions& opt = {});
double meteor(const std::vector<std::string>& ref, const std::vector<std::string>& cand,
              const MeteorOptions& opt = {});
double meteor(std::string_view ref, std::string_view cand, const MeteorOptions& opt = {});

struct MetricVector {
  double rouge_l = 0.0;
  double bleu = 0.0;
  double word_overlap = 0.0;
  double cosine = 0.0;
  double embedding_f1 = 0.0;
  double meteor = 0.0;
  std::optional<double> rouge_l_f;
};

Json to_json(const MetricVector& m);
MetricVector metric_vector_from_json(const Json& j);

struct MetricOptions {
  BleuOptions bleu;
  MeteorOptions meteor;
  bool emit_rouge_l_f = false;
};

MetricVector score_pair(std::string_view ref, std::string_view cand, Embedder& embedder,
                        const MetricOptions& opt = {});

/// Corpus means of each metric, as percentages.
struct MetricMeans {
  double cosine = 0.0;
  double embedding_f1 = 0.0;
  double meteor = 0.0;
  double rouge_l = 0.0;
  double bleu = 0.0;
  double word_overlap = 0.0;
};

struct Aggregates {
  MetricMeans means;
  double s_lex = 0.0;
  double s_sem = 0.0;
  double s_avg = 0.0;
};

/// S_Lex, S_Sem and S_Avg from per-metric percentage means.
Aggregates aggregate_means(const MetricMeans& means);

struct Delta {
  double abs = 0.0;
  double rel = 0.0;
};

/// Throws Error(DivisionByZeroBaseline) when baseline is zero.
Delta delta(double ours, double baseline);

struct DeltaReport {
  Delta s_lex;
  Delta s_sem;
  Delta s_avg;
};

DeltaReport delta(const Aggregates& ours, const Aggregates& baseline);

struct JudgeEntry {
  std::string instance_id;
  std::array<int, 5> grades{};
  bool clamped = false;
  int retries = 0;
};

struct JudgeReport {
  std::vector<JudgeEntry> entries;
  std::vector<std::string> excluded;
  // Order: accuracy, completeness, format, writing (clarity), faithfulness.
  std::array<double, 5> dimensions{};
  double s_mllm = 0.0;
};

/// Dimension percentage is 100 * mean(grade) / 2; S_Mllm is the mean of the five.
JudgeReport aggregate_judge(std::vector<JudgeEntry> entries, std::vector<std::string> excluded = {});

/// Per-instance dimension percentages and their mean.
std::pair<std::array<double, 5>, double> judge_percentages(const std::array<int, 5>& grades);

Json to_json(const JudgeReport& r);

struct ScoreReport {
  std::vector<std::string> ids;
  std::vector<MetricVector> vectors;
  Aggregates aggregates;
  std::optional<DeltaReport> deltas;
  std::optional<JudgeReport> judge;
};

/// Throws Error(EmptyInput) on an empty list. Permutation invariant.
ScoreReport aggregate(const std::vector<MetricVector>& vectors, std::vector<std::string> ids = {});

Json to_json(const ScoreReport& r);
ScoreReport score_report_from_json(const Json& j);

/// Plain-text table with columns Cosine, BERT, Meteor, Rouge-L, Bleu, Word, S_Sem, S_Lex, S_Avg.
std::string summary_table(const ScoreReport& r, std::string_view label = "run");

/// Renders the judge template, parses the five grade tags and retries once on
/// a tag error. Throws Error(JudgeUnparseable) when the retry also fails.
JudgeEntry judge_five_dim(const std::string& instance_id, std::string_view data_type, std::string_view gold,
                          std::string_view candidate, ChatClient& judge, std::string_view judge_template);

}  // namespace sciana
