#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <unordered_map>

#include "sciana/evaluation.hpp"

namespace sciana {

namespace {

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::map<std::vector<std::string>, std::size_t> ngram_counts(const std::vector<std::string>& toks, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    ++counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                      toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

double rouge_l(const std::vector<std::string>& ref, const std::vector<std::string>& cand) {
  if (ref.empty() && cand.empty()) return 1.0;
  if (ref.empty() || cand.empty()) return 0.0;
  return static_cast<double>(lcs_length(ref, cand)) / static_cast<double>(std::max(ref.size(), cand.size()));
}

double rouge_l(std::string_view ref, std::string_view cand) { return rouge_l(tokenize(ref), tokenize(cand)); }

double rouge_l_f(const std::vector<std::string>& ref, const std::vector<std::string>& cand) {
  if (ref.empty() && cand.empty()) return 1.0;
  if (ref.empty() || cand.empty()) return 0.0;
  const double l = static_cast<double>(lcs_length(ref, cand));
  if (l == 0.0) return 0.0;
  const double p = l / static_cast<double>(cand.size());
  const double r = l / static_cast<double>(ref.size());
  return 2.0 * p * r / (p + r);
}

double bleu(const std::vector<std::string>& ref, const std::vector<std::string>& cand, const BleuOptions& opt) {
  if (opt.max_n < 1) throw Error(ErrorCode::InvalidArgument, "BLEU order must be at least 1");
  std::vector<double> w = opt.weights;
  if (w.empty()) w.assign(static_cast<std::size_t>(opt.max_n), 1.0 / opt.max_n);
  if (w.size() != static_cast<std::size_t>(opt.max_n)) {
    throw Error(ErrorCode::InvalidArgument, "BLEU weights must have one entry per order");
  }
  double wsum = 0.0;
  for (double x : w) {
    if (x < 0.0) throw Error(ErrorCode::InvalidArgument, "BLEU weights must be non-negative");
    wsum += x;
  }
  if (std::abs(wsum - 1.0) > 1e-9) throw Error(ErrorCode::InvalidArgument, "BLEU weights must sum to 1");
  if (cand.empty()) return ref.empty() ? 1.0 : 0.0;
  if (ref.empty()) return 0.0;

  double log_sum = 0.0;
  double used_weight = 0.0;
  for (int n = 1; n <= opt.max_n; ++n) {
    const auto nn = static_cast<std::size_t>(n);
    if (cand.size() < nn || w[nn - 1] == 0.0) continue;
    const auto cand_counts = ngram_counts(cand, nn);
    const auto ref_counts = ngram_counts(ref, nn);
    std::size_t clipped = 0;
    for (const auto& [gram, c] : cand_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) clipped += std::min(c, it->second);
    }
    const double total = static_cast<double>(cand.size() - nn + 1);
    const double p = clipped > 0 ? static_cast<double>(clipped) / total : opt.epsilon / total;
    log_sum += w[nn - 1] * std::log(p);
    used_weight += w[nn - 1];
  }
  if (used_weight == 0.0) return 0.0;
  const double c = static_cast<double>(cand.size());
  const double r = static_cast<double>(ref.size());
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return clamp01(bp * std::exp(log_sum / used_weight));
}

double bleu(std::string_view ref, std::string_view cand, const BleuOptions& opt) {
  return bleu(tokenize(ref), tokenize(cand), opt);
}

double word_overlap(const std::vector<std::string>& ref, const std::vector<std::string>& cand) {
  const std::set<std::string> a(ref.begin(), ref.end());
  const std::set<std::string> b(cand.begin(), cand.end());
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& t : a) inter += b.count(t);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

double word_overlap(std::string_view ref, std::string_view cand) {
  return word_overlap(tokenize(ref), tokenize(cand));
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::InvalidArgument, "embedding dimensions differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  if (a == b) return 1.0;
  return clamp01(dot / (std::sqrt(na) * std::sqrt(nb)));
}

double cosine_sim(std::string_view ref, std::string_view cand, Embedder& embedder) {
  const bool ref_empty = tokenize(ref).empty();
  const bool cand_empty = tokenize(cand).empty();
  if (ref_empty && cand_empty) return 1.0;
  if (ref_empty || cand_empty) return 0.0;
  return cosine_similarity(embedder.embed_sentence(ref), embedder.embed_sentence(cand));
}

double embedding_f1_vectors(const std::vector<EmbeddingVector>& ref, const std::vector<EmbeddingVector>& cand) {
  if (ref.empty() || cand.empty()) return 0.0;
  std::vector<double> best_ref(ref.size(), 0.0);
  double p_sum = 0.0;
  for (const auto& c : cand) {
    double best = 0.0;
    for (std::size_t j = 0; j < ref.size(); ++j) {
      const double s = cosine_similarity(ref[j], c);
      best = std::max(best, s);
      best_ref[j] = std::max(best_ref[j], s);
    }
    p_sum += best;
  }
  double r_sum = 0.0;
  for (double b : best_ref) r_sum += b;
  const double p = p_sum / static_cast<double>(cand.size());
  const double r = r_sum / static_cast<double>(ref.size());
  if (p + r == 0.0) return 0.0;
  if (p == 1.0 && r == 1.0) return 1.0;
  return clamp01(2.0 * p * r / (p + r));
}

double embedding_f1(std::string_view ref, std::string_view cand, Embedder& embedder) {
  return embedding_f1_vectors(embedder.embed_tokens(ref), embedder.embed_tokens(cand));
}

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
constexpr std::size_t kInf = std::numeric_limits<std::size_t>::max() / 2;

// Minimum chunk count over every maximum exact-match alignment, by memoised
// search over (candidate position, used reference positions, previous link).
class ChunkSearch {
 public:
  ChunkSearch(const std::vector<std::string>& ref, const std::vector<std::string>& cand, std::size_t matches,
              std::size_t budget)
      : ref_(ref), cand_(cand), m_(matches), budget_(budget), words_((ref.size() + 63) / 64, 0) {
    for (std::size_t i = 0; i < cand.size(); ++i) {
      std::vector<std::size_t> pos;
      for (std::size_t j = 0; j < ref.size(); ++j) {
        if (ref[j] == cand[i]) pos.push_back(j);
      }
      options_.push_back(std::move(pos));
    }
    // A candidate token may stay unmatched only when its word occurs more
    // often in the candidate than in the reference.
    std::map<std::string, long> surplus;
    for (const auto& t : cand) ++surplus[t];
    for (const auto& t : ref) --surplus[t];
    for (std::size_t i = 0; i < cand.size(); ++i) skip_ok_.push_back(options_[i].empty() || surplus[cand[i]] > 0);
  }

  std::optional<std::size_t> run() {
    const std::size_t best = solve(0, kNone, 0);
    if (exhausted_) return std::nullopt;
    return best;
  }

 private:
  std::size_t solve(std::size_t i, std::size_t prev, std::size_t matched) {
    if (matched + (cand_.size() - i) < m_) return kInf;
    if (i == cand_.size()) return matched == m_ ? 0 : kInf;
    if (exhausted_) return kInf;
    std::string key;
    key.reserve(words_.size() * 8 + 16);
    key.append(reinterpret_cast<const char*>(&i), sizeof i);
    key.append(reinterpret_cast<const char*>(&prev), sizeof prev);
    key.append(reinterpret_cast<const char*>(words_.data()), words_.size() * sizeof(std::uint64_t));
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    if (memo_.size() >= budget_) {
      exhausted_ = true;
      return kInf;
    }
    std::size_t best = kInf;
    for (std::size_t j : options_[i]) {
      if (used(j)) continue;
      const std::size_t cost = (prev != kNone && j == prev + 1) ? 0 : 1;
      set(j, true);
      const std::size_t rest = solve(i + 1, j, matched + 1);
      set(j, false);
      if (rest < kInf) best = std::min(best, rest + cost);
    }
    if (skip_ok_[i]) best = std::min(best, solve(i + 1, kNone, matched));
    memo_.emplace(std::move(key), best);
    return best;
  }

  bool used(std::size_t j) const { return (words_[j / 64] >> (j % 64)) & 1u; }
  void set(std::size_t j, bool v) {
    if (v) words_[j / 64] |= (std::uint64_t{1} << (j % 64));
    else words_[j / 64] &= ~(std::uint64_t{1} << (j % 64));
  }

  const std::vector<std::string>& ref_;
  const std::vector<std::string>& cand_;
  std::size_t m_;
  std::size_t budget_;
  std::vector<std::uint64_t> words_;
  std::vector<std::vector<std::size_t>> options_;
  std::vector<bool> skip_ok_;
  std::unordered_map<std::string, std::size_t> memo_;
  bool exhausted_ = false;
};

// Left-to-right alignment that prefers extending the current chunk and
// otherwise takes the earliest free reference position.
std::size_t greedy_chunks(const std::vector<std::string>& ref, const std::vector<std::string>& cand) {
  std::map<std::string, std::size_t> quota;
  {
    std::map<std::string, std::size_t> rc, cc;
    for (const auto& t : ref) ++rc[t];
    for (const auto& t : cand) ++cc[t];
    for (const auto& [t, c] : cc) {
      auto it = rc.find(t);
      if (it != rc.end()) quota[t] = std::min(c, it->second);
    }
  }
  std::vector<bool> taken(ref.size(), false);
  std::size_t prev = kNone;
  std::size_t chunks = 0;
  for (const auto& tok : cand) {
    auto q = quota.find(tok);
    if (q == quota.end() || q->second == 0) {
      prev = kNone;
      continue;
    }
    std::size_t pick = kNone;
    if (prev != kNone && prev + 1 < ref.size() && !taken[prev + 1] && ref[prev + 1] == tok) {
      pick = prev + 1;
    } else {
      for (std::size_t j = 0; j < ref.size(); ++j) {
        if (!taken[j] && ref[j] == tok) {
          pick = j;
          break;
        }
      }
    }
    if (pick != prev + 1 || prev == kNone) ++chunks;
    taken[pick] = true;
    --q->second;
    prev = pick;
  }
  return chunks;
}

}  // namespace

MeteorDetail meteor_detail(const std::vector<std::string>& ref, const std::vector<std::string>& cand,
                           const MeteorOptions& opt) {
  MeteorDetail d;
  if (ref.empty() || cand.empty()) return d;
  std::map<std::string, std::size_t> rc, cc;
  for (const auto& t : ref) ++rc[t];
  for (const auto& t : cand) ++cc[t];
  for (const auto& [t, c] : cc) {
    auto it = rc.find(t);
    if (it != rc.end()) d.matches += std::min(c, it->second);
  }
  if (d.matches == 0) return d;
  ChunkSearch search(ref, cand, d.matches, opt.state_budget);
  if (auto exact = search.run()) {
    d.chunks = *exact;
  } else {
    d.chunks = greedy_chunks(ref, cand);
    d.exact = false;
  }
  const double m = static_cast<double>(d.matches);
  d.precision = m / static_cast<double>(cand.size());
  d.recall = m / static_cast<double>(ref.size());
  d.fmean = d.precision * d.recall / (opt.alpha * d.precision + (1.0 - opt.alpha) * d.recall);
  d.penalty = opt.gamma * std::pow(static_cast<double>(d.chunks) / m, opt.beta);
  d.score = clamp01(d.fmean * (1.0 - d.penalty));
  return d;
}

double meteor(const std::vector<std::string>& ref, const std::vector<std::string>& cand, const MeteorOptions& opt) {
  return meteor_detail(ref, cand, opt).score;
}

double meteor(std::string_view ref, std::string_view cand, const MeteorOptions& opt) {
  return meteor(tokenize(ref), tokenize(cand), opt);
}

MetricVector score_pair(std::string_view ref, std::string_view cand, Embedder& embedder, const MetricOptions& opt) {
  const auto r = tokenize(ref);
  const auto c = tokenize(cand);
  MetricVector m;
  m.rouge_l = rouge_l(r, c);
  m.bleu = bleu(r, c, opt.bleu);
  m.word_overlap = word_overlap(r, c);
  m.cosine = cosine_sim(ref, cand, embedder);
  m.embedding_f1 = embedding_f1_vectors(embedder.embed_tokens(ref), embedder.embed_tokens(cand));
  m.meteor = meteor(r, c, opt.meteor);
  if (opt.emit_rouge_l_f) m.rouge_l_f = rouge_l_f(r, c);
  return m;
}

}  // namespace sciana
