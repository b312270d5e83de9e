#pragma once

// Deliberately naive reference implementations. They share no code with the
// library beyond the embedding table lookup.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace sciana::oracle {

using Tokens = std::vector<std::string>;

inline bool is_subsequence(const Tokens& small, const Tokens& big) {
  std::size_t i = 0;
  for (const auto& t : big) {
    if (i < small.size() && small[i] == t) ++i;
  }
  return i == small.size();
}

/// Longest common subsequence by trying every subsequence of the shorter side.
inline std::size_t lcs(const Tokens& a, const Tokens& b) {
  const Tokens& s = a.size() <= b.size() ? a : b;
  const Tokens& l = a.size() <= b.size() ? b : a;
  std::size_t best = 0;
  for (std::uint32_t mask = 0; mask < (1u << s.size()); ++mask) {
    Tokens sub;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (mask & (1u << i)) sub.push_back(s[i]);
    }
    if (sub.size() > best && is_subsequence(sub, l)) best = sub.size();
  }
  return best;
}

inline double rouge_l(const Tokens& ref, const Tokens& cand) {
  if (ref.empty() && cand.empty()) return 1.0;
  if (ref.empty() || cand.empty()) return 0.0;
  return static_cast<double>(lcs(ref, cand)) / static_cast<double>(std::max(ref.size(), cand.size()));
}

inline double jaccard(const Tokens& ref, const Tokens& cand) {
  const std::set<std::string> a(ref.begin(), ref.end()), b(cand.begin(), cand.end());
  if (a.empty() && b.empty()) return 1.0;
  std::vector<std::string> inter, uni;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(uni));
  return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

inline double cosine01(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return std::max(0.0, dot / std::sqrt(na * nb));
}

/// Greedy-matching F1 from the full pairwise similarity matrix.
inline double embedding_f1(const std::vector<std::vector<double>>& ref, const std::vector<std::vector<double>>& cand) {
  if (ref.empty() || cand.empty()) return 0.0;
  std::vector<std::vector<double>> sim(cand.size(), std::vector<double>(ref.size()));
  for (std::size_t i = 0; i < cand.size(); ++i) {
    for (std::size_t j = 0; j < ref.size(); ++j) sim[i][j] = cosine01(cand[i], ref[j]);
  }
  double p = 0, r = 0;
  for (std::size_t i = 0; i < cand.size(); ++i) p += *std::max_element(sim[i].begin(), sim[i].end());
  for (std::size_t j = 0; j < ref.size(); ++j) {
    double best = 0;
    for (std::size_t i = 0; i < cand.size(); ++i) best = std::max(best, sim[i][j]);
    r += best;
  }
  p /= static_cast<double>(cand.size());
  r /= static_cast<double>(ref.size());
  return p + r == 0 ? 0.0 : 2 * p * r / (p + r);
}

/// METEOR over every exact-match alignment: most matches first, then fewest chunks.
/// A chunk is a maximal run of candidate tokens aligned to consecutive reference positions.
struct MeteorSearch {
  const Tokens& ref;
  const Tokens& cand;
  std::vector<int> link;
  std::vector<bool> used;
  std::size_t best_m = 0;
  std::size_t best_c = std::numeric_limits<std::size_t>::max();

  MeteorSearch(const Tokens& r, const Tokens& c) : ref(r), cand(c), link(c.size(), -1), used(r.size(), false) {}

  std::size_t chunks_so_far(std::size_t upto) const {
    std::size_t chunks = 0;
    for (std::size_t i = 0; i < upto; ++i) {
      if (link[i] < 0) continue;
      const bool continues = i > 0 && link[i - 1] >= 0 && link[i] == link[i - 1] + 1;
      if (!continues) ++chunks;
    }
    return chunks;
  }

  void go(std::size_t i, std::size_t matched) {
    const std::size_t reachable = matched + (cand.size() - i);
    if (reachable < best_m) return;
    if (reachable == best_m && chunks_so_far(i) >= best_c) return;
    if (i == cand.size()) {
      const std::size_t c = chunks_so_far(i);
      if (matched > best_m || (matched == best_m && c < best_c)) {
        best_m = matched;
        best_c = c;
      }
      return;
    }
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (used[j] || ref[j] != cand[i]) continue;
      used[j] = true;
      link[i] = static_cast<int>(j);
      go(i + 1, matched + 1);
      link[i] = -1;
      used[j] = false;
    }
    go(i + 1, matched);
  }
};

inline double meteor(const Tokens& ref, const Tokens& cand, double alpha = 0.9, double beta = 3.0,
                     double gamma = 0.5) {
  if (ref.empty() || cand.empty()) return 0.0;
  MeteorSearch s(ref, cand);
  s.go(0, 0);
  if (s.best_m == 0) return 0.0;
  const double m = static_cast<double>(s.best_m);
  const double p = m / static_cast<double>(cand.size());
  const double r = m / static_cast<double>(ref.size());
  const double fmean = p * r / (alpha * p + (1 - alpha) * r);
  const double penalty = gamma * std::pow(static_cast<double>(s.best_c) / m, beta);
  return std::clamp(fmean * (1 - penalty), 0.0, 1.0);
}

/// Undirected shortest-path distances by Floyd-Warshall; level k holds the nodes at distance k.
inline std::vector<std::set<int>> distance_levels(int n, const std::vector<std::pair<int, int>>& edges, int root,
                                                  int depth) {
  const int inf = std::numeric_limits<int>::max() / 4;
  std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
  for (int i = 0; i < n; ++i) d[i][i] = 0;
  for (const auto& [u, v] : edges) {
    if (u == v) continue;
    d[u][v] = d[v][u] = 1;
  }
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
    }
  }
  std::vector<std::set<int>> levels(static_cast<std::size_t>(depth));
  for (int v = 0; v < n; ++v) {
    if (d[root][v] >= 1 && d[root][v] <= depth) levels[static_cast<std::size_t>(d[root][v] - 1)].insert(v);
  }
  return levels;
}

}  // namespace sciana::oracle
