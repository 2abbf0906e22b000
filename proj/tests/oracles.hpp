// Brute-force reference implementations used as independent oracles. These
// recompute everything with plain scalar loops and never touch the graph ops.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracles {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double max_dot(const std::vector<std::vector<double>>& tokens,
                      const std::vector<double>& y) {
  double best = -1e300;
  for (const auto& row : tokens) best = std::max(best, dot(row, y));
  return best;
}

// Eq.-style NCE term: -log( exp(s_pos/tau) / sum_j exp(s_j/tau) )
inline double nce_term(const std::vector<double>& scores, size_t pos, double tau) {
  double denom = 0;
  for (double s : scores) denom += std::exp(s / tau);
  return -std::log(std::exp(scores[pos] / tau) / denom);
}

inline double sentence_loss(const std::vector<std::vector<double>>& xbar,
                            const std::vector<std::vector<double>>& ybar, double tau) {
  const size_t K = xbar.size();
  double loss = 0;
  for (size_t i = 0; i < K; ++i) {
    std::vector<double> scores(K);
    for (size_t j = 0; j < K; ++j) scores[j] = dot(xbar[j], ybar[i]);
    loss += nce_term(scores, i, tau);
  }
  return loss;
}

struct ToiEntry {
  int position;  // row into the text token matrix
  double weight;
};

inline double token_loss(const std::vector<std::vector<std::vector<double>>>& video_tokens,
                         const std::vector<std::vector<std::vector<double>>>& text_tokens,
                         const std::vector<std::vector<ToiEntry>>& toi, double tau) {
  const size_t K = video_tokens.size();
  double loss = 0;
  for (size_t i = 0; i < K; ++i) {
    for (const ToiEntry& entry : toi[i]) {
      const auto& y = text_tokens[i][static_cast<size_t>(entry.position)];
      std::vector<double> scores(K);
      for (size_t j = 0; j < K; ++j) scores[j] = max_dot(video_tokens[j], y);
      loss += entry.weight * nce_term(scores, i, tau);
    }
  }
  return loss;
}

// Full-sort top-k with ties broken by lower index, excluding the anchor.
inline std::vector<int> top_k(int anchor, int K, int k,
                              const std::vector<double>& column_scores) {
  std::vector<int> candidates;
  for (int j = 0; j < K; ++j)
    if (j != anchor) candidates.push_back(j);
  std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
    if (column_scores[static_cast<size_t>(a)] != column_scores[static_cast<size_t>(b)])
      return column_scores[static_cast<size_t>(a)] > column_scores[static_cast<size_t>(b)];
    return a < b;
  });
  candidates.resize(static_cast<size_t>(k));
  return candidates;
}

// Pessimistic rank: 1 + #candidates (other than truth) scoring >= truth.
inline int rank_of(const std::vector<double>& scores, int truth) {
  int rank = 1;
  for (size_t c = 0; c < scores.size(); ++c) {
    if (static_cast<int>(c) == truth) continue;
    if (scores[c] >= scores[static_cast<size_t>(truth)]) ++rank;
  }
  return rank;
}

}  // namespace oracles
