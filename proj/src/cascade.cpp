#include "cascalign/cascade.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "cascalign/errors.hpp"

namespace cascalign {

CombinedScoreMatrix combined_scores(const EncodedBatch& batch, const std::vector<ToiWeights>& toi,
                                    bool idf_weighted) {
  const int K = batch.batch_size();
  if (static_cast<int>(toi.size()) != K)
    throw DimensionError("combined_scores: toi size does not match batch");
  const int d = batch.video_means.dim(1);

  CombinedScoreMatrix out;
  out.K = K;
  out.scores.assign(static_cast<size_t>(K) * K, 0.0);

  for (int j = 0; j < K; ++j) {
    const Tensor& xj = batch.video_tokens[static_cast<size_t>(j)];
    const int m = xj.dim(0);
    for (int i = 0; i < K; ++i) {
      double s = 0;
      for (int c = 0; c < d; ++c)
        s += static_cast<double>(batch.video_means.at2(j, c)) *
             static_cast<double>(batch.text_cls.at2(i, c));
      const ToiWeights& w = toi[static_cast<size_t>(i)];
      const Tensor& yi = batch.text_tokens[static_cast<size_t>(i)];
      for (size_t t = 0; t < w.size(); ++t) {
        const int yrow = AlignmentModel::text_row(w.positions[t]);
        double best = 0;
        for (int r = 0; r < m; ++r) {
          double dot = 0;
          for (int c = 0; c < d; ++c)
            dot += static_cast<double>(xj.at2(r, c)) * static_cast<double>(yi.at2(yrow, c));
          if (r == 0 || dot > best) best = dot;
        }
        s += idf_weighted ? w.weights[t] * best : best;
      }
      out.at(j, i) = s;
    }
  }
  return out;
}

namespace {

std::vector<int> top_k_excluding(int anchor, int K, int k_prime,
                                 const std::function<double(int)>& score) {
  std::vector<int> candidates;
  candidates.reserve(static_cast<size_t>(K) - 1);
  for (int idx = 0; idx < K; ++idx) {
    if (idx != anchor) candidates.push_back(idx);
  }
  std::partial_sort(candidates.begin(), candidates.begin() + k_prime, candidates.end(),
                    [&](int a, int b) {
                      const double sa = score(a), sb = score(b);
                      if (sa != sb) return sa > sb;
                      return a < b;  // ties: lower index wins
                    });
  candidates.resize(static_cast<size_t>(k_prime));
  return candidates;
}

void check_k_prime(int K, int k_prime) {
  if (K < 2) throw ConfigError("selection: batch size must be at least 2");
  if (k_prime < 1 || k_prime > K - 1)
    throw ConfigError("selection: k_prime must be in [1, K-1], got " + std::to_string(k_prime));
}

}  // namespace

CascadeSelection cascade_select(const CombinedScoreMatrix& scores, int k_prime) {
  const int K = scores.K;
  check_k_prime(K, k_prime);
  CascadeSelection sel;
  sel.text_anchor_negs.reserve(static_cast<size_t>(K));
  sel.video_anchor_negs.reserve(static_cast<size_t>(K));
  for (int i = 0; i < K; ++i)
    sel.text_anchor_negs.push_back(
        top_k_excluding(i, K, k_prime, [&](int j) { return scores.at(j, i); }));
  for (int j = 0; j < K; ++j)
    sel.video_anchor_negs.push_back(
        top_k_excluding(j, K, k_prime, [&](int i) { return scores.at(j, i); }));
  return sel;
}

CascadeSelection random_select(int K, int k_prime, Rng& rng) {
  check_k_prime(K, k_prime);
  CascadeSelection sel;
  auto draw = [&](int anchor) {
    const std::vector<int> picks = rng.sample_without_replacement(K - 1, k_prime);
    std::vector<int> out;
    out.reserve(static_cast<size_t>(k_prime));
    for (int p : picks) out.push_back(p >= anchor ? p + 1 : p);  // skip the anchor slot
    return out;
  };
  for (int i = 0; i < K; ++i) sel.text_anchor_negs.push_back(draw(i));
  for (int j = 0; j < K; ++j) sel.video_anchor_negs.push_back(draw(j));
  return sel;
}

CascadeSelection full_select(int K) {
  if (K < 2) throw ConfigError("selection: batch size must be at least 2");
  CascadeSelection sel;
  for (int anchor = 0; anchor < K; ++anchor) {
    std::vector<int> all;
    for (int idx = 0; idx < K; ++idx)
      if (idx != anchor) all.push_back(idx);
    sel.text_anchor_negs.push_back(all);
    sel.video_anchor_negs.push_back(std::move(all));
  }
  return sel;
}

std::vector<std::pair<int, int>> selected_pairs(const CascadeSelection& selection) {
  const int K = selection.batch_size();
  std::set<std::pair<int, int>> pairs;
  for (int i = 0; i < K; ++i) {
    pairs.emplace(i, i);
    for (int j : selection.text_anchor_negs[static_cast<size_t>(i)]) pairs.emplace(j, i);
  }
  for (int j = 0; j < K; ++j) {
    pairs.emplace(j, j);
    for (int i : selection.video_anchor_negs[static_cast<size_t>(j)]) pairs.emplace(j, i);
  }
  return {pairs.begin(), pairs.end()};
}

}  // namespace cascalign
