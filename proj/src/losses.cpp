#include "cascalign/losses.hpp"

#include <string>

#include "cascalign/errors.hpp"
#include "cascalign/ops.hpp"

namespace cascalign {

void LossConfig::validate(int batch_size) const {
  if (!(tau1 > 0) || !(tau2 > 0)) throw ConfigError("loss config: temperatures must be positive");
  if (lambda_t < 0) throw ConfigError("loss config: lambda_t must be nonnegative");
  if (k_prime < 1 || k_prime > batch_size - 1)
    throw ConfigError("loss config: k_prime must be in [1, K-1], got " + std::to_string(k_prime) +
                      " for K=" + std::to_string(batch_size));
}

Tensor sentence_loss(const Tensor& video_means, const Tensor& text_cls, double tau1,
                     bool symmetric, bool mean_reduce) {
  if (video_means.rank() != 2 || text_cls.rank() != 2 ||
      video_means.shape() != text_cls.shape())
    throw DimensionError("sentence_loss: expected matching [K×d] inputs");
  const int K = video_means.dim(0);
  if (K < 2) throw DimensionError("sentence_loss: batch size must be at least 2");

  std::vector<Tensor> terms;
  for (int i = 0; i < K; ++i) {
    Tensor scores = matvec(video_means, row(text_cls, i));  // scores[j] = x̄_j · ȳ_i
    terms.push_back(nce_from_scores(scores, i, static_cast<real>(tau1)));
  }
  if (symmetric) {
    for (int j = 0; j < K; ++j) {
      Tensor scores = matvec(text_cls, row(video_means, j));
      terms.push_back(nce_from_scores(scores, j, static_cast<real>(tau1)));
    }
  }
  Tensor loss = sum(stack_scalars(terms));
  if (mean_reduce) loss = scale(loss, real(1) / static_cast<real>(terms.size()));
  return loss;
}

Tensor token_similarity(const Tensor& video_tokens, const Tensor& token_emb) {
  return max_dot(video_tokens, token_emb);
}

Tensor token_loss(const std::vector<Tensor>& video_tokens, const std::vector<Tensor>& text_tokens,
                  const std::vector<ToiWeights>& toi, double tau2, bool symmetric,
                  bool mean_reduce) {
  const int K = static_cast<int>(video_tokens.size());
  if (K < 2) throw DimensionError("token_loss: batch size must be at least 2");
  if (static_cast<int>(text_tokens.size()) != K || static_cast<int>(toi.size()) != K)
    throw DimensionError("token_loss: per-record inputs must have equal length");

  std::vector<Tensor> terms;
  for (int i = 0; i < K; ++i) {
    for (size_t t = 0; t < toi[static_cast<size_t>(i)].size(); ++t) {
      const int pos = toi[static_cast<size_t>(i)].positions[t];
      const double weight = toi[static_cast<size_t>(i)].weights[t];
      Tensor y_p = row(text_tokens[static_cast<size_t>(i)], AlignmentModel::text_row(pos));
      std::vector<Tensor> scores;
      scores.reserve(static_cast<size_t>(K));
      for (int j = 0; j < K; ++j) scores.push_back(max_dot(video_tokens[static_cast<size_t>(j)], y_p));
      Tensor term = nce_from_scores(stack_scalars(scores), i, static_cast<real>(tau2));
      terms.push_back(scale(term, static_cast<real>(weight)));
    }
  }

  if (symmetric) {
    // Video-anchored direction: each token contrasts against every token of
    // interest in the batch with its own video held fixed.
    struct Entry {
      int i;
      int pos;
      double weight;
    };
    std::vector<Entry> entries;
    for (int i = 0; i < K; ++i)
      for (size_t t = 0; t < toi[static_cast<size_t>(i)].size(); ++t)
        entries.push_back({i, toi[static_cast<size_t>(i)].positions[t],
                           toi[static_cast<size_t>(i)].weights[t]});
    for (size_t e = 0; e < entries.size(); ++e) {
      const Entry& anchor = entries[e];
      std::vector<Tensor> scores;
      scores.reserve(entries.size());
      for (const Entry& cand : entries) {
        Tensor y = row(text_tokens[static_cast<size_t>(cand.i)], AlignmentModel::text_row(cand.pos));
        scores.push_back(max_dot(video_tokens[static_cast<size_t>(anchor.i)], y));
      }
      if (scores.size() < 2) continue;
      Tensor term = nce_from_scores(stack_scalars(scores), static_cast<int>(e), static_cast<real>(tau2));
      terms.push_back(scale(term, static_cast<real>(anchor.weight)));
    }
  }

  if (terms.empty()) return Tensor::scalar(0);
  Tensor loss = sum(stack_scalars(terms));
  if (mean_reduce) loss = scale(loss, real(1) / static_cast<real>(K));
  return loss;
}

Tensor fusion_loss(const CascadeSelection& selection,
                   const std::map<std::pair<int, int>, Tensor>& fused_cls, const Tensor& head_w,
                   const Tensor& head_b, bool mean_reduce) {
  const int K = selection.batch_size();
  if (K < 2) throw DimensionError("fusion_loss: batch size must be at least 2");
  if (static_cast<int>(selection.video_anchor_negs.size()) != K)
    throw DimensionError("fusion_loss: selection sides disagree on K");

  auto fused_at = [&](int j, int i) -> const Tensor& {
    const auto it = fused_cls.find({j, i});
    if (it == fused_cls.end())
      throw InternalError("fusion_loss: missing fused output for pair (" + std::to_string(j) +
                          ", " + std::to_string(i) + ")");
    return it->second;
  };
  auto pair_score = [&](int j, int i) { return add(dot(head_w, fused_at(j, i)), head_b); };

  std::vector<Tensor> terms;
  for (int i = 0; i < K; ++i) {  // text anchors, video candidates
    std::vector<Tensor> scores;
    scores.push_back(pair_score(i, i));
    for (int j : selection.text_anchor_negs[static_cast<size_t>(i)]) scores.push_back(pair_score(j, i));
    terms.push_back(nce_from_scores(stack_scalars(scores), 0, real(1)));
  }
  for (int j = 0; j < K; ++j) {  // video anchors, text candidates
    std::vector<Tensor> scores;
    scores.push_back(pair_score(j, j));
    for (int i : selection.video_anchor_negs[static_cast<size_t>(j)]) scores.push_back(pair_score(j, i));
    terms.push_back(nce_from_scores(stack_scalars(scores), 0, real(1)));
  }
  Tensor loss = sum(stack_scalars(terms));
  if (mean_reduce) loss = scale(loss, real(1) / static_cast<real>(terms.size()));
  return loss;
}

Tensor total_objective(const Tensor& l1, const Tensor& l2, const Tensor& l3, double lambda_t) {
  return add(add(l1, scale(l2, static_cast<real>(lambda_t))), l3);
}

double total_objective(double l1, double l2, double l3, double lambda_t) {
  return l1 + lambda_t * l2 + l3;
}

}  // namespace cascalign
