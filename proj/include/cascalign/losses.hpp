#pragma once

#include <map>
#include <utility>
#include <vector>

#include "cascalign/encoders.hpp"
#include "cascalign/tensor.hpp"
#include "cascalign/toi.hpp"

namespace cascalign {

struct LossConfig {
  double tau1 = 1.0;
  double tau2 = 1.0;
  double lambda_t = 0.5;
  int k_prime = 8;

  void validate(int batch_size) const;
};

struct LossBreakdown {
  double l1 = 0, l2 = 0, l3 = 0, total = 0;
};

// Per-anchor indices of selected negative partners for the fusion stage.
// Positives are implicit; list i never contains i itself.
struct CascadeSelection {
  std::vector<std::vector<int>> text_anchor_negs;   // per text: video indices
  std::vector<std::vector<int>> video_anchor_negs;  // per video: text indices
  int batch_size() const { return static_cast<int>(text_anchor_negs.size()); }
};

// Sentence-level NCE over pooled video means and text [CLS] embeddings: for
// each text anchor the denominator runs over all K videos, positive included.
Tensor sentence_loss(const Tensor& video_means, const Tensor& text_cls, double tau1,
                     bool symmetric = false, bool mean_reduce = false);

// Max over the video-token dot products with one token embedding.
Tensor token_similarity(const Tensor& video_tokens, const Tensor& token_emb);

// Token-level NCE anchored on each token of interest, weighted by the
// sentence's normalized idf weights. Sentences with no tokens of interest
// contribute zero.
Tensor token_loss(const std::vector<Tensor>& video_tokens, const std::vector<Tensor>& text_tokens,
                  const std::vector<ToiWeights>& toi, double tau2, bool symmetric = false,
                  bool mean_reduce = false);

// Post-fusion NCE over linear scores of fused [CLS] outputs, summed over the
// 2K anchors (text anchors against video negatives and vice versa).
// fused_cls maps (video index j, text index i) to the fused [CLS] vector.
Tensor fusion_loss(const CascadeSelection& selection,
                   const std::map<std::pair<int, int>, Tensor>& fused_cls, const Tensor& head_w,
                   const Tensor& head_b, bool mean_reduce = false);

Tensor total_objective(const Tensor& l1, const Tensor& l2, const Tensor& l3, double lambda_t);
double total_objective(double l1, double l2, double l3, double lambda_t);

}  // namespace cascalign
