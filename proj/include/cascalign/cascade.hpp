#pragma once

#include <vector>

#include "cascalign/encoders.hpp"
#include "cascalign/losses.hpp"
#include "cascalign/rng.hpp"
#include "cascalign/toi.hpp"

namespace cascalign {

// Pre-fusion alignment scores: entry (j, i) scores video j against text i as
// the global dot product plus the aggregated token-of-interest similarities.
// Computed without gradient tracking; selection is a discrete choice.
struct CombinedScoreMatrix {
  int K = 0;
  std::vector<double> scores;  // row-major, scores[j*K + i]

  double at(int j, int i) const { return scores[static_cast<size_t>(j) * K + i]; }
  double& at(int j, int i) { return scores[static_cast<size_t>(j) * K + i]; }
};

// token_sum(j, i) = Σ_{p∈P_i} s(x_j, y_i^p), unweighted as written; the
// weighted variant multiplies each term by the sentence's normalized weights.
CombinedScoreMatrix combined_scores(const EncodedBatch& batch, const std::vector<ToiWeights>& toi,
                                    bool idf_weighted = false);

// Top k_prime negatives per anchor by combined score, ties broken by lower
// index. Column i serves text anchor i; row j serves video anchor j.
CascadeSelection cascade_select(const CombinedScoreMatrix& scores, int k_prime);

// Uniform seeded sampling without replacement from the K-1 non-anchor indices.
CascadeSelection random_select(int K, int k_prime, Rng& rng);

// Every non-anchor index, in index order (k_prime = K-1 baseline).
CascadeSelection full_select(int K);

// All (video, text) pairs the fusion stage needs for a selection, in a
// deterministic order and without duplicates.
std::vector<std::pair<int, int>> selected_pairs(const CascadeSelection& selection);

}  // namespace cascalign
