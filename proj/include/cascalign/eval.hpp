#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "cascalign/data.hpp"
#include "cascalign/encoders.hpp"
#include "cascalign/toi.hpp"

namespace cascalign {

// Inference-time mixing weights for the three scoring functions.
struct InferenceWeights {
  double sentence = 1.0;
  double token = 1.0;
  double fusion = 1.0;

  void validate() const;
};

// Zeroes out any subset of the three stages (single-stage evaluations).
struct StageMask {
  bool sentence = true;
  bool token = true;
  bool fusion = true;

  static StageMask all() { return {}; }
  static StageMask only_sentence() { return {true, false, false}; }
  static StageMask only_token() { return {false, true, false}; }
  static StageMask only_fusion() { return {false, false, true}; }
};

struct RetrievalMetrics {
  std::map<int, double> recall_at;  // n -> fraction of queries with rank <= n
  double median_rank = 0;
  std::vector<int> ranks;  // per-query rank of the correct candidate
};

// Alignment score of one (video, text) pair:
//   w_s·(x̄·ȳ) + w_t·Σ_p weight_p·s(x, y^p) + w_f·(w·z_cls + bias)
// with masked stages skipped entirely.
double score_pair(const CorpusRecord& video, const CorpusRecord& text, const AlignmentModel& model,
                  const IdfTable& idf, const InferenceWeights& weights,
                  const StageMask& mask = StageMask::all(),
                  const std::set<std::string>& target_pos = kDefaultTargetPos);

// Raw per-stage score matrices over queries (texts) × candidates (videos).
// Encodings are computed once per record; entries match score_pair's stages.
struct StageScoreMatrices {
  int queries = 0;
  int candidates = 0;
  std::vector<double> sentence;  // row-major [Q×C]
  std::vector<double> token;
  std::vector<double> fusion;

  std::vector<std::vector<double>> combined(const InferenceWeights& weights,
                                            const StageMask& mask) const;
};

StageScoreMatrices stage_score_matrices(const std::vector<CorpusRecord>& videos,
                                        const std::vector<CorpusRecord>& texts,
                                        const AlignmentModel& model, const IdfTable& idf,
                                        bool need_fusion = true,
                                        const std::set<std::string>& target_pos = kDefaultTargetPos);

// rank_q = 1 + |{c != truth : score >= score_truth}| (ties count against the
// query). recall_at[n] is the fraction of ranks <= n; the median of an even
// rank count is the mean of the two central values.
RetrievalMetrics rank_metrics(const std::vector<std::vector<double>>& score_matrix,
                              const std::vector<int>& ground_truth, const std::vector<int>& ns);

}  // namespace cascalign
