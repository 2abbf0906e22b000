#include "cascalign/eval.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cascalign/errors.hpp"
#include "cascalign/ops.hpp"

namespace cascalign {

void InferenceWeights::validate() const {
  if (sentence < 0 || token < 0 || fusion < 0)
    throw ConfigError("inference weights must be nonnegative");
  if (sentence == 0 && token == 0 && fusion == 0)
    throw ConfigError("inference weights must not all be zero");
}

namespace {

double sentence_stage(const EncodedVideo& v, const EncodedText& t) {
  double s = 0;
  for (size_t c = 0; c < v.mean.size(); ++c)
    s += static_cast<double>(v.mean.at(c)) * static_cast<double>(t.cls.at(c));
  return s;
}

double token_stage(const EncodedVideo& v, const EncodedText& t, const ToiWeights& weights) {
  double s = 0;
  for (size_t p = 0; p < weights.size(); ++p) {
    const Tensor y = row(t.tokens, AlignmentModel::text_row(weights.positions[p]));
    s += weights.weights[p] * static_cast<double>(max_dot(v.tokens, y).item());
  }
  return s;
}

double fusion_stage(const EncodedVideo& v, const EncodedText& t, const AlignmentModel& model) {
  if (!model.params.has("head.w")) throw CheckpointError("fusion stage requested without a scoring head");
  const FusionOutput fused = model.fuse(v.tokens, t.tokens);
  double s = static_cast<double>(model.head_bias().item());
  const Tensor& w = model.head_weight();
  for (size_t c = 0; c < w.size(); ++c)
    s += static_cast<double>(w.at(c)) * static_cast<double>(fused.cls.at(c));
  return s;
}

}  // namespace

double score_pair(const CorpusRecord& video, const CorpusRecord& text, const AlignmentModel& model,
                  const IdfTable& idf, const InferenceWeights& weights, const StageMask& mask,
                  const std::set<std::string>& target_pos) {
  weights.validate();
  NoGradGuard guard;
  const EncodedVideo v = model.encode_video(video.features_tensor());
  const EncodedText t = model.encode_text(model.vocab.encode(text.tokens));
  double score = 0;
  if (mask.sentence) score += weights.sentence * sentence_stage(v, t);
  if (mask.token) score += weights.token * token_stage(v, t, sentence_weights(text.tokens, idf, target_pos));
  if (mask.fusion) score += weights.fusion * fusion_stage(v, t, model);
  return score;
}

std::vector<std::vector<double>> StageScoreMatrices::combined(const InferenceWeights& weights,
                                                              const StageMask& mask) const {
  weights.validate();
  std::vector<std::vector<double>> out(static_cast<size_t>(queries),
                                       std::vector<double>(static_cast<size_t>(candidates), 0.0));
  for (int q = 0; q < queries; ++q) {
    for (int c = 0; c < candidates; ++c) {
      const size_t idx = static_cast<size_t>(q) * candidates + c;
      double s = 0;
      if (mask.sentence) s += weights.sentence * sentence[idx];
      if (mask.token) s += weights.token * token[idx];
      if (mask.fusion) {
        if (fusion.empty())
          throw CheckpointError("fusion scores requested but not computed");
        s += weights.fusion * fusion[idx];
      }
      out[static_cast<size_t>(q)][static_cast<size_t>(c)] = s;
    }
  }
  return out;
}

StageScoreMatrices stage_score_matrices(const std::vector<CorpusRecord>& videos,
                                        const std::vector<CorpusRecord>& texts,
                                        const AlignmentModel& model, const IdfTable& idf,
                                        bool need_fusion, const std::set<std::string>& target_pos) {
  NoGradGuard guard;
  StageScoreMatrices out;
  out.queries = static_cast<int>(texts.size());
  out.candidates = static_cast<int>(videos.size());
  const size_t total = static_cast<size_t>(out.queries) * out.candidates;
  out.sentence.assign(total, 0.0);
  out.token.assign(total, 0.0);
  if (need_fusion) out.fusion.assign(total, 0.0);

  std::vector<EncodedVideo> evs;
  evs.reserve(videos.size());
  for (const auto& rec : videos) evs.push_back(model.encode_video(rec.features_tensor()));
  std::vector<EncodedText> ets;
  std::vector<ToiWeights> toi;
  ets.reserve(texts.size());
  for (const auto& rec : texts) {
    ets.push_back(model.encode_text(model.vocab.encode(rec.tokens)));
    toi.push_back(sentence_weights(rec.tokens, idf, target_pos));
  }

  for (int q = 0; q < out.queries; ++q) {
    for (int c = 0; c < out.candidates; ++c) {
      const size_t idx = static_cast<size_t>(q) * out.candidates + c;
      out.sentence[idx] = sentence_stage(evs[static_cast<size_t>(c)], ets[static_cast<size_t>(q)]);
      out.token[idx] =
          token_stage(evs[static_cast<size_t>(c)], ets[static_cast<size_t>(q)], toi[static_cast<size_t>(q)]);
      if (need_fusion)
        out.fusion[idx] =
            fusion_stage(evs[static_cast<size_t>(c)], ets[static_cast<size_t>(q)], model);
    }
  }
  return out;
}

RetrievalMetrics rank_metrics(const std::vector<std::vector<double>>& score_matrix,
                              const std::vector<int>& ground_truth, const std::vector<int>& ns) {
  const size_t Q = score_matrix.size();
  if (Q == 0) throw DataError("rank_metrics: empty score matrix");
  if (ground_truth.size() != Q)
    throw DataError("rank_metrics: ground truth size does not match query count");

  RetrievalMetrics metrics;
  metrics.ranks.reserve(Q);
  for (size_t q = 0; q < Q; ++q) {
    const auto& scores = score_matrix[q];
    const int truth = ground_truth[q];
    if (truth < 0 || truth >= static_cast<int>(scores.size()))
      throw DataError("rank_metrics: ground-truth index out of range at query " + std::to_string(q));
    const double s_true = scores[static_cast<size_t>(truth)];
    int rank = 1;
    for (size_t c = 0; c < scores.size(); ++c) {
      if (static_cast<int>(c) == truth) continue;
      if (scores[c] >= s_true) ++rank;  // pessimistic ties
    }
    metrics.ranks.push_back(rank);
  }

  for (int n : ns) {
    long hits = 0;
    for (int r : metrics.ranks) hits += (r <= n) ? 1 : 0;
    metrics.recall_at[n] = static_cast<double>(hits) / static_cast<double>(Q);
  }

  std::vector<int> sorted = metrics.ranks;
  std::sort(sorted.begin(), sorted.end());
  const size_t mid = sorted.size() / 2;
  metrics.median_rank = (sorted.size() % 2 == 1)
                            ? static_cast<double>(sorted[mid])
                            : 0.5 * (sorted[mid - 1] + sorted[mid]);
  return metrics;
}

}  // namespace cascalign
