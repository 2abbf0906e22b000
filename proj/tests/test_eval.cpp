#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cascalign/data.hpp"
#include "cascalign/encoders.hpp"
#include "cascalign/errors.hpp"
#include "cascalign/eval.hpp"
#include "cascalign/rng.hpp"
#include "oracles.hpp"

using namespace cascalign;

namespace {

std::vector<CorpusRecord> small_synthetic(int n, uint64_t seed) {
  SyntheticSpec spec;
  spec.num_pairs = n;
  spec.d_video_in = 6;
  spec.seed = seed;
  return generate_synthetic(spec);
}

AlignmentModel small_model(const std::vector<CorpusRecord>& corpus, uint64_t seed) {
  EncoderConfig cfg;
  cfg.d = 8;
  cfg.heads = 2;
  cfg.video_layers = 1;
  cfg.text_layers = 1;
  cfg.fusion_layers = 1;
  cfg.d_video_in = 6;
  cfg.m_max = 8;
  cfg.n_max = 10;
  cfg.ff_mult = 2;
  return AlignmentModel::init(cfg, Vocab::build(corpus), seed);
}

IdfTable idf_of(const std::vector<CorpusRecord>& corpus) {
  std::vector<std::vector<TaggedToken>> sentences;
  for (const auto& rec : corpus) sentences.push_back(rec.tokens);
  return IdfTable::compute(sentences);
}

}  // namespace

TEST_CASE("rank_metrics on hand matrices") {
  // strictly dominant diagonal
  std::vector<std::vector<double>> diag = {{9, 1, 1}, {0, 8, 2}, {1, 2, 7}};
  RetrievalMetrics m = rank_metrics(diag, {0, 1, 2}, {1, 5, 10});
  CHECK(m.recall_at[1] == doctest::Approx(1.0));
  CHECK(m.median_rank == doctest::Approx(1.0));

  // all scores equal, 10 candidates: pessimistic ties rank everyone last
  std::vector<std::vector<double>> flat(4, std::vector<double>(10, 0.5));
  RetrievalMetrics tied = rank_metrics(flat, {0, 3, 5, 9}, {1, 5, 10});
  for (int r : tied.ranks) CHECK(r == 10);
  CHECK(tied.recall_at[1] == doctest::Approx(0.0));
  CHECK(tied.recall_at[10] == doctest::Approx(1.0));
  CHECK(tied.median_rank == doctest::Approx(10.0));

  // median of an even count is the mean of the central pair
  std::vector<std::vector<double>> two = {{5, 1}, {5, 1}};
  RetrievalMetrics even = rank_metrics(two, {0, 1}, {1});
  CHECK(even.ranks[0] == 1);
  CHECK(even.ranks[1] == 2);
  CHECK(even.median_rank == doctest::Approx(1.5));

  CHECK_THROWS_AS(rank_metrics(two, {0, 7}, {1}), DataError);
}

TEST_CASE("rank_metrics matches the sort oracle on 500 random matrices") {
  Rng rng(51);
  for (int trial = 0; trial < 500; ++trial) {
    const int Q = 1 + static_cast<int>(rng.uniform_int(6));
    const int C = 2 + static_cast<int>(rng.uniform_int(9));
    std::vector<std::vector<double>> scores(static_cast<size_t>(Q), std::vector<double>(C));
    std::vector<int> gt(static_cast<size_t>(Q));
    for (int q = 0; q < Q; ++q) {
      for (int c = 0; c < C; ++c)
        scores[static_cast<size_t>(q)][static_cast<size_t>(c)] =
            (rng.uniform() < 0.25) ? 0.0 : rng.uniform(-2.0, 2.0);
      gt[static_cast<size_t>(q)] = static_cast<int>(rng.uniform_int(C));
    }
    RetrievalMetrics m = rank_metrics(scores, gt, {1, 5, 10});
    for (int q = 0; q < Q; ++q)
      CHECK(m.ranks[static_cast<size_t>(q)] ==
            oracles::rank_of(scores[static_cast<size_t>(q)], gt[static_cast<size_t>(q)]));
    // recall is nondecreasing in n and hits 1 at n = C
    CHECK(m.recall_at[1] <= m.recall_at[5]);
    CHECK(m.recall_at[5] <= m.recall_at[10]);
    RetrievalMetrics all = rank_metrics(scores, gt, {C});
    CHECK(all.recall_at[C] == doctest::Approx(1.0));
  }
}

TEST_CASE("ranks are invariant under strictly increasing score transforms") {
  Rng rng(52);
  std::vector<std::vector<double>> scores(5, std::vector<double>(7));
  for (auto& row : scores)
    for (auto& v : row) v = rng.uniform(-1.0, 1.0);
  std::vector<int> gt = {0, 1, 2, 3, 4};
  const RetrievalMetrics base = rank_metrics(scores, gt, {1, 5});
  auto transformed = scores;
  for (auto& row : transformed)
    for (auto& v : row) v = std::exp(2.0 * v) + 3.0;
  const RetrievalMetrics after = rank_metrics(transformed, gt, {1, 5});
  CHECK(base.ranks == after.ranks);
  CHECK(base.median_rank == after.median_rank);
}

TEST_CASE("score_pair stage masking and weights") {
  const auto corpus = small_synthetic(6, 61);
  AlignmentModel model = small_model(corpus, 62);
  const IdfTable idf = idf_of(corpus);

  const CorpusRecord& video = corpus[0];
  const CorpusRecord& text = corpus[1];

  // sentence-only masking equals the raw pooled dot product
  const double s_only =
      score_pair(video, text, model, idf, {1, 1, 1}, StageMask::only_sentence());
  const EncodedVideo ev = model.encode_video(video.features_tensor());
  const EncodedText et = model.encode_text(model.vocab.encode(text.tokens));
  double expected = 0;
  for (size_t c = 0; c < ev.mean.size(); ++c)
    expected += static_cast<double>(ev.mean.at(c)) * static_cast<double>(et.cls.at(c));
  CHECK(s_only == doctest::Approx(expected).epsilon(1e-12));

  // doubling all weights doubles the score
  const double full = score_pair(video, text, model, idf, {1, 1, 1});
  const double doubled = score_pair(video, text, model, idf, {2, 2, 2});
  CHECK(doubled == doctest::Approx(2.0 * full).epsilon(1e-10));

  // the three stages add up
  const double t_only = score_pair(video, text, model, idf, {1, 1, 1}, StageMask::only_token());
  const double f_only = score_pair(video, text, model, idf, {1, 1, 1}, StageMask::only_fusion());
  CHECK(full == doctest::Approx(s_only + t_only + f_only).epsilon(1e-10));

  InferenceWeights zero{0, 0, 0};
  CHECK_THROWS_AS(score_pair(video, text, model, idf, zero), ConfigError);
}

TEST_CASE("score_pair token stage matches a scalar recomputation") {
  const auto corpus = small_synthetic(4, 63);
  AlignmentModel model = small_model(corpus, 64);
  const IdfTable idf = idf_of(corpus);

  const CorpusRecord& video = corpus[2];
  const CorpusRecord& text = corpus[3];
  const double t_only = score_pair(video, text, model, idf, {1, 1, 1}, StageMask::only_token());

  const EncodedVideo ev = model.encode_video(video.features_tensor());
  const EncodedText et = model.encode_text(model.vocab.encode(text.tokens));
  const ToiWeights weights = sentence_weights(text.tokens, idf);
  std::vector<std::vector<double>> tokens;
  for (int r = 0; r < ev.tokens.dim(0); ++r) {
    std::vector<double> row;
    for (int c = 0; c < ev.tokens.dim(1); ++c) row.push_back(ev.tokens.at2(r, c));
    tokens.push_back(row);
  }
  double expected = 0;
  for (size_t p = 0; p < weights.size(); ++p) {
    std::vector<double> y;
    const int row = AlignmentModel::text_row(weights.positions[p]);
    for (int c = 0; c < et.tokens.dim(1); ++c) y.push_back(et.tokens.at2(row, c));
    expected += weights.weights[p] * oracles::max_dot(tokens, y);
  }
  CHECK(t_only == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("stage score matrices agree with per-pair scoring") {
  const auto corpus = small_synthetic(5, 65);
  AlignmentModel model = small_model(corpus, 66);
  const IdfTable idf = idf_of(corpus);

  const StageScoreMatrices stages = stage_score_matrices(corpus, corpus, model, idf, true);
  const auto combined = stages.combined({1, 0.5, 1}, StageMask::all());
  for (int q = 0; q < 5; ++q)
    for (int c = 0; c < 5; ++c) {
      const double direct = score_pair(corpus[static_cast<size_t>(c)], corpus[static_cast<size_t>(q)],
                                       model, idf, {1, 0.5, 1});
      CHECK(combined[static_cast<size_t>(q)][static_cast<size_t>(c)] ==
            doctest::Approx(direct).epsilon(1e-10));
    }

  // fusion stage requested without computed fusion scores
  const StageScoreMatrices no_fusion = stage_score_matrices(corpus, corpus, model, idf, false);
  CHECK_THROWS_AS(no_fusion.combined({1, 1, 1}, StageMask::all()), CheckpointError);
}
