#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "cascalign/cascade.hpp"
#include "cascalign/errors.hpp"
#include "cascalign/ops.hpp"
#include "oracles.hpp"

using namespace cascalign;

namespace {

CombinedScoreMatrix random_scores(int K, Rng& rng, double tie_prob = 0.0) {
  CombinedScoreMatrix s;
  s.K = K;
  s.scores.resize(static_cast<size_t>(K) * K);
  for (auto& v : s.scores) v = (rng.uniform() < tie_prob) ? 1.0 : rng.uniform(-5.0, 5.0);
  return s;
}

EncodedBatch toy_batch(int K, int m, int n, int d, Rng& rng) {
  EncodedBatch batch;
  std::vector<Tensor> means, clses;
  for (int i = 0; i < K; ++i) {
    std::vector<real> x(static_cast<size_t>(m) * d), y(static_cast<size_t>(n) * d), mu(d), cls(d);
    for (real& v : x) v = static_cast<real>(rng.uniform(-1.0, 1.0));
    for (real& v : y) v = static_cast<real>(rng.uniform(-1.0, 1.0));
    for (real& v : mu) v = static_cast<real>(rng.uniform(-1.0, 1.0));
    for (real& v : cls) v = static_cast<real>(rng.uniform(-1.0, 1.0));
    batch.video_tokens.push_back(Tensor::from_data({m, d}, x));
    batch.text_tokens.push_back(Tensor::from_data({n, d}, y));
    means.push_back(Tensor::from_data({d}, mu));
    clses.push_back(Tensor::from_data({d}, cls));
  }
  batch.video_means = stack_rows(means);
  batch.text_cls = stack_rows(clses);
  return batch;
}

}  // namespace

TEST_CASE("combined scores reduce to the global dot matrix with empty TOI sets") {
  Rng rng(41);
  EncodedBatch batch = toy_batch(3, 2, 4, 3, rng);
  std::vector<ToiWeights> empty(3);
  const CombinedScoreMatrix s = combined_scores(batch, empty);
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) {
      double expected = 0;
      for (int c = 0; c < 3; ++c)
        expected += static_cast<double>(batch.video_means.at2(j, c)) *
                    static_cast<double>(batch.text_cls.at2(i, c));
      CHECK(s.at(j, i) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("combined scores match hand arithmetic on a K=2 instance") {
  EncodedBatch batch;
  // d=2; one video token per record, three text rows ([CLS] w [SEP])
  batch.video_tokens = {Tensor::from_data({1, 2}, {1, 0}), Tensor::from_data({1, 2}, {0, 1})};
  batch.text_tokens = {Tensor::from_data({3, 2}, {0, 0, 2, 1, 0, 0}),
                       Tensor::from_data({3, 2}, {0, 0, 1, 3, 0, 0})};
  batch.video_means = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  batch.text_cls = Tensor::from_data({2, 2}, {0.5, 0, 0, 0.5});
  std::vector<ToiWeights> toi(2);
  toi[0].positions = {0};  // text row 1
  toi[0].weights = {1.0};
  toi[1].positions = {0};
  toi[1].weights = {1.0};

  const CombinedScoreMatrix s = combined_scores(batch, toi);
  // S[0][0] = mean0·cls0 + max-dot(video0, y0^1) = 0.5 + 2
  CHECK(s.at(0, 0) == doctest::Approx(2.5).epsilon(1e-12));
  // S[1][0] = 0 + dot((0,1),(2,1)) = 1
  CHECK(s.at(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
  // S[0][1] = 0 + dot((1,0),(1,3)) = 1
  CHECK(s.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  // S[1][1] = 0.5 + dot((0,1),(1,3)) = 3.5
  CHECK(s.at(1, 1) == doctest::Approx(3.5).epsilon(1e-12));
  // not symmetric in general
  CHECK(s.at(0, 0) != s.at(1, 1));
}

TEST_CASE("idf-weighted cascade scores weight the token sum") {
  Rng rng(42);
  EncodedBatch batch = toy_batch(2, 2, 4, 3, rng);
  std::vector<ToiWeights> toi(2);
  toi[0].positions = {0, 1};
  toi[0].weights = {0.25, 0.75};
  toi[1].positions = {0};
  toi[1].weights = {1.0};
  const CombinedScoreMatrix unweighted = combined_scores(batch, toi, false);
  const CombinedScoreMatrix weighted = combined_scores(batch, toi, true);
  // recompute column 0 by hand from raw tensors
  for (int j = 0; j < 2; ++j) {
    double base = 0;
    for (int c = 0; c < 3; ++c)
      base += static_cast<double>(batch.video_means.at2(j, c)) *
              static_cast<double>(batch.text_cls.at2(0, c));
    double unw = base, wsum = base;
    for (size_t t = 0; t < toi[0].size(); ++t) {
      std::vector<std::vector<double>> rows;
      for (int r = 0; r < 2; ++r) {
        std::vector<double> row;
        for (int c = 0; c < 3; ++c) row.push_back(batch.video_tokens[static_cast<size_t>(j)].at2(r, c));
        rows.push_back(row);
      }
      std::vector<double> y;
      for (int c = 0; c < 3; ++c)
        y.push_back(batch.text_tokens[0].at2(AlignmentModel::text_row(toi[0].positions[t]), c));
      const double s = oracles::max_dot(rows, y);
      unw += s;
      wsum += toi[0].weights[t] * s;
    }
    CHECK(unweighted.at(j, 0) == doctest::Approx(unw).epsilon(1e-12));
    CHECK(weighted.at(j, 0) == doctest::Approx(wsum).epsilon(1e-12));
  }
}

TEST_CASE("cascade_select basics") {
  CombinedScoreMatrix s;
  s.K = 3;
  // column for text 0: scores by video = [anchor, 5, 2]
  s.scores = {9, 1, 1, 5, 9, 1, 2, 1, 9};
  const CascadeSelection sel = cascade_select(s, 1);
  CHECK(sel.text_anchor_negs[0] == std::vector<int>{1});

  CHECK_THROWS_AS(cascade_select(s, 3), ConfigError);
  CHECK_THROWS_AS(cascade_select(s, 0), ConfigError);
}

TEST_CASE("cascade_select equals the brute-force oracle on 200 random matrices") {
  Rng rng(43);
  for (int trial = 0; trial < 200; ++trial) {
    const int K = 2 + static_cast<int>(rng.uniform_int(7));
    const int k_prime = 1 + static_cast<int>(rng.uniform_int(K - 1));
    const CombinedScoreMatrix s = random_scores(K, rng, 0.15);
    const CascadeSelection sel = cascade_select(s, k_prime);
    for (int i = 0; i < K; ++i) {
      std::vector<double> column(static_cast<size_t>(K));
      for (int j = 0; j < K; ++j) column[static_cast<size_t>(j)] = s.at(j, i);
      CHECK(sel.text_anchor_negs[static_cast<size_t>(i)] == oracles::top_k(i, K, k_prime, column));
    }
    for (int j = 0; j < K; ++j) {
      std::vector<double> row(static_cast<size_t>(K));
      for (int i = 0; i < K; ++i) row[static_cast<size_t>(i)] = s.at(j, i);
      CHECK(sel.video_anchor_negs[static_cast<size_t>(j)] == oracles::top_k(j, K, k_prime, row));
    }
  }
}

TEST_CASE("selection invariants: no anchor, distinct, exhaustive case, shift invariance") {
  Rng rng(44);
  const CombinedScoreMatrix s = random_scores(5, rng);
  const CascadeSelection sel = cascade_select(s, 4);
  for (int i = 0; i < 5; ++i) {
    std::set<int> unique(sel.text_anchor_negs[static_cast<size_t>(i)].begin(),
                         sel.text_anchor_negs[static_cast<size_t>(i)].end());
    CHECK(unique.size() == 4);
    CHECK(unique.count(i) == 0);
  }
  // k' = K-1 selects every non-anchor index
  const CascadeSelection full = full_select(5);
  for (int i = 0; i < 5; ++i) {
    std::set<int> a(sel.text_anchor_negs[static_cast<size_t>(i)].begin(),
                    sel.text_anchor_negs[static_cast<size_t>(i)].end());
    std::set<int> b(full.text_anchor_negs[static_cast<size_t>(i)].begin(),
                    full.text_anchor_negs[static_cast<size_t>(i)].end());
    CHECK(a == b);
  }

  CombinedScoreMatrix shifted = s;
  for (auto& v : shifted.scores) v += 11.25;
  const CascadeSelection sel2 = cascade_select(shifted, 2);
  const CascadeSelection sel1 = cascade_select(s, 2);
  CHECK(sel1.text_anchor_negs == sel2.text_anchor_negs);
  CHECK(sel1.video_anchor_negs == sel2.video_anchor_negs);
}

TEST_CASE("selection monotonicity") {
  Rng rng(45);
  for (int trial = 0; trial < 50; ++trial) {
    const int K = 4;
    const int k_prime = 2;
    CombinedScoreMatrix s = random_scores(K, rng);
    const CascadeSelection before = cascade_select(s, k_prime);

    // raising a selected negative never evicts it
    const int anchor = static_cast<int>(rng.uniform_int(K));
    const int kept = before.text_anchor_negs[static_cast<size_t>(anchor)][0];
    s.at(kept, anchor) += 10.0;
    const CascadeSelection raised = cascade_select(s, k_prime);
    const auto& negs = raised.text_anchor_negs[static_cast<size_t>(anchor)];
    CHECK(std::find(negs.begin(), negs.end(), kept) != negs.end());

    // raising an unselected entry above the k'-th largest admits it
    int unselected = -1;
    for (int j = 0; j < K; ++j) {
      if (j == anchor) continue;
      const auto& cur = raised.text_anchor_negs[static_cast<size_t>(anchor)];
      if (std::find(cur.begin(), cur.end(), j) == cur.end()) unselected = j;
    }
    REQUIRE(unselected >= 0);
    s.at(unselected, anchor) += 100.0;
    const CascadeSelection admitted = cascade_select(s, k_prime);
    const auto& negs2 = admitted.text_anchor_negs[static_cast<size_t>(anchor)];
    CHECK(std::find(negs2.begin(), negs2.end(), unselected) != negs2.end());
  }
}

TEST_CASE("random_select: determinism, exhaustive case, and uniformity") {
  Rng a(7), b(7);
  const CascadeSelection s1 = random_select(4, 2, a);
  const CascadeSelection s2 = random_select(4, 2, b);
  CHECK(s1.text_anchor_negs == s2.text_anchor_negs);
  CHECK(s1.video_anchor_negs == s2.video_anchor_negs);

  Rng c(8);
  const CascadeSelection full = random_select(4, 3, c);
  for (int i = 0; i < 4; ++i) {
    std::set<int> got(full.text_anchor_negs[static_cast<size_t>(i)].begin(),
                      full.text_anchor_negs[static_cast<size_t>(i)].end());
    CHECK(got.size() == 3);
    CHECK(got.count(i) == 0);
  }

  // over 10,000 draws with K=4, k'=1, each negative appears with freq 1/3 ± 0.02
  Rng d(9);
  std::vector<std::vector<int>> counts(4, std::vector<int>(4, 0));
  const int draws = 10000;
  for (int t = 0; t < draws; ++t) {
    const CascadeSelection sel = random_select(4, 1, d);
    for (int i = 0; i < 4; ++i) counts[static_cast<size_t>(i)][static_cast<size_t>(sel.text_anchor_negs[static_cast<size_t>(i)][0])]++;
  }
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      if (j == i) {
        CHECK(counts[static_cast<size_t>(i)][static_cast<size_t>(j)] == 0);
      } else {
        const double freq = counts[static_cast<size_t>(i)][static_cast<size_t>(j)] / static_cast<double>(draws);
        CHECK(std::abs(freq - 1.0 / 3.0) < 0.02);
      }
    }
}

TEST_CASE("selected_pairs covers positives and negatives exactly once") {
  CascadeSelection sel;
  sel.text_anchor_negs = {{1, 2}, {0, 2}, {0, 1}};
  sel.video_anchor_negs = {{1, 2}, {0, 2}, {0, 1}};
  const auto pairs = selected_pairs(sel);
  std::set<std::pair<int, int>> set(pairs.begin(), pairs.end());
  CHECK(set.size() == pairs.size());
  for (int a = 0; a < 3; ++a) CHECK(set.count({a, a}) == 1);
  CHECK(set.count({1, 0}) == 1);
  CHECK(set.count({0, 1}) == 1);
}
