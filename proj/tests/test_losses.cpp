#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "cascalign/errors.hpp"
#include "cascalign/losses.hpp"
#include "cascalign/ops.hpp"
#include "cascalign/rng.hpp"
#include "oracles.hpp"

using namespace cascalign;

namespace {

Tensor random_matrix(int rows, int cols, Rng& rng, double scale = 1.0) {
  std::vector<real> data(static_cast<size_t>(rows) * cols);
  for (real& v : data) v = static_cast<real>(rng.uniform(-scale, scale));
  return Tensor::from_data({rows, cols}, std::move(data));
}

std::vector<std::vector<double>> as_rows(const Tensor& t) {
  std::vector<std::vector<double>> out(static_cast<size_t>(t.dim(0)),
                                       std::vector<double>(static_cast<size_t>(t.dim(1))));
  for (int r = 0; r < t.dim(0); ++r)
    for (int c = 0; c < t.dim(1); ++c) out[static_cast<size_t>(r)][static_cast<size_t>(c)] = t.at2(r, c);
  return out;
}

}  // namespace

TEST_CASE("sentence loss closed forms") {
  // all pairwise dots equal (zero vectors): per anchor ln K
  Tensor zeros = Tensor::zeros({2, 3});
  CHECK(static_cast<double>(sentence_loss(zeros, zeros, 1.0).item()) ==
        doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));

  Tensor zeros4 = Tensor::zeros({4, 3});
  CHECK(static_cast<double>(sentence_loss(zeros4, zeros4, 1.0).item()) ==
        doctest::Approx(4.0 * std::log(4.0)).epsilon(1e-12));

  // K=2 hand case: diagonal dots 2, off-diagonal 0 -> 2 log(1 + e^-2)
  Tensor x = Tensor::from_data({2, 2}, {std::sqrt(real(2)), 0, 0, std::sqrt(real(2))});
  CHECK(static_cast<double>(sentence_loss(x, x, 1.0).item()) ==
        doctest::Approx(2.0 * std::log(1.0 + std::exp(-2.0))).epsilon(1e-12));

  CHECK_THROWS_AS(sentence_loss(Tensor::zeros({1, 3}), Tensor::zeros({1, 3}), 1.0),
                  DimensionError);
}

TEST_CASE("sentence loss is invariant to a constant added to every dot product") {
  // adding c to every entry of the score matrix is realized by appending a
  // shared coordinate: x' = [x, sqrt(c)], y' = [y, sqrt(c)]
  Rng rng(31);
  Tensor x = random_matrix(3, 4, rng);
  Tensor y = random_matrix(3, 4, rng);
  const double base = static_cast<double>(sentence_loss(x, y, 1.0).item());

  const real shift = std::sqrt(real(1.7));
  std::vector<real> xs, ys;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      xs.push_back(x.at2(r, c));
      ys.push_back(y.at2(r, c));
    }
    xs.push_back(shift);
    ys.push_back(shift);
  }
  const double shifted = static_cast<double>(
      sentence_loss(Tensor::from_data({3, 5}, xs), Tensor::from_data({3, 5}, ys), 1.0).item());
  CHECK(shifted == doctest::Approx(base).epsilon(1e-10));
}

TEST_CASE("sentence loss matches the loop oracle on random batches") {
  Rng rng(32);
  for (int trial = 0; trial < 200; ++trial) {
    const int K = 2 + static_cast<int>(rng.uniform_int(4));
    const int d = 2 + static_cast<int>(rng.uniform_int(5));
    Tensor x = random_matrix(K, d, rng, 2.0);
    Tensor y = random_matrix(K, d, rng, 2.0);
    const double tau = 0.4 + rng.uniform();
    const double got = static_cast<double>(sentence_loss(x, y, tau).item());
    CHECK(got == doctest::Approx(oracles::sentence_loss(as_rows(x), as_rows(y), tau)).epsilon(1e-12));
    CHECK(got >= 0.0);
  }
}

TEST_CASE("token similarity cases") {
  Tensor v = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  CHECK(static_cast<double>(token_similarity(v, Tensor::from_data({2}, {0, 1})).item()) == 1.0);

  // constant rows: independent of m
  Tensor vc = Tensor::from_data({4, 2}, {2, 1, 2, 1, 2, 1, 2, 1});
  CHECK(static_cast<double>(token_similarity(vc, Tensor::from_data({2}, {1, 1})).item()) == 3.0);

  CHECK_THROWS_AS(token_similarity(Tensor::zeros({0, 2}), Tensor::zeros({2})), DimensionError);
}

TEST_CASE("token loss closed forms and empty-TOI behavior") {
  // identical video token sets across the batch -> all similarities equal ->
  // per token ln K; one token per sentence with weight 1
  Rng rng(33);
  Tensor shared = random_matrix(3, 4, rng);
  std::vector<Tensor> X = {shared, shared};
  std::vector<Tensor> Y = {random_matrix(4, 4, rng), random_matrix(4, 4, rng)};
  std::vector<ToiWeights> toi(2);
  toi[0].positions = {0};
  toi[0].weights = {1.0};
  toi[1].positions = {1};
  toi[1].weights = {1.0};
  CHECK(static_cast<double>(token_loss(X, Y, toi, 1.0).item()) ==
        doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));

  // two tokens with equal weights and identical terms -> sentence contributes
  // the shared term value
  std::vector<ToiWeights> toi_two(2);
  toi_two[0].positions = {0, 0};
  toi_two[0].weights = {0.5, 0.5};
  toi_two[1].positions = {1};
  toi_two[1].weights = {1.0};
  CHECK(static_cast<double>(token_loss(X, Y, toi_two, 1.0).item()) ==
        doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));

  // empty TOI set contributes zero
  std::vector<ToiWeights> empty_toi(2);
  CHECK(static_cast<double>(token_loss(X, Y, empty_toi, 1.0).item()) == 0.0);

  CHECK_THROWS_AS(token_loss({shared}, {Y[0]}, {toi[0]}, 1.0), DimensionError);
}

TEST_CASE("token loss matches the loop oracle on random instances") {
  Rng rng(34);
  for (int trial = 0; trial < 200; ++trial) {
    const int K = 2 + static_cast<int>(rng.uniform_int(4));
    const int d = 3;
    std::vector<Tensor> X, Y;
    std::vector<std::vector<std::vector<double>>> xraw, yraw;
    std::vector<std::vector<oracles::ToiEntry>> otoi(static_cast<size_t>(K));
    std::vector<ToiWeights> toi(static_cast<size_t>(K));
    for (int i = 0; i < K; ++i) {
      const int m = 1 + static_cast<int>(rng.uniform_int(4));
      const int n = 3 + static_cast<int>(rng.uniform_int(4));
      Tensor xt = random_matrix(m, d, rng, 2.0);
      Tensor yt = random_matrix(n, d, rng, 2.0);
      xraw.push_back(as_rows(xt));
      yraw.push_back(as_rows(yt));
      X.push_back(std::move(xt));
      Y.push_back(std::move(yt));
      const int count = static_cast<int>(rng.uniform_int(n - 2 + 1));
      double total = 0;
      for (int t = 0; t < count; ++t) {
        const double w = 0.2 + rng.uniform();
        toi[static_cast<size_t>(i)].positions.push_back(t);
        toi[static_cast<size_t>(i)].weights.push_back(w);
        total += w;
      }
      for (size_t t = 0; t < toi[static_cast<size_t>(i)].weights.size(); ++t) {
        toi[static_cast<size_t>(i)].weights[t] /= total;
        otoi[static_cast<size_t>(i)].push_back(
            {toi[static_cast<size_t>(i)].positions[t] + 1, toi[static_cast<size_t>(i)].weights[t]});
      }
    }
    const double tau = 0.4 + rng.uniform();
    const double got = static_cast<double>(token_loss(X, Y, toi, tau).item());
    const double expected = oracles::token_loss(xraw, yraw, otoi, tau);
    CHECK(got == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("fusion loss closed forms, saturation, and missing-pair detection") {
  // all head scores equal (w = 0): per anchor ln(k'+1)
  const int K = 3, d = 4;
  CascadeSelection sel;
  sel.text_anchor_negs = {{1}, {2}, {0}};
  sel.video_anchor_negs = {{2}, {0}, {1}};
  std::map<std::pair<int, int>, Tensor> fused;
  Rng rng(35);
  for (int j = 0; j < K; ++j)
    for (int i = 0; i < K; ++i) {
      std::vector<real> z(static_cast<size_t>(d));
      for (real& v : z) v = static_cast<real>(rng.uniform(-1.0, 1.0));
      fused.emplace(std::make_pair(j, i), Tensor::from_data({d}, z));
    }
  Tensor w0 = Tensor::zeros({d});
  Tensor b = Tensor::scalar(0.3);
  CHECK(static_cast<double>(fusion_loss(sel, fused, w0, b).item()) ==
        doctest::Approx(2.0 * K * std::log(2.0)).epsilon(1e-12));

  // the head bias cancels in the NCE ratio
  Rng rng2(36);
  std::vector<real> wv(static_cast<size_t>(d));
  for (real& v : wv) v = static_cast<real>(rng2.uniform(-1.0, 1.0));
  Tensor w = Tensor::from_data({d}, wv);
  const double with_bias = static_cast<double>(fusion_loss(sel, fused, w, Tensor::scalar(7.7)).item());
  const double no_bias = static_cast<double>(fusion_loss(sel, fused, w, Tensor::scalar(0)).item());
  CHECK(with_bias == doctest::Approx(no_bias).epsilon(1e-10));

  // positive score -> +inf drives the term to zero
  std::map<std::pair<int, int>, Tensor> saturated = fused;
  for (int a = 0; a < K; ++a) {
    std::vector<real> z(static_cast<size_t>(d), real(0));
    z[0] = real(60);  // w[0]=1 below
    saturated[{a, a}] = Tensor::from_data({d}, z);
  }
  std::vector<real> unit(static_cast<size_t>(d), real(0));
  unit[0] = 1;
  const double sat = static_cast<double>(
      fusion_loss(sel, saturated, Tensor::from_data({d}, unit), Tensor::scalar(0)).item());
  CHECK(sat < 1e-10);

  // missing fused output for a selected pair
  std::map<std::pair<int, int>, Tensor> incomplete = fused;
  incomplete.erase({1, 0});
  CHECK_THROWS_AS(fusion_loss(sel, incomplete, w, b), InternalError);
}

TEST_CASE("fusion loss matches a scalar loop oracle on random instances") {
  Rng rng(37);
  for (int trial = 0; trial < 200; ++trial) {
    const int K = 2 + static_cast<int>(rng.uniform_int(3));
    const int k_prime = 1 + static_cast<int>(rng.uniform_int(K - 1));
    const int d = 3;
    CascadeSelection sel;
    for (int a = 0; a < K; ++a) {
      sel.text_anchor_negs.push_back(rng.sample_without_replacement(K, k_prime));
      sel.video_anchor_negs.push_back(rng.sample_without_replacement(K, k_prime));
      // remap to exclude the anchor
      for (int& v : sel.text_anchor_negs.back())
        if (v == a) v = (a + 1) % K;
      for (int& v : sel.video_anchor_negs.back())
        if (v == a) v = (a + 1) % K;
      // de-duplicate after remap by regenerating when needed
      auto dedupe = [&](std::vector<int>& list) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
        while (static_cast<int>(list.size()) < k_prime) {
          int cand = static_cast<int>(rng.uniform_int(K));
          if (cand != a && std::find(list.begin(), list.end(), cand) == list.end())
            list.push_back(cand);
        }
      };
      dedupe(sel.text_anchor_negs.back());
      dedupe(sel.video_anchor_negs.back());
    }
    std::map<std::pair<int, int>, Tensor> fused;
    std::map<std::pair<int, int>, std::vector<double>> raw;
    for (int j = 0; j < K; ++j)
      for (int i = 0; i < K; ++i) {
        std::vector<real> z(static_cast<size_t>(d));
        std::vector<double> zr(static_cast<size_t>(d));
        for (int c = 0; c < d; ++c) {
          zr[static_cast<size_t>(c)] = rng.uniform(-2.0, 2.0);
          z[static_cast<size_t>(c)] = static_cast<real>(zr[static_cast<size_t>(c)]);
        }
        fused.emplace(std::make_pair(j, i), Tensor::from_data({d}, z));
        raw.emplace(std::make_pair(j, i), zr);
      }
    std::vector<double> wv(static_cast<size_t>(d));
    std::vector<real> wr(static_cast<size_t>(d));
    for (int c = 0; c < d; ++c) {
      wv[static_cast<size_t>(c)] = rng.uniform(-1.0, 1.0);
      wr[static_cast<size_t>(c)] = static_cast<real>(wv[static_cast<size_t>(c)]);
    }
    const double bias = rng.uniform(-1.0, 1.0);

    const double got = static_cast<double>(
        fusion_loss(sel, fused, Tensor::from_data({d}, wr), Tensor::scalar(static_cast<real>(bias)))
            .item());

    auto score = [&](int j, int i) { return oracles::dot(wv, raw.at({j, i})) + bias; };
    double expected = 0;
    for (int i = 0; i < K; ++i) {
      std::vector<double> scores = {score(i, i)};
      for (int j : sel.text_anchor_negs[static_cast<size_t>(i)]) scores.push_back(score(j, i));
      expected += oracles::nce_term(scores, 0, 1.0);
    }
    for (int j = 0; j < K; ++j) {
      std::vector<double> scores = {score(j, j)};
      for (int i : sel.video_anchor_negs[static_cast<size_t>(j)]) scores.push_back(score(j, i));
      expected += oracles::nce_term(scores, 0, 1.0);
    }
    CHECK(got == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("total objective arithmetic") {
  CHECK(total_objective(1.0, 2.0, 3.0, 0.5) == doctest::Approx(5.0));
  CHECK(total_objective(1.0, 2.0, 3.0, 0.0) == doctest::Approx(4.0));  // L1+L3 ablation
  CHECK(total_objective(0.0, 2.0, 0.0, 0.5) == doctest::Approx(1.0));
  Tensor t = total_objective(Tensor::scalar(1), Tensor::scalar(2), Tensor::scalar(3), 0.5);
  CHECK(static_cast<double>(t.item()) == doctest::Approx(5.0));
}

TEST_CASE("losses decrease when the positive score rises, all else fixed") {
  // L1 via direct score construction: bump the diagonal
  Tensor x = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor y = Tensor::from_data({2, 2}, {0.5, 0.1, 0.2, 0.7});
  const double before = static_cast<double>(sentence_loss(x, y, 1.0).item());
  Tensor y2 = Tensor::from_data({2, 2}, {0.9, 0.1, 0.2, 1.1});  // raises only diagonal dots
  const double after = static_cast<double>(sentence_loss(x, y2, 1.0).item());
  CHECK(after < before);
}

TEST_CASE("batch order invariance: permuting pairs leaves totals unchanged") {
  Rng rng(38);
  const int K = 4, d = 3;
  Tensor x = random_matrix(K, d, rng);
  Tensor y = random_matrix(K, d, rng);
  const double base = static_cast<double>(sentence_loss(x, y, 0.7).item());

  const std::vector<int> perm = {2, 0, 3, 1};
  std::vector<real> xp, yp;
  for (int i : perm)
    for (int c = 0; c < d; ++c) {
      xp.push_back(x.at2(i, c));
      yp.push_back(y.at2(i, c));
    }
  const double permuted = static_cast<double>(
      sentence_loss(Tensor::from_data({K, d}, xp), Tensor::from_data({K, d}, yp), 0.7).item());
  CHECK(permuted == doctest::Approx(base).epsilon(1e-10));
}

TEST_CASE("loss config validation") {
  LossConfig cfg;
  cfg.k_prime = 8;
  CHECK_THROWS_AS(cfg.validate(4), ConfigError);  // k' > K-1
  cfg.k_prime = 3;
  CHECK_NOTHROW(cfg.validate(4));
  cfg.tau1 = 0;
  CHECK_THROWS_AS(cfg.validate(4), ConfigError);
}

TEST_CASE("symmetric and mean-reduce variants stay finite and consistent") {
  Rng rng(39);
  Tensor x = random_matrix(3, 4, rng);
  Tensor y = random_matrix(3, 4, rng);
  const double sym = static_cast<double>(sentence_loss(x, y, 1.0, true).item());
  const double fwd = static_cast<double>(sentence_loss(x, y, 1.0, false).item());
  CHECK(sym > fwd);  // adds the video-anchored terms
  const double mean = static_cast<double>(sentence_loss(x, y, 1.0, false, true).item());
  CHECK(mean == doctest::Approx(fwd / 3.0).epsilon(1e-12));
}
