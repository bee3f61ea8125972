#include <doctest.h>

#include <cmath>

#include "capkit/simcore.hpp"

#include "oracles.hpp"
#include "synthetic.hpp"

using namespace capkit;

TEST_CASE("cosine basics") {
  Vec e0 = Vec::Zero(2), e1 = Vec::Zero(2);
  e0(0) = 1.0;
  e1(1) = 1.0;
  CHECK(cosine(e0, e0) == doctest::Approx(1.0));
  CHECK(cosine(e0, e1) == doctest::Approx(0.0));

  synthetic::Synth synth(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec u = synth.unit_vector(8);
    const Vec v = synth.unit_vector(8);
    double dot = 0.0;
    for (Index i = 0; i < 8; ++i) dot += u(i) * v(i);
    CHECK(cosine(u, v) == doctest::Approx(dot).epsilon(1e-12));
  }

  CHECK_THROWS_AS(cosine(Vec::Zero(3), e0.segment(0, 2)), std::invalid_argument);
  CHECK_THROWS_AS(cosine(Vec::Zero(2), e0), std::invalid_argument);
}

TEST_CASE("pairwise_similarity matches the double-loop oracle") {
  synthetic::Synth synth(13);

  SUBCASE("orthonormal rows give the identity") {
    const Mat eye = Mat::Identity(3, 3);
    const SimilarityMatrix sim = pairwise_similarity(eye, eye);
    CHECK((sim.values - Mat::Identity(3, 3)).norm() == doctest::Approx(0.0));
    CHECK(sim.tau == doctest::Approx(kDefaultTemperature));
  }

  SUBCASE("B=1 reduces to cosine") {
    const Mat a = synth.unit_rows(1, 5);
    const Mat b = synth.unit_rows(1, 5);
    const SimilarityMatrix sim = pairwise_similarity(a, b);
    CHECK(sim.values(0, 0) == doctest::Approx(cosine(a.row(0), b.row(0))).epsilon(1e-14));
  }

  SUBCASE("random batch") {
    const Mat images = synth.unit_rows(4, 8);
    const Mat texts = synth.unit_rows(4, 8);
    const SimilarityMatrix sim = pairwise_similarity(images, texts);
    for (Index a = 0; a < 4; ++a)
      for (Index b = 0; b < 4; ++b)
        CHECK(sim.values(a, b) ==
              doctest::Approx(cosine(images.row(a), texts.row(b))).epsilon(1e-12));
  }

  SUBCASE("shape errors") {
    CHECK_THROWS_AS(pairwise_similarity(synth.unit_rows(2, 3), synth.unit_rows(2, 4)),
                    std::invalid_argument);
    CHECK_THROWS_AS(pairwise_similarity(synth.unit_rows(2, 3), synth.unit_rows(3, 3)),
                    std::invalid_argument);
  }
}

TEST_CASE("itc_loss closed-form cases") {
  SUBCASE("B=1 with a one-hot target is exactly zero") {
    SimilarityMatrix sim{Mat::Constant(1, 1, 0.37), 0.07};
    const ItcResult r = itc_loss(sim, one_hot_targets(1), one_hot_targets(1));
    CHECK(r.loss == doctest::Approx(0.0));
    CHECK(r.p_i2t(0, 0) == doctest::Approx(1.0));
  }

  SUBCASE("uniform 2x2 gives ln 2") {
    SimilarityMatrix sim{Mat::Constant(2, 2, 0.3), 0.07};
    const ItcResult r = itc_loss(sim, one_hot_targets(2), one_hot_targets(2));
    CHECK(std::abs(r.loss - std::log(2.0)) < 1e-12);
  }
}

TEST_CASE("itc_loss agrees with the independent softmax+CE oracle") {
  synthetic::Synth synth(17);
  for (int trial = 0; trial < 60; ++trial) {
    const Index b = std::vector<Index>{2, 4, 8}[static_cast<std::size_t>(trial % 3)];
    SimilarityMatrix sim{synth.matrix(b, b, -1.0, 1.0), 0.07};
    const Mat y_i2t = trial % 2 ? synth.row_stochastic(b) : one_hot_targets(b);
    const Mat y_t2i = trial % 2 ? synth.row_stochastic(b) : one_hot_targets(b);
    const ItcResult r = itc_loss(sim, y_i2t, y_t2i);
    CHECK(std::abs(r.loss - oracle::itc_loss(sim.values, sim.tau, y_i2t, y_t2i)) < 1e-10);
    for (Index a = 0; a < b; ++a) {
      CHECK(std::abs(r.p_i2t.row(a).sum() - 1.0) < 1e-9);
      CHECK(std::abs(r.p_t2i.row(a).sum() - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("itc_loss is invariant to shifting all logits by a constant") {
  synthetic::Synth synth(19);
  const Mat base = synth.matrix(4, 4, -1.0, 1.0);
  const Mat targets = synth.row_stochastic(4);
  const ItcResult plain = itc_loss({base, 0.07}, targets, targets);
  const Mat lifted = base.array() + 5.0;
  const ItcResult shifted = itc_loss({lifted, 0.07}, targets, targets);
  CHECK(std::abs(plain.loss - shifted.loss) < 1e-9);
}

TEST_CASE("increasing a diagonal entry never increases the one-hot loss") {
  synthetic::Synth synth(23);
  for (int trial = 0; trial < 50; ++trial) {
    const Index b = 2 + trial % 5;
    Mat values = synth.matrix(b, b, -1.0, 1.0);
    const Mat eye = one_hot_targets(b);
    const double before = itc_loss({values, 0.07}, eye, eye).loss;
    const Index a = synth.uniform_int(0, static_cast<int>(b) - 1);
    values(a, a) += 0.1;
    const double after = itc_loss({values, 0.07}, eye, eye).loss;
    CHECK(after <= before + 1e-12);
  }
}

TEST_CASE("itc_loss input validation") {
  synthetic::Synth synth(29);
  const Mat rect = synth.matrix(2, 3, -1.0, 1.0);
  CHECK_THROWS_AS(itc_loss({rect, 0.07}, one_hot_targets(2), one_hot_targets(2)),
                  std::invalid_argument);

  Mat bad = one_hot_targets(2);
  bad(0, 0) = 0.9; // row no longer sums to 1
  const SimilarityMatrix sim{synth.matrix(2, 2, -1.0, 1.0), 0.07};
  CHECK_THROWS_AS(itc_loss(sim, bad, one_hot_targets(2)), std::invalid_argument);
  CHECK_THROWS_AS(itc_loss(sim, one_hot_targets(3), one_hot_targets(3)), std::invalid_argument);
  CHECK_THROWS_AS(itc_loss({sim.values, -0.1}, one_hot_targets(2), one_hot_targets(2)),
                  std::invalid_argument);
}

TEST_CASE("itc_loss_grad closed-form cases") {
  SUBCASE("B=1 gradient is zero") {
    const Mat g = itc_loss_grad({Mat::Constant(1, 1, 0.2), 0.07}, one_hot_targets(1),
                                one_hot_targets(1));
    CHECK(g(0, 0) == doctest::Approx(0.0));
  }

  SUBCASE("uniform 2x2 gradient has zero row and column sums") {
    const Mat g = itc_loss_grad({Mat::Constant(2, 2, 0.3), 0.07}, one_hot_targets(2),
                                one_hot_targets(2));
    CHECK(std::abs(g.rowwise().sum().sum()) < 1e-14);
    CHECK(std::abs(g.row(0).sum()) < 1e-14);
    CHECK(std::abs(g.col(0).sum()) < 1e-14);
    CHECK(g(0, 0) < 0.0); // pulling the diagonal up lowers the loss
  }
}

TEST_CASE("itc_loss_grad matches central finite differences") {
  synthetic::Synth synth(31);
  double worst = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    const Index b = std::vector<Index>{2, 4, 8}[static_cast<std::size_t>(trial % 3)];
    const Mat values = synth.matrix(b, b, -1.0, 1.0);
    const Mat y_i2t = trial % 2 ? synth.row_stochastic(b) : one_hot_targets(b);
    const Mat y_t2i = trial % 2 ? synth.row_stochastic(b) : one_hot_targets(b);
    const Mat analytic = itc_loss_grad({values, 0.07}, y_i2t, y_t2i);
    const Mat numeric = oracle::finite_difference_grad(
        [&](const Mat& m) { return itc_loss({m, 0.07}, y_i2t, y_t2i).loss; }, values, 1e-5);
    worst = std::max(worst, oracle::relative_grad_error(numeric, analytic));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("mix_pseudo_targets") {
  synthetic::Synth synth(37);
  const Mat onehot = one_hot_targets(3);
  const Mat momentum = synth.row_stochastic(3);

  CHECK((mix_pseudo_targets(onehot, momentum, 0.0) - onehot).norm() == doctest::Approx(0.0));
  CHECK((mix_pseudo_targets(onehot, momentum, 1.0) - momentum).norm() == doctest::Approx(0.0));

  const Mat mixed = mix_pseudo_targets(onehot, momentum, 0.4);
  for (Index a = 0; a < 3; ++a) CHECK(std::abs(mixed.row(a).sum() - 1.0) < 1e-12);

  CHECK_THROWS_AS(mix_pseudo_targets(onehot, momentum, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(mix_pseudo_targets(onehot, momentum, 1.1), std::invalid_argument);
  CHECK_THROWS_AS(mix_pseudo_targets(onehot, synth.row_stochastic(4), 0.4),
                  std::invalid_argument);
}

TEST_CASE("softmax_rows stays row-stochastic under extreme logits") {
  Mat logits(2, 3);
  logits << 1000.0, 999.0, -1000.0, -5.0, -5.0, -5.0;
  const Mat p = softmax_rows(logits);
  for (Index a = 0; a < 2; ++a) CHECK(std::abs(p.row(a).sum() - 1.0) < 1e-9);
  CHECK(p(0, 0) > p(0, 1));
  CHECK(p(1, 0) == doctest::Approx(1.0 / 3.0));
}
