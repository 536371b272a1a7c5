#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "simhand/loss.hpp"
#include "simhand/rng.hpp"

using namespace simhand;

namespace {

Eigen::MatrixXd random_features(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd z(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) z(i, j) = u(rng);
  return z;
}

// Literal-denominator reference: every k != i enters the denominator with the
// negative-matrix weight, the partner included.
double literal_reference(const Eigen::MatrixXd& z, const Eigen::VectorXd& w_pos,
                         const Eigen::MatrixXd& w_neg, double tau) {
  const int rows = static_cast<int>(z.rows());
  const int n = rows / 2;
  auto cosine = [&](int i, int j) {
    return z.row(i).dot(z.row(j)) / (z.row(i).norm() * z.row(j).norm());
  };
  double total = 0.0;
  for (int i = 0; i < rows; ++i) {
    const int p = i < n ? i + n : i - n;
    double denom = 0.0;
    for (int k = 0; k < rows; ++k)
      if (k != i) denom += std::exp(w_neg(i, k) * cosine(i, k) / tau);
    total += std::log(denom) - w_pos(i < n ? i : i - n) * cosine(i, p) / tau;
  }
  return total / rows;
}

}  // namespace

TEST_CASE("a single pair with no negatives scores exactly zero") {
  Eigen::MatrixXd z(2, 3);
  z << 0.3, -0.7, 0.2, 0.9, 0.1, -0.4;
  for (const auto mode : {DenominatorMode::kSimclr, DenominatorMode::kLiteral}) {
    const LossReport r = weighted_ntxent(z, adaptive_weights(z), 0.5, mode);
    CHECK(r.loss == 0.0);
    CHECK(r.per_anchor(0) == 0.0);
    CHECK(r.per_anchor(1) == 0.0);
    CHECK(r.grad.isZero(0.0));
    CHECK(r.mean_neg_sim == 0.0);
  }
  const LossReport u = weighted_ntxent(z, unit_weights(1), 0.5);
  CHECK(u.loss == 0.0);
}

TEST_CASE("unit weights reproduce the unweighted objective") {
  for (const int rows : {4, 8, 32}) {
    const Eigen::MatrixXd z = random_features(rows, 6, 100 + rows);
    const LossReport r = weighted_ntxent(z, unit_weights(rows / 2), 0.5);
    CHECK(r.loss == doctest::Approx(oracle::ntxent_reference(z, 0.5)).epsilon(1e-9));
    CHECK(r.per_anchor.size() == rows);
    CHECK(r.loss == doctest::Approx(r.per_anchor.mean()).epsilon(1e-12));
    for (int i = 0; i < rows; ++i) CHECK(r.per_anchor(i) >= 0.0);
  }
}

TEST_CASE("orthogonal pairs with perfect positives match the closed form") {
  // Two pairs on orthogonal axes, each view identical to its partner:
  // sim(i, partner) = 1, all other sims 0.
  Eigen::MatrixXd z(4, 2);
  z << 1, 0, 0, 1, 1, 0, 0, 1;
  const double tau = 0.5;
  const LossReport r = weighted_ntxent(z, unit_weights(2), tau);
  const double expect = std::log(std::exp(1.0 / tau) + 2.0) - 1.0 / tau;
  for (int i = 0; i < 4; ++i)
    CHECK(r.per_anchor(i) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(r.loss == doctest::Approx(expect).epsilon(1e-12));
  CHECK(r.mean_pos_sim == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.mean_neg_sim == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("weighted loss matches the formula-level reference") {
  Rng rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const int rows : {4, 8, 16}) {
    const Eigen::MatrixXd z = random_features(rows, 5, 200 + rows);
    PairWeights w = unit_weights(rows / 2);
    for (int i = 0; i < rows / 2; ++i) w.positive(i) = u(rng);
    for (int i = 0; i < rows; ++i)
      for (int k = 0; k < rows; ++k)
        if (i != k) w.negative(i, k) = u(rng);
    const LossReport r = weighted_ntxent(z, w, 0.5);
    const double ref = oracle::weighted_ntxent_reference(z, w.positive, w.negative, 0.5);
    CHECK(r.loss == doctest::Approx(ref).epsilon(1e-9));

    const LossReport lit = weighted_ntxent(z, w, 0.5, DenominatorMode::kLiteral);
    CHECK(lit.loss ==
          doctest::Approx(literal_reference(z, w.positive, w.negative, 0.5)).epsilon(1e-9));
  }
}

TEST_CASE("pair distances 2,4,6 produce weights 1, 0.5, 0") {
  // Pairs sit on the x axis, far apart so the negative pool stays separate.
  Eigen::MatrixXd z(6, 2);
  z << 0, 0, 100, 0, 200, 0,  // anchors
      2, 0, 104, 0, 206, 0;   // partners at distances 2, 4, 6
  const PairWeights w = adaptive_weights(z);
  CHECK(!w.positive_degenerate);
  CHECK(w.positive(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w.positive(1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(w.positive(2) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("adaptive weights match the scalar reference bit for bit") {
  for (const int rows : {4, 10, 16}) {
    const Eigen::MatrixXd z = random_features(rows, 14, 300 + rows);
    const PairWeights got = adaptive_weights(z);
    const oracle::WeightsResult ref = oracle::adaptive_weights_reference(z);
    for (int i = 0; i < rows / 2; ++i) CHECK(got.positive(i) == ref.positive(i));
    for (int i = 0; i < rows; ++i)
      for (int k = 0; k < rows; ++k)
        if (i != k) CHECK(got.negative(i, k) == ref.negative(i, k));
  }
}

TEST_CASE("adaptive weights live in [0,1] with both extremes present") {
  const Eigen::MatrixXd z = random_features(12, 4, 9);
  const PairWeights w = adaptive_weights(z);
  double pmin = 1e9, pmax = -1e9;
  for (int i = 0; i < 6; ++i) {
    CHECK(w.positive(i) >= 0.0);
    CHECK(w.positive(i) <= 1.0);
    pmin = std::min(pmin, w.positive(i));
    pmax = std::max(pmax, w.positive(i));
  }
  CHECK(pmin == doctest::Approx(0.0).epsilon(1e-12));  // farthest pair
  CHECK(pmax == doctest::Approx(1.0).epsilon(1e-12));  // closest pair
  // Closer samples get larger weights: monotone in distance by construction.
}

TEST_CASE("degenerate pools fall back to all-ones") {
  // All pair distances equal -> positive pool collapses.
  Eigen::MatrixXd z(4, 2);
  z << 0, 0, 10, 0, 1, 0, 11, 0;  // both pairs at distance 1
  const PairWeights w = adaptive_weights(z);
  CHECK(w.positive_degenerate);
  CHECK(w.positive(0) == 1.0);
  CHECK(w.positive(1) == 1.0);

  // All rows identical -> every distance is zero, both pools collapse.
  Eigen::MatrixXd same = Eigen::MatrixXd::Ones(4, 3);
  const PairWeights ws = adaptive_weights(same);
  CHECK(ws.positive_degenerate);
  CHECK(ws.negative_degenerate);
  CHECK(ws.negative(0, 1) == 1.0);
  CHECK(ws.negative(0, 2) == 1.0);
}

TEST_CASE("partner cells of the negative matrix are clamped to [0,1]") {
  // Make one pair much closer than every cross-pair distance so its raw
  // negative-pool normalization exceeds 1 before clamping.
  Eigen::MatrixXd z(4, 1);
  z << 0.0, 50.0, 0.001, 57.0;
  const PairWeights w = adaptive_weights(z);
  CHECK(w.negative(0, 2) >= 0.0);
  CHECK(w.negative(0, 2) <= 1.0);
  CHECK(w.negative(2, 0) == w.negative(0, 2));
}

TEST_CASE("loss is invariant to feature scaling") {
  const Eigen::MatrixXd z = random_features(8, 5, 17);
  const LossReport a = weighted_ntxent(z, adaptive_weights(z), 0.5);
  const Eigen::MatrixXd z3 = 3.0 * z;
  const LossReport b = weighted_ntxent(z3, adaptive_weights(z3), 0.5);
  CHECK(std::abs(a.loss - b.loss) < 1e-9);
}

TEST_CASE("loss is invariant to pair reordering") {
  const int n = 5;
  const Eigen::MatrixXd z = random_features(2 * n, 4, 23);
  const PairWeights w = adaptive_weights(z);
  const LossReport a = weighted_ntxent(z, w, 0.5);

  std::vector<int> perm{3, 0, 4, 1, 2};
  Eigen::MatrixXd zp(2 * n, z.cols());
  for (int i = 0; i < n; ++i) {
    zp.row(i) = z.row(perm[i]);
    zp.row(i + n) = z.row(perm[i] + n);
  }
  const LossReport b = weighted_ntxent(zp, adaptive_weights(zp), 0.5);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
  CHECK(a.mean_pos_sim == doctest::Approx(b.mean_pos_sim).epsilon(1e-12));
  CHECK(a.mean_neg_sim == doctest::Approx(b.mean_neg_sim).epsilon(1e-12));
}

TEST_CASE("analytic gradient matches central finite differences") {
  for (const int rows : {4, 8, 16}) {
    const Eigen::MatrixXd z = random_features(rows, 4, 400 + rows);
    // Weights held fixed across the perturbation: the loss treats them as
    // constants, so the check must too.
    const PairWeights w = adaptive_weights(z);
    for (const auto mode : {DenominatorMode::kSimclr, DenominatorMode::kLiteral}) {
      const LossReport r = weighted_ntxent(z, w, 0.5, mode);
      const double h = 1e-6;
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < z.cols(); ++j) {
          Eigen::MatrixXd zp = z, zm = z;
          zp(i, j) += h;
          zm(i, j) -= h;
          const double fp = weighted_ntxent(zp, w, 0.5, mode).loss;
          const double fm = weighted_ntxent(zm, w, 0.5, mode).loss;
          const double fd = (fp - fm) / (2 * h);
          CHECK(std::abs(r.grad(i, j) - fd) <= 1e-6 + 1e-4 * std::abs(fd));
        }
      }
    }
  }
}

TEST_CASE("gradient descends the loss") {
  const Eigen::MatrixXd z = random_features(8, 4, 77);
  const PairWeights w = adaptive_weights(z);
  const LossReport r = weighted_ntxent(z, w, 0.5);
  const Eigen::MatrixXd z2 = z - 0.1 * r.grad;
  const LossReport r2 = weighted_ntxent(z2, w, 0.5);
  CHECK(r2.loss < r.loss);
}

TEST_CASE("invalid batches are rejected") {
  CHECK_THROWS(weighted_ntxent(random_features(3, 4, 1), unit_weights(1), 0.5));
  CHECK_THROWS(weighted_ntxent(random_features(4, 4, 1), unit_weights(2), 0.0));
  CHECK_THROWS(weighted_ntxent(random_features(4, 4, 1), unit_weights(3), 0.5));
  Eigen::MatrixXd z = random_features(4, 4, 2);
  z.row(2).setZero();
  CHECK_THROWS(weighted_ntxent(z, unit_weights(2), 0.5));
  CHECK_THROWS(adaptive_weights(random_features(5, 4, 3)));
}

TEST_CASE("temperature sharpens the objective") {
  // With a positive margin, smaller tau drives the loss toward zero faster
  // than larger tau; sanity-check the direction.
  Eigen::MatrixXd z(4, 2);
  z << 1, 0.1, 0.1, 1, 1, -0.1, -0.1, 1;
  const double hot = weighted_ntxent(z, unit_weights(2), 1.0).loss;
  const double cold = weighted_ntxent(z, unit_weights(2), 0.1).loss;
  CHECK(cold < hot);
}
