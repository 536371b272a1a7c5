#include "simhand/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace simhand {

namespace {

// Scalar accumulation in index order; the weight contract is bit-exact, so
// the distance computation must not depend on vectorization width.
double row_distance(const Eigen::MatrixXd& m, Eigen::Index a, Eigen::Index b) {
  double acc = 0.0;
  for (Eigen::Index d = 0; d < m.cols(); ++d) {
    const double diff = m(a, d) - m(b, d);
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

void check_batch_rows(Eigen::Index rows) {
  if (rows < 2 || rows % 2 != 0)
    throw std::invalid_argument("batch must hold 2N rows with N >= 1");
}

}  // namespace

PairWeights adaptive_weights(const Eigen::MatrixXd& embeddings) {
  const Eigen::Index rows = embeddings.rows();
  check_batch_rows(rows);
  const Eigen::Index n = rows / 2;

  Eigen::MatrixXd dist(rows, rows);
  dist.setZero();
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = i + 1; j < rows; ++j) {
      const double d = row_distance(embeddings, i, j);
      dist(i, j) = d;
      dist(j, i) = d;
    }

  auto partner = [n](Eigen::Index i) { return i < n ? i + n : i - n; };

  double pos_min = std::numeric_limits<double>::infinity();
  double pos_max = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = dist(i, i + n);
    pos_min = std::min(pos_min, d);
    pos_max = std::max(pos_max, d);
  }

  double neg_min = std::numeric_limits<double>::infinity();
  double neg_max = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < rows; ++k) {
      if (k == i || k == partner(i)) continue;
      const double d = dist(i, k);
      neg_min = std::min(neg_min, d);
      neg_max = std::max(neg_max, d);
    }

  PairWeights w;
  w.positive_degenerate = !(pos_max > pos_min);
  w.negative_degenerate = !(neg_max > neg_min);

  w.positive.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    w.positive(i) =
        w.positive_degenerate ? 1.0 : (pos_max - dist(i, i + n)) / (pos_max - pos_min);

  w.negative.resize(rows, rows);
  w.negative.setZero();
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < rows; ++k) {
      if (k == i) continue;
      if (k == partner(i)) {
        // Only the literal denominator reads this cell; the positive distance
        // usually sits below the negative pool, so clamp.
        w.negative(i, k) =
            w.negative_degenerate
                ? 1.0
                : std::clamp((neg_max - dist(i, k)) / (neg_max - neg_min), 0.0, 1.0);
      } else {
        w.negative(i, k) =
            w.negative_degenerate ? 1.0 : (neg_max - dist(i, k)) / (neg_max - neg_min);
      }
    }
  return w;
}

PairWeights unit_weights(int pairs) {
  if (pairs < 1) throw std::invalid_argument("need at least 1 pair");
  PairWeights w;
  w.positive = Eigen::VectorXd::Ones(pairs);
  w.negative = Eigen::MatrixXd::Ones(2 * pairs, 2 * pairs);
  w.negative.diagonal().setZero();
  w.positive_degenerate = true;
  w.negative_degenerate = true;
  return w;
}

LossReport weighted_ntxent(const Eigen::MatrixXd& z, const PairWeights& weights,
                           double tau, DenominatorMode mode) {
  const Eigen::Index rows = z.rows();
  check_batch_rows(rows);
  const Eigen::Index n = rows / 2;
  if (tau <= 0.0) throw std::invalid_argument("tau must be positive");
  if (weights.positive.size() != n || weights.negative.rows() != rows ||
      weights.negative.cols() != rows)
    throw std::invalid_argument("weight shapes do not match batch");

  Eigen::VectorXd norms(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    norms(i) = z.row(i).norm();
    if (!(norms(i) > 0.0))
      throw std::invalid_argument("zero-norm feature row in contrastive batch");
  }
  const Eigen::MatrixXd zn = norms.cwiseInverse().asDiagonal() * z;
  const Eigen::MatrixXd sim = zn * zn.transpose();

  auto partner = [n](Eigen::Index i) { return i < n ? i + n : i - n; };
  auto pos_weight = [&](Eigen::Index i) {
    return weights.positive(i < n ? i : i - n);
  };

  // Logits for the denominator of anchor i: logit(i,k) = w * sim / tau, with
  // the weight depending on mode for the partner column.
  Eigen::MatrixXd logits(rows, rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Eigen::Index p = partner(i);
    for (Eigen::Index k = 0; k < rows; ++k) {
      if (k == i) {
        logits(i, k) = 0.0;  // excluded everywhere
        continue;
      }
      const double w = (k == p && mode == DenominatorMode::kSimclr)
                           ? pos_weight(i)
                           : weights.negative(i, k);
      logits(i, k) = w * sim(i, k) / tau;
    }
  }

  LossReport report;
  report.per_anchor.resize(rows);
  // dL/dsim accumulated here; symmetrized before the chain rule.
  Eigen::MatrixXd dsim = Eigen::MatrixXd::Zero(rows, rows);

  for (Eigen::Index i = 0; i < rows; ++i) {
    const Eigen::Index p = partner(i);
    const double pos_logit = pos_weight(i) * sim(i, p) / tau;

    double max_logit = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < rows; ++k)
      if (k != i) max_logit = std::max(max_logit, logits(i, k));

    double denom = 0.0;
    for (Eigen::Index k = 0; k < rows; ++k)
      if (k != i) denom += std::exp(logits(i, k) - max_logit);
    const double lse = max_logit + std::log(denom);

    report.per_anchor(i) = lse - pos_logit;

    // Softmax responsibilities over the denominator set.
    for (Eigen::Index k = 0; k < rows; ++k) {
      if (k == i) continue;
      const double soft = std::exp(logits(i, k) - lse);
      const double w = (k == p && mode == DenominatorMode::kSimclr)
                           ? pos_weight(i)
                           : weights.negative(i, k);
      dsim(i, k) += soft * w / tau;
    }
    dsim(i, p) -= pos_weight(i) / tau;
  }

  report.loss = report.per_anchor.mean();
  dsim /= static_cast<double>(rows);

  // Chain rule through cosine similarity. With zn the normalized rows and
  // A = dsim + dsim^T (sim is symmetric):
  //   dL/dz_i = (A zn - diag(rowsum(A .* sim)) zn)_i / norm_i
  const Eigen::MatrixXd a = dsim + dsim.transpose();
  const Eigen::VectorXd diag = (a.array() * sim.array()).rowwise().sum();
  report.grad = norms.cwiseInverse().asDiagonal() * (a * zn - diag.asDiagonal() * zn);

  double pos_acc = 0.0, neg_acc = 0.0;
  std::size_t neg_count = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    pos_acc += sim(i, partner(i));
    for (Eigen::Index k = 0; k < rows; ++k) {
      if (k == i || k == partner(i)) continue;
      neg_acc += sim(i, k);
      ++neg_count;
    }
  }
  report.mean_pos_sim = pos_acc / static_cast<double>(rows);
  report.mean_neg_sim = neg_count ? neg_acc / static_cast<double>(neg_count) : 0.0;
  return report;
}

}  // namespace simhand
