#pragma once

// Independent reference implementations used to cross-check the library.
// Everything here is deliberately naive: plain loops, no shared code with
// the implementation under test beyond the standard library and Eigen
// containers as storage.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// ---- symmetric eigen decomposition (cyclic Jacobi) ----
// Returns eigenvalues descending with matching eigenvector columns.
struct EigenResult {
  std::vector<double> values;
  Eigen::MatrixXd vectors;  // column i pairs with values[i]
};

inline EigenResult jacobi_eigen(Eigen::MatrixXd a, int sweeps = 100) {
  const int n = static_cast<int>(a.rows());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-24) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](int x, int y) { return a(x, x) > a(y, y); });
  EigenResult out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (int i = 0; i < n; ++i) {
    out.values[i] = a(order[i], order[i]);
    out.vectors.col(i) = v.col(order[i]);
  }
  return out;
}

// ---- nearest neighbor over float rows ----
// Same arithmetic contract the mining module documents: squared distance as
// a double accumulation over float rows in coordinate order.
inline double squared_distance_f32(const float* a, const float* b, int dim) {
  double acc = 0.0;
  for (int d = 0; d < dim; ++d) {
    const double diff = static_cast<double>(a[d]) - static_cast<double>(b[d]);
    acc += diff * diff;
  }
  return acc;
}

// ---- unweighted NT-Xent ----
// Standard form: for each anchor i with partner p, denominator over all
// k != i. Returns the mean loss over all 2N anchors.
inline double ntxent_reference(const Eigen::MatrixXd& z, double tau) {
  const int rows = static_cast<int>(z.rows());
  const int n = rows / 2;
  auto cosine = [&](int i, int j) {
    double dot = 0, ni = 0, nj = 0;
    for (int d = 0; d < z.cols(); ++d) {
      dot += z(i, d) * z(j, d);
      ni += z(i, d) * z(i, d);
      nj += z(j, d) * z(j, d);
    }
    return dot / (std::sqrt(ni) * std::sqrt(nj));
  };
  double total = 0.0;
  for (int i = 0; i < rows; ++i) {
    const int p = i < n ? i + n : i - n;
    double denom = 0.0;
    for (int k = 0; k < rows; ++k)
      if (k != i) denom += std::exp(cosine(i, k) / tau);
    total += -std::log(std::exp(cosine(i, p) / tau) / denom);
  }
  return total / rows;
}

// ---- weighted loss, straight from the formula ----
// Denominator = weighted positive term + weighted negatives (the convention
// the library documents as its default).
inline double weighted_ntxent_reference(const Eigen::MatrixXd& z,
                                        const Eigen::VectorXd& w_pos,
                                        const Eigen::MatrixXd& w_neg, double tau) {
  const int rows = static_cast<int>(z.rows());
  const int n = rows / 2;
  auto cosine = [&](int i, int j) {
    double dot = 0, ni = 0, nj = 0;
    for (int d = 0; d < z.cols(); ++d) {
      dot += z(i, d) * z(j, d);
      ni += z(i, d) * z(i, d);
      nj += z(j, d) * z(j, d);
    }
    return dot / (std::sqrt(ni) * std::sqrt(nj));
  };
  double total = 0.0;
  for (int i = 0; i < rows; ++i) {
    const int p = i < n ? i + n : i - n;
    const double wp = w_pos(i < n ? i : i - n);
    const double num = std::exp(wp * cosine(i, p) / tau);
    double denom = num;
    for (int k = 0; k < rows; ++k) {
      if (k == i || k == p) continue;
      denom += std::exp(w_neg(i, k) * cosine(i, k) / tau);
    }
    total += -std::log(num / denom);
  }
  return total / rows;
}

// ---- adaptive weights, scalar per-pair evaluation ----
struct WeightsResult {
  Eigen::VectorXd positive;
  Eigen::MatrixXd negative;
};

inline WeightsResult adaptive_weights_reference(const Eigen::MatrixXd& k) {
  const int rows = static_cast<int>(k.rows());
  const int n = rows / 2;
  auto dist = [&](int i, int j) {
    double acc = 0;
    for (int d = 0; d < k.cols(); ++d) {
      const double diff = k(i, d) - k(j, d);
      acc += diff * diff;
    }
    return std::sqrt(acc);
  };
  double pmin = std::numeric_limits<double>::infinity(), pmax = -pmin;
  for (int i = 0; i < n; ++i) {
    const double d = dist(i, i + n);
    pmin = std::min(pmin, d);
    pmax = std::max(pmax, d);
  }
  double nmin = std::numeric_limits<double>::infinity(), nmax = -nmin;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < rows; ++j) {
      const int p = i < n ? i + n : i - n;
      if (j == i || j == p) continue;
      const double d = dist(i, j);
      nmin = std::min(nmin, d);
      nmax = std::max(nmax, d);
    }
  WeightsResult out;
  out.positive.resize(n);
  for (int i = 0; i < n; ++i)
    out.positive(i) = pmax > pmin ? (pmax - dist(i, i + n)) / (pmax - pmin) : 1.0;
  out.negative = Eigen::MatrixXd::Zero(rows, rows);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < rows; ++j) {
      const int p = i < n ? i + n : i - n;
      if (j == i) continue;
      double w = nmax > nmin ? (nmax - dist(i, j)) / (nmax - nmin) : 1.0;
      if (j == p) w = std::clamp(w, 0.0, 1.0);
      out.negative(i, j) = w;
    }
  return out;
}

// ---- pose metrics, double loops ----
inline double mpjpe_reference(const std::vector<std::array<double, 3>>& pred,
                              const std::vector<std::array<double, 3>>& gt) {
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dx = pred[i][0] - gt[i][0];
    const double dy = pred[i][1] - gt[i][1];
    const double dz = pred[i][2] - gt[i][2];
    acc += std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  return acc / static_cast<double>(pred.size());
}

inline double pck_auc_reference(const std::vector<double>& errors, double lo, double hi,
                                int steps) {
  const double dt = (hi - lo) / (steps - 1);
  std::vector<double> pck(steps);
  for (int s = 0; s < steps; ++s) {
    const double t = lo + s * dt;
    std::size_t hits = 0;
    for (double e : errors)
      if (e <= t) ++hits;
    pck[s] = static_cast<double>(hits) / static_cast<double>(errors.size());
  }
  double area = 0.0;
  for (int s = 1; s < steps; ++s) area += 0.5 * (pck[s - 1] + pck[s]) * dt;
  return area / (hi - lo);
}

}  // namespace oracle
