#pragma once

#include <Eigen/Dense>

namespace simhand {

// Per-pair weights for the contrastive loss. Batches hold 2N rows where row i
// and row i+N are the two views of pair i.
struct PairWeights {
  Eigen::VectorXd positive;  // N entries, shared by both anchors of a pair
  Eigen::MatrixXd negative;  // 2N x 2N, entry (i,k) for anchor i vs sample k;
                             // diagonal unused
  bool positive_degenerate = false;  // pool had a single distance value
  bool negative_degenerate = false;
};

// Similarity-adaptive weights: w = (d_max - d) / (d_max - d_min), computed
// over Euclidean distances between rows of `embeddings` (2N x D). The
// positive pool ranges over the N partner distances, the negative pool over
// every ordered anchor/non-partner pair. A pool whose min equals its max
// yields all-ones weights. Partner cells of the negative matrix carry the
// negative-pool normalization of the positive distance, clamped to [0,1]
// (used only by the literal denominator mode).
PairWeights adaptive_weights(const Eigen::MatrixXd& embeddings);

// All-ones weights of the same shape; running the loss with these reproduces
// the unweighted objective bit for bit.
PairWeights unit_weights(int pairs);

// How the softmax denominator treats the partner term.
//   kSimclr: denominator = positive term (with its positive weight) plus all
//            weighted negatives; per-anchor loss is then >= 0.
//   kLiteral: denominator sums over every k != i, the partner entering with
//             its clamped negative-pool weight.
enum class DenominatorMode { kSimclr, kLiteral };

struct LossReport {
  double loss = 0.0;             // mean over the 2N anchors
  Eigen::VectorXd per_anchor;    // 2N
  Eigen::MatrixXd grad;          // d(loss)/dz, 2N x P
  double mean_pos_sim = 0.0;     // mean cosine similarity to partners
  double mean_neg_sim = 0.0;     // mean cosine similarity to non-partners
};

// Weighted normalized-temperature cross entropy over cosine similarities.
// `z` is 2N x P with the i <-> i+N pairing; rows must be nonzero.
LossReport weighted_ntxent(const Eigen::MatrixXd& z, const PairWeights& weights,
                           double tau, DenominatorMode mode = DenominatorMode::kSimclr);

}  // namespace simhand
