#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "simhand/types.hpp"

namespace simhand {

using FlatVector = Eigen::Matrix<double, kFlatDim, 1>;

/// [x1,y1,x2,y2,...] in fixed joint order.
FlatVector flatten(const std::array<Keypoint, kNumKeypoints>& keypoints);
FlatVector flatten(const KeypointRecord& record);
std::array<Keypoint, kNumKeypoints> unflatten(const FlatVector& v);

/// PCA projection of flattened keypoint vectors into a D-dimensional pose
/// embedding. Columns of `projection` are orthonormal principal directions,
/// variance-ordered, with the sign convention that each column's
/// largest-magnitude entry is positive.
struct PcaModel {
  int dim = 0;
  bool centered = true;
  Eigen::VectorXd mean;                // 42; zero when centered == false
  Eigen::MatrixXd projection;          // 42 x dim
  Eigen::VectorXd explained_variance;  // dim, non-increasing, >= 0
};

struct PcaFitOptions {
  bool center = true;
  /// When > 0, fit on a seeded uniform subsample of this many rows.
  std::size_t subsample = 0;
  std::uint64_t seed = 0;
};

struct PcaFitReport {
  int data_rank = 0;  // eigenvalues above tolerance
  bool rank_deficient = false;
};

/// Fits PCA on the rows of `vectors` (n x 42). Covariance is accumulated in
/// fixed-size shards reduced in a fixed tree order, so the result does not
/// depend on the thread count.
PcaModel fit_pca(const Eigen::MatrixXd& vectors, int dim,
                 const PcaFitOptions& options = {}, PcaFitReport* report = nullptr,
                 int threads = 0);

/// M^T (v - mean). Scalar accumulation order is fixed so embeddings are
/// byte-stable across thread counts.
Eigen::VectorXd project(const PcaModel& model, const FlatVector& v);

void save_model(const PcaModel& model, const std::filesystem::path& path);
PcaModel load_model(const std::filesystem::path& path);

struct RowMeta {
  std::string video_id;
  std::int64_t frame_id = 0;
};

struct EmbeddingStore {
  int dim = 0;
  std::vector<float> data;  // count x dim, row-major
  std::vector<RowMeta> meta;

  std::size_t count() const { return meta.size(); }
  const float* row(std::size_t i) const { return data.data() + i * static_cast<std::size_t>(dim); }
  float* row(std::size_t i) { return data.data() + i * static_cast<std::size_t>(dim); }
};

/// Projects every record; row order matches the record order.
EmbeddingStore embed_records(const RecordSet& set, const PcaModel& model, int threads = 0);

void save_cache(const EmbeddingStore& store, const std::filesystem::path& path);
EmbeddingStore load_cache(const std::filesystem::path& path);

}  // namespace simhand
