#include "simhand/embed.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "simhand/io.hpp"
#include "simhand/parallel.hpp"
#include "simhand/rng.hpp"

namespace simhand {

using nlohmann::json;

namespace {
constexpr std::size_t kShardRows = 8192;
constexpr char kCacheMagic[5] = "SIMH";
constexpr std::uint32_t kCacheVersion = 1;
}  // namespace

FlatVector flatten(const std::array<Keypoint, kNumKeypoints>& keypoints) {
  FlatVector v;
  for (int k = 0; k < kNumKeypoints; ++k) {
    v[2 * k] = keypoints[k].x;
    v[2 * k + 1] = keypoints[k].y;
  }
  return v;
}

FlatVector flatten(const KeypointRecord& record) { return flatten(record.keypoints); }

std::array<Keypoint, kNumKeypoints> unflatten(const FlatVector& v) {
  std::array<Keypoint, kNumKeypoints> kps;
  for (int k = 0; k < kNumKeypoints; ++k) {
    kps[k].x = v[2 * k];
    kps[k].y = v[2 * k + 1];
  }
  return kps;
}

namespace {

/// Reduces per-shard accumulators pairwise (stride doubling); the order is a
/// function of the shard count only.
template <typename T>
T tree_reduce(std::vector<T>& parts) {
  for (std::size_t stride = 1; stride < parts.size(); stride *= 2) {
    for (std::size_t i = 0; i + stride < parts.size(); i += 2 * stride) {
      parts[i] += parts[i + stride];
    }
  }
  return parts.empty() ? T{} : parts[0];
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& x, const PcaFitOptions& options) {
  if (options.subsample == 0 || options.subsample >= static_cast<std::size_t>(x.rows()))
    return x;
  std::vector<std::size_t> idx(static_cast<std::size_t>(x.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(options.seed, 0xf17));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(options.subsample);
  std::sort(idx.begin(), idx.end());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

}  // namespace

PcaModel fit_pca(const Eigen::MatrixXd& vectors, int dim, const PcaFitOptions& options,
                 PcaFitReport* report, int threads) {
  if (vectors.cols() != kFlatDim)
    throw std::invalid_argument("fit_pca expects 42 columns");
  if (dim < 1 || dim > kFlatDim)
    throw std::invalid_argument("dim must be in [1, 42]");

  const Eigen::MatrixXd x = select_rows(vectors, options);
  const std::size_t n = static_cast<std::size_t>(x.rows());
  if (n < static_cast<std::size_t>(dim))
    throw std::invalid_argument("need at least dim rows to fit");
  if (!x.allFinite()) throw std::invalid_argument("non-finite input to fit_pca");

  const std::size_t n_shards = (n + kShardRows - 1) / kShardRows;

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(kFlatDim);
  if (options.center) {
    std::vector<Eigen::VectorXd> sums(n_shards, Eigen::VectorXd::Zero(kFlatDim));
    parallel_chunks(n, kShardRows, threads, [&](std::size_t lo, std::size_t hi) {
      Eigen::VectorXd s = Eigen::VectorXd::Zero(kFlatDim);
      for (std::size_t r = lo; r < hi; ++r) s += x.row(static_cast<Eigen::Index>(r)).transpose();
      sums[lo / kShardRows] = std::move(s);
    });
    mean = tree_reduce(sums) / static_cast<double>(n);
  }

  std::vector<Eigen::MatrixXd> covs(n_shards, Eigen::MatrixXd::Zero(kFlatDim, kFlatDim));
  parallel_chunks(n, kShardRows, threads, [&](std::size_t lo, std::size_t hi) {
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(kFlatDim, kFlatDim);
    for (std::size_t r = lo; r < hi; ++r) {
      const Eigen::VectorXd d = x.row(static_cast<Eigen::Index>(r)).transpose() - mean;
      c.noalias() += d * d.transpose();
    }
    covs[lo / kShardRows] = std::move(c);
  });
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  const Eigen::MatrixXd cov = tree_reduce(covs) / denom;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("eigendecomposition failed");
  // Ascending eigenvalues from the solver; take the top `dim` in descending order.
  const Eigen::VectorXd evals = solver.eigenvalues();
  const Eigen::MatrixXd evecs = solver.eigenvectors();

  PcaModel model;
  model.dim = dim;
  model.centered = options.center;
  model.mean = mean;
  model.projection.resize(kFlatDim, dim);
  model.explained_variance.resize(dim);
  const double tol = std::max(evals.cwiseAbs().maxCoeff(), 1.0) * 1e-12;
  int rank = 0;
  for (int d = 0; d < dim; ++d) {
    const Eigen::Index src = static_cast<Eigen::Index>(kFlatDim - 1 - d);
    Eigen::VectorXd col = evecs.col(src);
    // Sign convention: the entry with the largest magnitude is positive.
    Eigen::Index imax = 0;
    col.cwiseAbs().maxCoeff(&imax);
    if (col[imax] < 0.0) col = -col;
    model.projection.col(d) = col;
    model.explained_variance[d] = std::max(evals[src], 0.0);
  }
  for (Eigen::Index i = 0; i < evals.size(); ++i) rank += evals[i] > tol ? 1 : 0;
  if (report) {
    report->data_rank = rank;
    report->rank_deficient = rank < dim;
  }
  return model;
}

Eigen::VectorXd project(const PcaModel& model, const FlatVector& v) {
  if (!v.allFinite()) throw std::invalid_argument("non-finite input to project");
  Eigen::VectorXd out(model.dim);
  for (int d = 0; d < model.dim; ++d) {
    double acc = 0.0;
    for (int j = 0; j < kFlatDim; ++j) {
      acc += model.projection(j, d) * (v[j] - model.mean[j]);
    }
    out[d] = acc;
  }
  return out;
}

void save_model(const PcaModel& model, const std::filesystem::path& path) {
  json j;
  j["dim"] = model.dim;
  j["centered"] = model.centered;
  j["mean"] = std::vector<double>(model.mean.data(), model.mean.data() + kFlatDim);
  json rows = json::array();
  for (int r = 0; r < kFlatDim; ++r) {
    json row = json::array();
    for (int d = 0; d < model.dim; ++d) row.push_back(model.projection(r, d));
    rows.push_back(std::move(row));
  }
  j["projection"] = std::move(rows);
  j["explained_variance"] = std::vector<double>(
      model.explained_variance.data(), model.explained_variance.data() + model.dim);
  write_text_file(path, j.dump(2) + "\n");
}

PcaModel load_model(const std::filesystem::path& path) {
  const json j = json::parse(read_text_file(path));
  PcaModel model;
  model.dim = j.at("dim").get<int>();
  if (model.dim < 1 || model.dim > kFlatDim)
    throw std::runtime_error("model file has invalid dim");
  model.centered = j.at("centered").get<bool>();
  const auto mean = j.at("mean").get<std::vector<double>>();
  if (mean.size() != kFlatDim) throw std::runtime_error("model file has invalid mean");
  model.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), kFlatDim);
  model.projection.resize(kFlatDim, model.dim);
  const auto& rows = j.at("projection");
  if (!rows.is_array() || rows.size() != kFlatDim)
    throw std::runtime_error("model file has invalid projection");
  for (int r = 0; r < kFlatDim; ++r) {
    const auto row = rows[r].get<std::vector<double>>();
    if (row.size() != static_cast<std::size_t>(model.dim))
      throw std::runtime_error("model file has invalid projection row");
    for (int d = 0; d < model.dim; ++d) model.projection(r, d) = row[d];
  }
  const auto ev = j.at("explained_variance").get<std::vector<double>>();
  if (ev.size() != static_cast<std::size_t>(model.dim))
    throw std::runtime_error("model file has invalid explained_variance");
  model.explained_variance = Eigen::Map<const Eigen::VectorXd>(ev.data(), model.dim);
  return model;
}

EmbeddingStore embed_records(const RecordSet& set, const PcaModel& model, int threads) {
  EmbeddingStore store;
  store.dim = model.dim;
  store.data.resize(set.size() * static_cast<std::size_t>(model.dim));
  store.meta.resize(set.size());
  parallel_chunks(set.size(), 1024, threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const Eigen::VectorXd p = project(model, flatten(set.records[i]));
      float* row = store.row(i);
      for (int d = 0; d < model.dim; ++d) row[d] = static_cast<float>(p[d]);
      store.meta[i] = {set.records[i].video_id, set.records[i].frame_id};
    }
  });
  return store;
}

void save_cache(const EmbeddingStore& store, const std::filesystem::path& path) {
  BinaryWriter w(path);
  w.magic(kCacheMagic);
  w.u32(kCacheVersion);
  w.u32(static_cast<std::uint32_t>(store.dim));
  w.u64(store.count());
  w.bytes(store.data.data(), store.data.size() * sizeof(float));
  for (const auto& m : store.meta) {
    w.str(m.video_id);
    w.u64(static_cast<std::uint64_t>(m.frame_id));
  }
  w.close();
}

EmbeddingStore load_cache(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic(kCacheMagic, "embedding cache");
  const std::uint32_t version = r.u32();
  if (version != kCacheVersion)
    throw std::runtime_error("unsupported embedding cache version " +
                             std::to_string(version));
  EmbeddingStore store;
  store.dim = static_cast<int>(r.u32());
  if (store.dim < 1 || store.dim > kFlatDim)
    throw std::runtime_error("embedding cache has invalid dim");
  const std::uint64_t count = r.u64();
  store.data.resize(count * store.dim);
  r.bytes(store.data.data(), store.data.size() * sizeof(float));
  store.meta.resize(count);
  for (auto& m : store.meta) {
    m.video_id = r.str();
    m.frame_id = static_cast<std::int64_t>(r.u64());
  }
  return store;
}

}  // namespace simhand
