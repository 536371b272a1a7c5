#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "simhand/augment.hpp"
#include "simhand/embed.hpp"
#include "simhand/encoder.hpp"
#include "simhand/ingest.hpp"
#include "simhand/loss.hpp"
#include "simhand/mine.hpp"
#include "simhand/synth.hpp"

namespace simhand {

// Which vectors feed the adaptive weights: PCA-projected post-augmentation
// keypoints (default) or the raw 42-vectors.
enum class WeightSpace { kPca, kRaw };

struct TrainConfig {
  // Artifact paths; `pairs` may stay empty when topk_positives > 1 (the loop
  // mines the K-th ranked positives itself).
  std::string records;
  std::string images;
  std::string pairs;
  std::string pca_model;
  std::string model_out;
  std::string log;

  int dim = 14;  // expected width of the pose embedding model
  int batch_pairs = 128;  // N; the batch holds 2N samples
  int steps = 500;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double tau = 0.5;
  std::uint64_t seed = 1;

  bool use_weights = true;
  DenominatorMode denominator = DenominatorMode::kSimclr;
  WeightSpace weight_space = WeightSpace::kPca;
  int topk_positives = 1;

  AugmentRanges augment;
  std::vector<int> hidden{256, 128};
  int feature_dim = 64;
  int projection_dim = 32;
};

// Structured-text round trip; unknown keys are rejected. Loading resolves
// relative artifact paths against the config file's directory.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);
void save_train_config(const TrainConfig& config, const std::filesystem::path& path);

// One contrastive batch: rows 0..N-1 are anchor views, N..2N-1 the positive
// views, row i pairing with row i+N.
struct TrainBatch {
  Eigen::MatrixXd images;     // 2N x input_dim, flattened row-major
  Eigen::MatrixXd keypoints;  // 2N x 42, post-augmentation crop coordinates
  std::vector<AugmentParams> params;
};

TrainBatch build_batch(const RecordSet& records, const std::vector<SynthImage>& images,
                       const PairTable& pairs, const std::vector<std::size_t>& anchors,
                       const AugmentRanges& ranges, Rng& rng, int threads = 0);

struct LossOptions {
  bool use_weights = true;
  WeightSpace weight_space = WeightSpace::kPca;
  DenominatorMode denominator = DenominatorMode::kSimclr;
  double tau = 0.5;
  const PcaModel* pca = nullptr;  // required for WeightSpace::kPca
};

// The per-batch weights exactly as the loss will see them.
PairWeights batch_weights(const TrainBatch& batch, const LossOptions& options);

// Forward + loss; when `grads` is non-null, also backprop through the
// feature alignment and the encoder.
LossReport batch_loss(const EncoderModel& model, const TrainBatch& batch,
                      const LossOptions& options, Gradients* grads = nullptr);

// One optimizer step over a built batch.
LossReport train_step(EncoderModel& model, const TrainBatch& batch,
                      SgdMomentum& optimizer, const LossOptions& options);

struct StepMetrics {
  int step = 0;
  double loss = 0.0;
  double mean_pos_sim = 0.0;
  double mean_neg_sim = 0.0;
};

void save_metrics_log(const std::vector<StepMetrics>& log,
                      const std::filesystem::path& path);
std::vector<StepMetrics> load_metrics_log(const std::filesystem::path& path);

// Mean of (mean_pos_sim - mean_neg_sim) over the trailing `window` entries.
double final_margin(const std::vector<StepMetrics>& log, int window = 50);

// In-memory training inputs; `pairs` must cover every record row.
struct TrainInputs {
  const RecordSet* records = nullptr;
  const std::vector<SynthImage>* images = nullptr;
  const PcaModel* pca = nullptr;
  PairTable pairs;
};

struct TrainResult {
  EncoderModel model;
  std::vector<StepMetrics> log;
};

TrainResult train_loop(const TrainConfig& config, const TrainInputs& inputs,
                       int threads = 0);

// Loads every artifact named by the config, resolves (or mines) positives,
// runs the loop, and writes model/log artifacts where configured.
TrainResult train_from_files(const TrainConfig& config, int threads = 0);

}  // namespace simhand
