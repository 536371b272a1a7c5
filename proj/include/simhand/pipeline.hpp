#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "simhand/metrics.hpp"
#include "simhand/synth.hpp"
#include "simhand/train.hpp"

namespace simhand {

// End-to-end run configuration: corpus generation through contrastive
// training, every stage writing its artifact under `out_dir`.
struct PipelineConfig {
  std::string out_dir = "run";
  std::uint64_t seed = 1;

  CorpusConfig synth;      // synth.seed is overridden by the global seed
  double min_score = 0.0;  // ingest drop threshold

  int pca_dim = 14;
  bool pca_center = true;
  std::size_t pca_subsample = 0;

  TrainConfig train;  // artifact paths are filled in from out_dir
};

PipelineConfig load_pipeline_config(const std::filesystem::path& path);
void save_pipeline_config(const PipelineConfig& config,
                          const std::filesystem::path& path);

struct PipelineReport {
  MiningQuality quality;
  double final_loss = 0.0;
  double final_margin = 0.0;
  int steps = 0;
};

// synth -> ingest/balance -> fit-pca -> embed -> mine -> train; writes
// report.json beside the other artifacts and returns its contents.
PipelineReport run_pipeline(const PipelineConfig& config, int threads = 0);

}  // namespace simhand
