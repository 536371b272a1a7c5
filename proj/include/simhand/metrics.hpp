#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "simhand/ingest.hpp"
#include "simhand/mine.hpp"
#include "simhand/synth.hpp"

namespace simhand {

// A set of 3D poses in millimeters, row-aligned with (video_id, frame_id).
struct PoseSet {
  std::vector<Pose3> poses;
  std::vector<std::string> video_ids;
  std::vector<std::int64_t> frame_ids;
  std::size_t size() const { return poses.size(); }
};

PoseSet load_poses_mm(const std::filesystem::path& path);
void save_poses_mm(const PoseSet& poses, const std::filesystem::path& path);

// Subtracts the wrist joint from every joint of each pose.
PoseSet root_relative(const PoseSet& poses);

// Mean per-joint position error in millimeters. Pose sets must be aligned
// row for row.
double mpjpe(const PoseSet& predicted, const PoseSet& reference);

struct PckAucOptions {
  double threshold_min_mm = 20.0;
  double threshold_max_mm = 50.0;
  int steps = 31;
};

// Area under the PCK curve over evenly spaced thresholds, trapezoid rule,
// normalized by the threshold span; lands in [0,1].
double pck_auc(const PoseSet& predicted, const PoseSet& reference,
               const PckAucOptions& options = {});

struct MiningQuality {
  double mined_mean_distance = 0.0;    // mean over the mined pairs
  double random_mean_distance = 0.0;   // seeded random cross-video baseline
  double ratio = 0.0;                  // mined / random
  std::size_t pair_count = 0;
};

// Compares mined pair distances (in embedding space) against a random
// cross-video pairing baseline drawn with the given seed.
MiningQuality mining_quality(const MiningIndex& index, const PairTable& pairs,
                             std::uint64_t seed);

}  // namespace simhand
