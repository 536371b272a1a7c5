#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "simhand/types.hpp"

namespace simhand {

/// Articulation limits of the parametric hand.
struct PoseBounds {
  double flexion_min = 0.0, flexion_max = 1.5;   // radians of per-finger curl
  double spread_min = -0.25, spread_max = 0.25;  // fan opening
  double rotation_min = -3.14159265358979323846, rotation_max = 3.14159265358979323846;
  double wrist_min = 0.4, wrist_max = 0.6;       // crop units, both axes
};

struct SynthPoseParams {
  std::array<double, 5> flexion{};  // thumb..pinky
  double spread = 0.0;
  double rotation = 0.0;
  double wrist_x = 0.5;
  double wrist_y = 0.5;
};

/// Joint layout: 0 wrist, then 4 joints per finger (thumb 1-4, index 5-8,
/// middle 9-12, ring 13-16, pinky 17-20), tip last.
inline constexpr int kBonesPerHand = 20;
std::array<std::pair<int, int>, kBonesPerHand> hand_bones();

struct Joint3 {
  double x = 0.0, y = 0.0, z = 0.0;  // crop units; z is depth toward camera
};
using Pose3 = std::array<Joint3, kNumKeypoints>;

/// Forward kinematics. Planar projection of a 2.5D chain: finger curl rotates
/// phalanges out of the image plane, global rotation spins the whole figure
/// about the wrist. Throws on out-of-bounds parameters.
Pose3 generate_pose_3d(const SynthPoseParams& params, const PoseBounds& bounds = {});
std::array<Keypoint, kNumKeypoints> generate_pose(const SynthPoseParams& params,
                                                  const PoseBounds& bounds = {});

struct SynthImage {
  int size = 0;  // H == W
  std::vector<float> pixels;  // size*size, row-major, [0,1]

  float at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * size + col]; }
};

inline constexpr double kStrokeRadiusPx = 1.6;

/// Anti-aliased skeleton render on a black background. Intensity at a pixel is
/// the max over bones of a linear falloff that reaches zero at kStrokeRadiusPx.
SynthImage render_pose(const std::array<Keypoint, kNumKeypoints>& keypoints, int size);

/// Left-right pixel mirror; pairs with the keypoint map x -> 1 - x.
SynthImage flip_horizontal(const SynthImage& image);

struct CorpusConfig {
  int n_videos = 50;
  int frames_per_video = 200;
  double coherence = 0.8;  // 1 freezes the walk, 0 is a free walk
  int image_size = 64;
  double keypoint_noise = 0.0;  // sigma of seeded jitter on stored keypoints
  std::uint64_t seed = 1;
};

struct SynthCorpus {
  RecordSet records;
  std::vector<SynthImage> images;  // row-aligned with records
  std::vector<Pose3> poses;        // ground-truth 2.5D chain, crop units
};

/// Per-video seeded random walk in pose-parameter space with step scale
/// (1 - coherence). Each video is entirely left- or right-handed (seeded coin
/// flip); left videos store mirrored keypoints and matching mirrored renders.
SynthCorpus generate_corpus(const CorpusConfig& config, int threads = 0);

void save_images(const std::vector<SynthImage>& images, const std::filesystem::path& path);
std::vector<SynthImage> load_images(const std::filesystem::path& path);

/// Ground-truth poses in millimeters, one JSON line per record.
void save_poses_mm(const std::vector<Pose3>& poses, const RecordSet& records,
                   const std::filesystem::path& path);

}  // namespace simhand
