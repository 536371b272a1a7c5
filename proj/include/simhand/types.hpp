#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace simhand {

inline constexpr int kNumKeypoints = 21;
inline constexpr int kFlatDim = 2 * kNumKeypoints;

/// Millimeters per crop-normalized unit, used when synthetic 2.5D poses are
/// exported for the pose metrics.
inline constexpr double kMillimetersPerUnit = 250.0;

enum class Hand { kLeft, kRight };

const char* to_string(Hand hand);
Hand hand_from_string(const std::string& s);

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
};

/// One detected hand crop, keypoints in crop-normalized [0,1] coordinates
/// (x right, y down).
struct KeypointRecord {
  std::string video_id;
  std::int64_t frame_id = 0;
  Hand hand = Hand::kRight;
  std::array<Keypoint, kNumKeypoints> keypoints{};
  double detection_score = 1.0;
};

/// Records plus the derived per-video grouping. Video ordinals follow first
/// appearance order in `records`.
struct RecordSet {
  std::vector<KeypointRecord> records;
  std::vector<std::string> video_ids;
  std::vector<std::vector<std::size_t>> video_rows;
  std::unordered_map<std::string, std::size_t> video_ordinal;

  std::size_t size() const { return records.size(); }
  std::size_t video_count() const { return video_ids.size(); }

  /// Rebuilds the video grouping from `records`. Must be called after any
  /// direct mutation of the record list.
  void rebuild_video_map();
};

}  // namespace simhand
