#include "simhand/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "simhand/rng.hpp"

namespace simhand {

using nlohmann::json;

PoseSet load_poses_mm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  PoseSet set;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error("line " + std::to_string(line_number) +
                               ": invalid JSON: " + e.what());
    }
    if (!j.contains("video_id") || !j.contains("frame_id") || !j.contains("joints"))
      throw std::runtime_error("line " + std::to_string(line_number) +
                               ": missing video_id/frame_id/joints");
    const auto& joints = j.at("joints");
    if (!joints.is_array() || joints.size() != kNumKeypoints)
      throw std::runtime_error("line " + std::to_string(line_number) + ": expected " +
                               std::to_string(kNumKeypoints) + " joints");
    Pose3 pose;
    for (int k = 0; k < kNumKeypoints; ++k) {
      const auto& jt = joints[k];
      if (!jt.is_array() || jt.size() != 3)
        throw std::runtime_error("line " + std::to_string(line_number) +
                                 ": joint must be [x, y, z]");
      pose[k] = {jt[0].get<double>(), jt[1].get<double>(), jt[2].get<double>()};
      if (!std::isfinite(pose[k].x) || !std::isfinite(pose[k].y) || !std::isfinite(pose[k].z))
        throw std::runtime_error("line " + std::to_string(line_number) +
                                 ": non-finite joint coordinate");
    }
    set.poses.push_back(pose);
    set.video_ids.push_back(j.at("video_id").get<std::string>());
    set.frame_ids.push_back(j.at("frame_id").get<std::int64_t>());
  }
  return set;
}

void save_poses_mm(const PoseSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  for (std::size_t i = 0; i < set.size(); ++i) {
    json joints = json::array();
    for (const auto& jt : set.poses[i]) joints.push_back(json::array({jt.x, jt.y, jt.z}));
    json j{{"video_id", set.video_ids[i]},
           {"frame_id", set.frame_ids[i]},
           {"joints", std::move(joints)}};
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

PoseSet root_relative(const PoseSet& set) {
  PoseSet out = set;
  for (auto& pose : out.poses) {
    const Joint3 root = pose[0];
    for (auto& jt : pose) {
      jt.x -= root.x;
      jt.y -= root.y;
      jt.z -= root.z;
    }
  }
  return out;
}

namespace {

void check_aligned(const PoseSet& a, const PoseSet& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("pose sets differ in size");
  if (a.size() == 0) throw std::invalid_argument("pose sets are empty");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.video_ids[i] != b.video_ids[i] || a.frame_ids[i] != b.frame_ids[i]) {
      std::ostringstream msg;
      msg << "pose sets misaligned at row " << i << ": (" << a.video_ids[i] << ", "
          << a.frame_ids[i] << ") vs (" << b.video_ids[i] << ", " << b.frame_ids[i] << ")";
      throw std::invalid_argument(msg.str());
    }
  }
}

double joint_error(const Joint3& p, const Joint3& r) {
  const double dx = p.x - r.x, dy = p.y - r.y, dz = p.z - r.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

double mpjpe(const PoseSet& predicted, const PoseSet& reference) {
  check_aligned(predicted, reference);
  double acc = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    for (int k = 0; k < kNumKeypoints; ++k)
      acc += joint_error(predicted.poses[i][k], reference.poses[i][k]);
  return acc / (static_cast<double>(predicted.size()) * kNumKeypoints);
}

double pck_auc(const PoseSet& predicted, const PoseSet& reference,
               const PckAucOptions& options) {
  check_aligned(predicted, reference);
  if (options.steps < 2) throw std::invalid_argument("need at least 2 threshold steps");
  if (!(options.threshold_max_mm > options.threshold_min_mm))
    throw std::invalid_argument("threshold range must be increasing");

  const std::size_t total =
      predicted.size() * static_cast<std::size_t>(kNumKeypoints);
  std::vector<double> errors;
  errors.reserve(total);
  for (std::size_t i = 0; i < predicted.size(); ++i)
    for (int k = 0; k < kNumKeypoints; ++k)
      errors.push_back(joint_error(predicted.poses[i][k], reference.poses[i][k]));

  // PCK at each threshold (fraction of joints with error <= t), then the
  // trapezoid rule normalized by the span.
  const double span = options.threshold_max_mm - options.threshold_min_mm;
  const double dt = span / (options.steps - 1);
  double area = 0.0;
  double prev = 0.0;
  for (int s = 0; s < options.steps; ++s) {
    const double t = options.threshold_min_mm + s * dt;
    std::size_t hits = 0;
    for (double e : errors)
      if (e <= t) ++hits;
    const double pck = static_cast<double>(hits) / static_cast<double>(total);
    if (s > 0) area += 0.5 * (prev + pck) * dt;
    prev = pck;
  }
  return area / span;
}

MiningQuality mining_quality(const MiningIndex& index, const PairTable& pairs,
                             std::uint64_t seed) {
  if (pairs.entries.size() != index.count())
    throw std::invalid_argument("pair table does not cover the index");
  if (index.video_count() < 2)
    throw std::invalid_argument("need at least 2 videos for a cross-video baseline");

  MiningQuality q;
  q.pair_count = pairs.entries.size();

  double mined_acc = 0.0;
  for (const Neighbor& nb : pairs.entries) mined_acc += nb.distance;
  q.mined_mean_distance = mined_acc / static_cast<double>(q.pair_count);

  // Baseline: for each row, a uniformly random row from a different video.
  Rng rng(derive_seed(seed, 0xba5e));
  std::uniform_int_distribution<std::size_t> pick(0, index.count() - 1);
  double random_acc = 0.0;
  const int dim = index.dim();
  for (std::size_t row = 0; row < index.count(); ++row) {
    std::size_t other = row;
    while (index.video_of(other) == index.video_of(row)) other = pick(rng);
    random_acc +=
        std::sqrt(squared_distance(index.store().row(row), index.store().row(other), dim));
  }
  q.random_mean_distance = random_acc / static_cast<double>(index.count());
  q.ratio = q.random_mean_distance > 0.0 ? q.mined_mean_distance / q.random_mean_distance
                                         : 0.0;
  return q;
}

}  // namespace simhand
