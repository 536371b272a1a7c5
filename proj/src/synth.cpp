#include "simhand/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "simhand/io.hpp"
#include "simhand/parallel.hpp"
#include "simhand/rng.hpp"

namespace simhand {

using nlohmann::json;

namespace {

constexpr char kImageMagic[5] = "SIMG";
constexpr std::uint32_t kImageVersion = 1;

// Per-finger geometry: fan angle offset from straight-up, spread multiplier,
// metacarpal length, and three phalanx lengths (crop units). Reach maxes out
// around 0.36 units, which keeps every joint inside [0,1] for wrists in
// [0.4, 0.6].
struct FingerSpec {
  double base_angle;
  double spread_gain;
  double palm_len;
  std::array<double, 3> phalanx;
};

constexpr std::array<FingerSpec, 5> kFingers{{
    {-1.00, 2.2, 0.10, {0.075, 0.050, 0.040}},  // thumb
    {-0.45, 1.0, 0.16, {0.080, 0.050, 0.035}},  // index
    {-0.12, 0.1, 0.17, {0.090, 0.055, 0.040}},  // middle
    {0.18, -0.8, 0.16, {0.085, 0.050, 0.035}},  // ring
    {0.48, -1.8, 0.14, {0.060, 0.040, 0.030}},  // pinky
}};

// Hand points "up" (negative y in the y-down crop frame).
constexpr double kUpAngle = -1.5707963267948966;

// Cumulative curl weights for the three phalanx joints.
constexpr std::array<double, 3> kCurlGain{1.0, 1.9, 2.6};

void check_bounds(const SynthPoseParams& p, const PoseBounds& b) {
  auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  for (double f : p.flexion) {
    if (!in(f, b.flexion_min, b.flexion_max))
      throw std::invalid_argument("flexion out of bounds");
  }
  if (!in(p.spread, b.spread_min, b.spread_max))
    throw std::invalid_argument("spread out of bounds");
  if (!in(p.rotation, b.rotation_min, b.rotation_max))
    throw std::invalid_argument("rotation out of bounds");
  if (!in(p.wrist_x, b.wrist_min, b.wrist_max) || !in(p.wrist_y, b.wrist_min, b.wrist_max))
    throw std::invalid_argument("wrist out of bounds");
}

}  // namespace

std::array<std::pair<int, int>, kBonesPerHand> hand_bones() {
  std::array<std::pair<int, int>, kBonesPerHand> bones;
  int b = 0;
  for (int f = 0; f < 5; ++f) {
    const int base = 1 + 4 * f;
    bones[b++] = {0, base};
    bones[b++] = {base, base + 1};
    bones[b++] = {base + 1, base + 2};
    bones[b++] = {base + 2, base + 3};
  }
  return bones;
}

Pose3 generate_pose_3d(const SynthPoseParams& params, const PoseBounds& bounds) {
  check_bounds(params, bounds);
  Pose3 pose;
  pose[0] = {params.wrist_x, params.wrist_y, 0.0};
  for (int f = 0; f < 5; ++f) {
    const FingerSpec& spec = kFingers[f];
    const double angle =
        kUpAngle + spec.base_angle + spec.spread_gain * params.spread + params.rotation;
    const double ux = std::cos(angle);
    const double uy = std::sin(angle);
    Joint3 at = pose[0];
    at.x += spec.palm_len * ux;
    at.y += spec.palm_len * uy;
    pose[1 + 4 * f] = at;
    for (int j = 0; j < 3; ++j) {
      const double curl = params.flexion[f] * kCurlGain[j];
      const double len = spec.phalanx[j];
      at.x += len * std::cos(curl) * ux;
      at.y += len * std::cos(curl) * uy;
      at.z += len * std::sin(curl);
      pose[2 + 4 * f + j] = at;
    }
  }
  return pose;
}

std::array<Keypoint, kNumKeypoints> generate_pose(const SynthPoseParams& params,
                                                  const PoseBounds& bounds) {
  const Pose3 pose = generate_pose_3d(params, bounds);
  std::array<Keypoint, kNumKeypoints> kps;
  for (int k = 0; k < kNumKeypoints; ++k) kps[k] = {pose[k].x, pose[k].y};
  return kps;
}

namespace {

double point_segment_distance(double px, double py, double ax, double ay, double bx,
                              double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((px - ax) * dx + (py - ay) * dy) / len2, 0.0, 1.0);
  const double cx = ax + t * dx - px, cy = ay + t * dy - py;
  return std::sqrt(cx * cx + cy * cy);
}

}  // namespace

SynthImage render_pose(const std::array<Keypoint, kNumKeypoints>& keypoints, int size) {
  if (size < 2) throw std::invalid_argument("image size must be >= 2");
  SynthImage img;
  img.size = size;
  img.pixels.assign(static_cast<std::size_t>(size) * size, 0.0f);

  const double aa = 1.0;  // falloff width in pixels
  for (const auto& [a, b] : hand_bones()) {
    // Endpoints in pixel coordinates (pixel (r,c) center is (c+0.5, r+0.5)).
    const double ax = keypoints[a].x * size, ay = keypoints[a].y * size;
    const double bx = keypoints[b].x * size, by = keypoints[b].y * size;
    const int c0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - kStrokeRadiusPx - 0.5)));
    const int c1 = std::min(size - 1, static_cast<int>(std::ceil(std::max(ax, bx) + kStrokeRadiusPx - 0.5)));
    const int r0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - kStrokeRadiusPx - 0.5)));
    const int r1 = std::min(size - 1, static_cast<int>(std::ceil(std::max(ay, by) + kStrokeRadiusPx - 0.5)));
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        const double d =
            point_segment_distance(c + 0.5, r + 0.5, ax, ay, bx, by);
        const double v = std::clamp((kStrokeRadiusPx - d) / aa, 0.0, 1.0);
        float& px = img.pixels[static_cast<std::size_t>(r) * size + c];
        px = std::max(px, static_cast<float>(v));
      }
    }
  }
  return img;
}

SynthImage flip_horizontal(const SynthImage& image) {
  SynthImage out;
  out.size = image.size;
  out.pixels.resize(image.pixels.size());
  for (int r = 0; r < image.size; ++r)
    for (int c = 0; c < image.size; ++c)
      out.pixels[static_cast<std::size_t>(r) * image.size + c] =
          image.pixels[static_cast<std::size_t>(r) * image.size + (image.size - 1 - c)];
  return out;
}

namespace {

double reflect_into(double v, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0.0) return lo;
  // Reflect off both walls until inside; bounded number of iterations for the
  // step sizes used here.
  while (v < lo || v > hi) {
    if (v < lo) v = 2.0 * lo - v;
    if (v > hi) v = 2.0 * hi - v;
  }
  return v;
}

SynthPoseParams random_params(Rng& rng, const PoseBounds& b) {
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  SynthPoseParams p;
  for (auto& f : p.flexion) f = uniform(b.flexion_min, b.flexion_max);
  p.spread = uniform(b.spread_min, b.spread_max);
  p.rotation = uniform(b.rotation_min, b.rotation_max);
  p.wrist_x = uniform(b.wrist_min, b.wrist_max);
  p.wrist_y = uniform(b.wrist_min, b.wrist_max);
  return p;
}

void walk_step(SynthPoseParams& p, Rng& rng, const PoseBounds& b, double step_scale) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto step = [&](double v, double lo, double hi, double gain) {
    return reflect_into(v + step_scale * gain * (hi - lo) * gauss(rng), lo, hi);
  };
  for (auto& f : p.flexion) f = step(f, b.flexion_min, b.flexion_max, 0.25);
  p.spread = step(p.spread, b.spread_min, b.spread_max, 0.25);
  p.rotation = step(p.rotation, b.rotation_min, b.rotation_max, 0.12);
  p.wrist_x = step(p.wrist_x, b.wrist_min, b.wrist_max, 0.25);
  p.wrist_y = step(p.wrist_y, b.wrist_min, b.wrist_max, 0.25);
}

}  // namespace

SynthCorpus generate_corpus(const CorpusConfig& config, int threads) {
  if (config.n_videos < 2) throw std::invalid_argument("need at least 2 videos");
  if (config.frames_per_video < 1) throw std::invalid_argument("need at least 1 frame");
  if (config.coherence < 0.0 || config.coherence > 1.0)
    throw std::invalid_argument("coherence must be in [0,1]");

  const PoseBounds bounds;
  const std::size_t total =
      static_cast<std::size_t>(config.n_videos) * config.frames_per_video;
  SynthCorpus corpus;
  corpus.records.records.resize(total);
  corpus.images.resize(total);
  corpus.poses.resize(total);

  // One video per chunk; every video owns a derived RNG stream, so output is
  // independent of scheduling.
  parallel_chunks(static_cast<std::size_t>(config.n_videos), 1, threads,
                  [&](std::size_t v, std::size_t) {
    Rng rng(derive_seed(config.seed, 0x51d0, v));
    const bool left_handed = (rng() & 1u) != 0;
    char vid_name[16];
    std::snprintf(vid_name, sizeof vid_name, "vid%04zu", v);

    SynthPoseParams params = random_params(rng, bounds);
    const double step_scale = 1.0 - config.coherence;
    // Keypoint jitter draws from its own stream so turning noise on or off
    // leaves the walk (and thus poses and renders) untouched.
    Rng jitter_rng(derive_seed(config.seed, 0x71e4, v));
    std::normal_distribution<double> jitter(0.0, config.keypoint_noise);

    for (int f = 0; f < config.frames_per_video; ++f) {
      if (f > 0 && step_scale > 0.0) walk_step(params, rng, bounds, step_scale);
      Pose3 pose = generate_pose_3d(params, bounds);
      if (left_handed) {
        for (auto& joint : pose) joint.x = 1.0 - joint.x;
      }
      std::array<Keypoint, kNumKeypoints> kps;
      for (int k = 0; k < kNumKeypoints; ++k) kps[k] = {pose[k].x, pose[k].y};

      const std::size_t row = v * static_cast<std::size_t>(config.frames_per_video) + f;
      corpus.images[row] = render_pose(kps, config.image_size);
      corpus.poses[row] = pose;

      if (config.keypoint_noise > 0.0) {
        for (auto& kp : kps) {
          kp.x = std::clamp(kp.x + jitter(jitter_rng), 0.0, 1.0);
          kp.y = std::clamp(kp.y + jitter(jitter_rng), 0.0, 1.0);
        }
      }

      KeypointRecord& rec = corpus.records.records[row];
      rec.video_id = vid_name;
      rec.frame_id = f;
      rec.hand = left_handed ? Hand::kLeft : Hand::kRight;
      rec.keypoints = kps;
      rec.detection_score = 1.0;
    }
  });
  corpus.records.rebuild_video_map();
  return corpus;
}

void save_images(const std::vector<SynthImage>& images, const std::filesystem::path& path) {
  BinaryWriter w(path);
  w.magic(kImageMagic);
  w.u32(kImageVersion);
  const int size = images.empty() ? 0 : images.front().size;
  w.u32(static_cast<std::uint32_t>(size));
  w.u32(static_cast<std::uint32_t>(size));
  w.u64(images.size());
  for (const auto& img : images) {
    if (img.size != size) throw std::invalid_argument("mixed image sizes in archive");
    w.bytes(img.pixels.data(), img.pixels.size() * sizeof(float));
  }
  w.close();
}

std::vector<SynthImage> load_images(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic(kImageMagic, "image archive");
  const std::uint32_t version = r.u32();
  if (version != kImageVersion)
    throw std::runtime_error("unsupported image archive version " + std::to_string(version));
  const std::uint32_t h = r.u32();
  const std::uint32_t w = r.u32();
  if (h != w) throw std::runtime_error("image archive must be square");
  const std::uint64_t count = r.u64();
  std::vector<SynthImage> images(count);
  for (auto& img : images) {
    img.size = static_cast<int>(h);
    img.pixels.resize(static_cast<std::size_t>(h) * w);
    r.bytes(img.pixels.data(), img.pixels.size() * sizeof(float));
  }
  return images;
}

void save_poses_mm(const std::vector<Pose3>& poses, const RecordSet& records,
                   const std::filesystem::path& path) {
  if (poses.size() != records.size())
    throw std::invalid_argument("poses and records must be row-aligned");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    json joints = json::array();
    for (const auto& jt : poses[i]) {
      joints.push_back(json::array({jt.x * kMillimetersPerUnit, jt.y * kMillimetersPerUnit,
                                    jt.z * kMillimetersPerUnit}));
    }
    json j{{"video_id", records.records[i].video_id},
           {"frame_id", records.records[i].frame_id},
           {"joints", std::move(joints)}};
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace simhand
