#include "simhand/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "simhand/rng.hpp"

namespace simhand {

using nlohmann::json;

const char* to_string(Hand hand) { return hand == Hand::kLeft ? "left" : "right"; }

Hand hand_from_string(const std::string& s) {
  if (s == "left") return Hand::kLeft;
  if (s == "right") return Hand::kRight;
  throw std::invalid_argument("invalid hand value: " + s);
}

void RecordSet::rebuild_video_map() {
  video_ids.clear();
  video_rows.clear();
  video_ordinal.clear();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& vid = records[i].video_id;
    auto it = video_ordinal.find(vid);
    if (it == video_ordinal.end()) {
      it = video_ordinal.emplace(vid, video_ids.size()).first;
      video_ids.push_back(vid);
      video_rows.emplace_back();
    }
    video_rows[it->second].push_back(i);
  }
}

namespace {

bool finite_unit(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

KeypointRecord record_from_json(const json& j) {
  static const char* kFields[] = {"video_id", "frame_id", "hand", "keypoints",
                                  "detection_score"};
  if (!j.is_object()) throw std::invalid_argument("not a JSON object");
  for (const auto& item : j.items()) {
    if (std::find_if(std::begin(kFields), std::end(kFields), [&](const char* f) {
          return item.key() == f;
        }) == std::end(kFields)) {
      throw std::invalid_argument("unknown field \"" + item.key() + "\"");
    }
  }
  for (const char* f : kFields) {
    if (!j.contains(f)) throw std::invalid_argument(std::string("missing field \"") + f + "\"");
  }

  KeypointRecord r;
  if (!j["video_id"].is_string()) throw std::invalid_argument("video_id must be a string");
  r.video_id = j["video_id"].get<std::string>();
  if (r.video_id.empty()) throw std::invalid_argument("video_id must be non-empty");

  if (!j["frame_id"].is_number_integer())
    throw std::invalid_argument("frame_id must be an integer");
  r.frame_id = j["frame_id"].get<std::int64_t>();
  if (r.frame_id < 0) throw std::invalid_argument("frame_id must be non-negative");

  if (!j["hand"].is_string()) throw std::invalid_argument("hand must be a string");
  r.hand = hand_from_string(j["hand"].get<std::string>());

  const auto& kps = j["keypoints"];
  if (!kps.is_array() || kps.size() != kNumKeypoints)
    throw std::invalid_argument("keypoint count must be exactly 21");
  for (int k = 0; k < kNumKeypoints; ++k) {
    const auto& kp = kps[k];
    if (!kp.is_array() || kp.size() != 2 || !kp[0].is_number() || !kp[1].is_number())
      throw std::invalid_argument("keypoint " + std::to_string(k) + " must be [x, y]");
    r.keypoints[k].x = kp[0].get<double>();
    r.keypoints[k].y = kp[1].get<double>();
    if (!finite_unit(r.keypoints[k].x) || !finite_unit(r.keypoints[k].y))
      throw std::invalid_argument("keypoint " + std::to_string(k) +
                                  " out of [0,1] or non-finite");
  }

  if (!j["detection_score"].is_number())
    throw std::invalid_argument("detection_score must be a number");
  r.detection_score = j["detection_score"].get<double>();
  if (!finite_unit(r.detection_score))
    throw std::invalid_argument("detection_score out of [0,1] or non-finite");
  return r;
}

std::string dup_key(const KeypointRecord& r) {
  return r.video_id + ":" + std::to_string(r.frame_id) + ":" + to_string(r.hand);
}

}  // namespace

RecordSet parse_records(std::istream& in, const ParseOptions& options,
                        ParseReport* report) {
  RecordSet set;
  ParseReport local;
  ParseReport& rep = report ? *report : local;
  rep = ParseReport{};

  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    ++rep.total_lines;
    if (line.empty()) continue;
    KeypointRecord r;
    try {
      r = record_from_json(json::parse(line));
    } catch (const std::exception& e) {
      if (options.strict) {
        throw std::runtime_error("line " + std::to_string(line_no) + ": " + e.what());
      }
      rep.issues.push_back({line_no, e.what()});
      continue;
    }
    auto [it, inserted] = seen.emplace(dup_key(r), line_no);
    if (!inserted) {
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": duplicate (video_id, frame_id, hand) key " + dup_key(r) +
                               ", first seen at line " + std::to_string(it->second));
    }
    if (r.detection_score < options.min_score) {
      ++rep.dropped_low_score;
      continue;
    }
    ++rep.accepted;
    set.records.push_back(std::move(r));
  }
  set.rebuild_video_map();
  return set;
}

RecordSet parse_records_file(const std::filesystem::path& path,
                             const ParseOptions& options, ParseReport* report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  return parse_records(in, options, report);
}

void serialize_records(const RecordSet& set, std::ostream& out) {
  for (const auto& r : set.records) {
    json kps = json::array();
    for (const auto& kp : r.keypoints) kps.push_back(json::array({kp.x, kp.y}));
    json j{{"video_id", r.video_id},
           {"frame_id", r.frame_id},
           {"hand", to_string(r.hand)},
           {"keypoints", std::move(kps)},
           {"detection_score", r.detection_score}};
    out << j.dump() << '\n';
  }
}

void serialize_records_file(const RecordSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  serialize_records(set, out);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

KeypointRecord mirror_to_right(const KeypointRecord& record) {
  if (record.hand == Hand::kRight)
    throw std::invalid_argument("already right: " + dup_key(record));
  KeypointRecord out = record;
  out.hand = Hand::kRight;
  for (auto& kp : out.keypoints) kp.x = 1.0 - kp.x;
  return out;
}

BalanceResult balance_hands(const RecordSet& set, std::uint64_t seed) {
  std::vector<std::size_t> left, right;
  for (std::size_t i = 0; i < set.records.size(); ++i) {
    (set.records[i].hand == Hand::kLeft ? left : right).push_back(i);
  }

  BalanceResult result;
  const std::size_t keep = std::min(left.size(), right.size());
  result.empty_side = keep == 0 && (left.size() + right.size()) > 0;

  auto subsample = [&](std::vector<std::size_t>& rows) {
    if (rows.size() <= keep) return;
    Rng rng(derive_seed(seed, 0xba1a));
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(keep);
    std::sort(rows.begin(), rows.end());
  };
  subsample(left);
  subsample(right);

  std::vector<std::size_t> kept;
  kept.reserve(2 * keep);
  kept.insert(kept.end(), left.begin(), left.end());
  kept.insert(kept.end(), right.begin(), right.end());
  std::sort(kept.begin(), kept.end());

  result.set.records.reserve(kept.size());
  result.source_rows.reserve(kept.size());
  result.mirrored.reserve(kept.size());
  for (std::size_t row : kept) {
    const auto& r = set.records[row];
    const bool mirror = r.hand == Hand::kLeft;
    result.set.records.push_back(mirror ? mirror_to_right(r) : r);
    result.source_rows.push_back(row);
    result.mirrored.push_back(mirror);
  }
  result.set.rebuild_video_map();
  return result;
}

}  // namespace simhand
