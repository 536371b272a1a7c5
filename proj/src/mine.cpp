#include "simhand/mine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "simhand/parallel.hpp"

namespace simhand {

using nlohmann::json;

namespace {

/// Candidate ranking key: distance first, then the fixed tie-break. Row id is
/// a final level so the order is total even if (video, frame) repeats.
struct RankKey {
  double d2;
  std::uint32_t ordinal;
  std::int64_t frame;
  std::size_t row;

  bool operator<(const RankKey& o) const {
    if (d2 != o.d2) return d2 < o.d2;
    if (ordinal != o.ordinal) return ordinal < o.ordinal;
    if (frame != o.frame) return frame < o.frame;
    return row < o.row;
  }
};

constexpr std::size_t kQueryBlock = 64;

}  // namespace

double squared_distance(const float* a, const float* b, int dim) {
  double acc = 0.0;
  for (int d = 0; d < dim; ++d) {
    const double diff = static_cast<double>(a[d]) - static_cast<double>(b[d]);
    acc += diff * diff;
  }
  return acc;
}

MiningIndex::MiningIndex(EmbeddingStore store) : store_(std::move(store)) {
  if (store_.count() == 0) throw std::invalid_argument("cannot index an empty store");
  const std::size_t n = store_.count();
  video_of_.resize(n);
  std::unordered_map<std::string, std::uint32_t> ordinal_of;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& vid = store_.meta[i].video_id;
    auto it = ordinal_of.find(vid);
    if (it == ordinal_of.end()) {
      it = ordinal_of.emplace(vid, static_cast<std::uint32_t>(video_ids_.size())).first;
      video_ids_.push_back(vid);
      groups.emplace_back();
    }
    video_of_[i] = it->second;
    groups[it->second].push_back(i);
  }
  group_begin_.resize(groups.size() + 1, 0);
  grouped_to_row_.reserve(n);
  grouped_data_.resize(n * static_cast<std::size_t>(store_.dim));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    group_begin_[g] = grouped_to_row_.size();
    for (std::size_t row : groups[g]) {
      std::copy_n(store_.row(row), store_.dim,
                  grouped_data_.data() + grouped_to_row_.size() * store_.dim);
      grouped_to_row_.push_back(row);
    }
  }
  group_begin_.back() = n;
}

std::size_t MiningIndex::find_row(const std::string& video_id,
                                  std::int64_t frame_id) const {
  for (std::size_t i = 0; i < store_.count(); ++i) {
    if (store_.meta[i].frame_id == frame_id && store_.meta[i].video_id == video_id)
      return i;
  }
  return npos;
}

MiningIndex build_index(EmbeddingStore store) { return MiningIndex(std::move(store)); }

namespace {

/// Collects the ranking keys of every cross-video candidate of `query_row`.
std::vector<RankKey> gather_candidates(const MiningIndex& index, std::size_t query_row) {
  const std::uint32_t own = index.video_of(query_row);
  const float* q = index.store().row(query_row);
  std::vector<RankKey> keys;
  keys.reserve(index.count());
  for (std::uint32_t g = 0; g < index.video_count(); ++g) {
    if (g == own) continue;
    for (std::size_t pos = index.group_begin(g); pos < index.group_end(g); ++pos) {
      const std::size_t row = index.grouped_to_row()[pos];
      keys.push_back({squared_distance(q, index.grouped_row(pos), index.dim()), g,
                      index.frame_of(row), row});
    }
  }
  return keys;
}

}  // namespace

Neighbor mine_positive(const MiningIndex& index, std::size_t query_row) {
  if (query_row >= index.count()) throw std::out_of_range("query row out of range");
  const std::uint32_t own = index.video_of(query_row);
  const float* q = index.store().row(query_row);
  bool found = false;
  RankKey best{};
  for (std::uint32_t g = 0; g < index.video_count(); ++g) {
    if (g == own) continue;
    for (std::size_t pos = index.group_begin(g); pos < index.group_end(g); ++pos) {
      const std::size_t row = index.grouped_to_row()[pos];
      const RankKey key{squared_distance(q, index.grouped_row(pos), index.dim()), g,
                        index.frame_of(row), row};
      if (!found || key < best) {
        best = key;
        found = true;
      }
    }
  }
  if (!found) throw std::runtime_error("no cross-video candidates for query");
  return {best.row, std::sqrt(best.d2)};
}

TopkResult topk(const MiningIndex& index, std::size_t query_row, std::size_t k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  std::vector<RankKey> keys = gather_candidates(index, query_row);
  if (keys.empty()) throw std::runtime_error("no cross-video candidates for query");
  TopkResult result;
  result.truncated = keys.size() < k;
  const std::size_t take = std::min(k, keys.size());
  std::partial_sort(keys.begin(), keys.begin() + take, keys.end());
  result.entries.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    result.entries.push_back({keys[i].row, std::sqrt(keys[i].d2)});
  }
  return result;
}

PairTable mine_all(const MiningIndex& index, int threads) {
  if (index.video_count() < 2)
    throw std::runtime_error("mining requires at least 2 videos");
  const std::size_t n = index.count();
  PairTable table;
  table.entries.resize(n);

  parallel_chunks(n, kQueryBlock, threads, [&](std::size_t qlo, std::size_t qhi) {
    const std::size_t nq = qhi - qlo;
    std::vector<RankKey> best(nq);
    std::vector<bool> found(nq, false);
    for (std::uint32_t g = 0; g < index.video_count(); ++g) {
      for (std::size_t pos = index.group_begin(g); pos < index.group_end(g); ++pos) {
        const float* cand = index.grouped_row(pos);
        const std::size_t cand_row = index.grouped_to_row()[pos];
        const std::int64_t cand_frame = index.frame_of(cand_row);
        for (std::size_t qi = 0; qi < nq; ++qi) {
          const std::size_t q = qlo + qi;
          if (index.video_of(q) == g) continue;
          const RankKey key{squared_distance(index.store().row(q), cand, index.dim()),
                            g, cand_frame, cand_row};
          if (!found[qi] || key < best[qi]) {
            best[qi] = key;
            found[qi] = true;
          }
        }
      }
    }
    for (std::size_t qi = 0; qi < nq; ++qi) {
      if (!found[qi]) throw std::runtime_error("no cross-video candidates for query");
      table.entries[qlo + qi] = {best[qi].row, std::sqrt(best[qi].d2)};
    }
  });
  return table;
}

PairTable mine_rank(const MiningIndex& index, std::size_t rank, int threads) {
  if (rank < 1) throw std::invalid_argument("rank must be >= 1");
  if (index.video_count() < 2)
    throw std::runtime_error("mining requires at least 2 videos");
  if (rank == 1) return mine_all(index, threads);
  const std::size_t n = index.count();
  PairTable table;
  table.entries.resize(n);
  parallel_chunks(n, 16, threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t q = lo; q < hi; ++q) {
      std::vector<RankKey> keys = gather_candidates(index, q);
      if (keys.empty()) throw std::runtime_error("no cross-video candidates for query");
      const std::size_t pick = std::min(rank, keys.size()) - 1;
      std::nth_element(keys.begin(), keys.begin() + pick, keys.end());
      table.entries[q] = {keys[pick].row, std::sqrt(keys[pick].d2)};
    }
  });
  return table;
}

void save_pairs(const PairTable& table, const MiningIndex& index, std::ostream& out) {
  const auto& meta = index.store().meta;
  for (std::size_t q = 0; q < table.entries.size(); ++q) {
    const auto& e = table.entries[q];
    json j{{"query_video_id", meta[q].video_id},
           {"query_frame_id", meta[q].frame_id},
           {"pos_video_id", meta[e.row].video_id},
           {"pos_frame_id", meta[e.row].frame_id},
           {"distance", e.distance}};
    out << j.dump() << '\n';
  }
}

void save_pairs_file(const PairTable& table, const MiningIndex& index,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  save_pairs(table, index, out);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

PairTable load_pairs(std::istream& in, const MiningIndex& index) {
  // First-occurrence lookup of (video_id, frame_id) -> row.
  std::unordered_map<std::string, std::size_t> lookup;
  const auto& meta = index.store().meta;
  auto key_of = [](const std::string& vid, std::int64_t frame) {
    return vid + '\x1f' + std::to_string(frame);
  };
  for (std::size_t i = meta.size(); i-- > 0;) {
    lookup[key_of(meta[i].video_id, meta[i].frame_id)] = i;
  }

  PairTable table;
  table.entries.resize(index.count());
  std::vector<bool> seen(index.count(), false);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("pair file line " + std::to_string(line_no) + ": " +
                               e.what());
    }
    const auto qit = lookup.find(
        key_of(j.at("query_video_id").get<std::string>(), j.at("query_frame_id").get<std::int64_t>()));
    const auto pit = lookup.find(
        key_of(j.at("pos_video_id").get<std::string>(), j.at("pos_frame_id").get<std::int64_t>()));
    if (qit == lookup.end() || pit == lookup.end())
      throw std::runtime_error("pair file line " + std::to_string(line_no) +
                               ": row not present in embedding store");
    table.entries[qit->second] = {pit->second, j.at("distance").get<double>()};
    seen[qit->second] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i])
      throw std::runtime_error("pair table does not cover row " + std::to_string(i) +
                               " (" + meta[i].video_id + ":" +
                               std::to_string(meta[i].frame_id) + ")");
  }
  return table;
}

PairTable load_pairs_file(const std::filesystem::path& path, const MiningIndex& index) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  return load_pairs(in, index);
}

}  // namespace simhand
