#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "simhand/embed.hpp"

namespace simhand {

/// Immutable search structure over an EmbeddingStore: rows regrouped
/// contiguously by video so cross-video scans can skip the query's own group.
/// Video ordinals follow first appearance order in the store.
class MiningIndex {
 public:
  explicit MiningIndex(EmbeddingStore store);

  const EmbeddingStore& store() const { return store_; }
  std::size_t count() const { return store_.count(); }
  int dim() const { return store_.dim; }
  std::size_t video_count() const { return group_begin_.size() - 1; }
  std::uint32_t video_of(std::size_t row) const { return video_of_[row]; }
  const std::string& video_id(std::uint32_t ordinal) const { return video_ids_[ordinal]; }

  /// Grouped position -> original row id (a bijection).
  const std::vector<std::size_t>& grouped_to_row() const { return grouped_to_row_; }
  std::size_t group_begin(std::uint32_t ordinal) const { return group_begin_[ordinal]; }
  std::size_t group_end(std::uint32_t ordinal) const { return group_begin_[ordinal + 1]; }
  const float* grouped_row(std::size_t pos) const {
    return grouped_data_.data() + pos * static_cast<std::size_t>(store_.dim);
  }
  std::int64_t frame_of(std::size_t row) const { return store_.meta[row].frame_id; }

  /// First row whose metadata matches (video_id, frame_id), or npos.
  std::size_t find_row(const std::string& video_id, std::int64_t frame_id) const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  EmbeddingStore store_;
  std::vector<std::string> video_ids_;
  std::vector<std::uint32_t> video_of_;      // row -> ordinal
  std::vector<std::size_t> group_begin_;     // ordinal -> offset, +1 sentinel
  std::vector<std::size_t> grouped_to_row_;  // grouped pos -> row
  std::vector<float> grouped_data_;
};

MiningIndex build_index(EmbeddingStore store);

struct Neighbor {
  std::size_t row = 0;
  double distance = 0.0;
};

/// Squared Euclidean distance between two embedding rows, accumulated in
/// doubles in fixed coordinate order. Every ranking decision in this module
/// reduces to this function, which makes results reproducible by any direct
/// rescan of the stored embeddings.
double squared_distance(const float* a, const float* b, int dim);

/// Nearest cross-video row (ties: smallest video ordinal, then frame_id, then
/// row id). Throws if no row exists outside the query's video.
Neighbor mine_positive(const MiningIndex& index, std::size_t query_row);

struct TopkResult {
  std::vector<Neighbor> entries;  // non-decreasing distance
  bool truncated = false;         // fewer than k cross-video candidates existed
};

TopkResult topk(const MiningIndex& index, std::size_t query_row, std::size_t k);

struct PairTable {
  std::vector<Neighbor> entries;  // query row -> positive
};

/// Top-1 positive for every row. Blocked over queries x candidates; output is
/// identical for any thread count.
PairTable mine_all(const MiningIndex& index, int threads = 0);

/// K-th ranked cross-video neighbor for every row (rank 1 == mine_all).
/// Rows with fewer than `rank` candidates get the last available one.
PairTable mine_rank(const MiningIndex& index, std::size_t rank, int threads = 0);

void save_pairs(const PairTable& table, const MiningIndex& index, std::ostream& out);
void save_pairs_file(const PairTable& table, const MiningIndex& index,
                     const std::filesystem::path& path);

/// Resolves pair-file lines back to row ids against `index` metadata.
PairTable load_pairs(std::istream& in, const MiningIndex& index);
PairTable load_pairs_file(const std::filesystem::path& path, const MiningIndex& index);

}  // namespace simhand
