#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "simhand/types.hpp"

namespace simhand {

struct ParseIssue {
  std::size_t line_number = 0;  // 1-based
  std::string message;
};

struct ParseReport {
  std::size_t total_lines = 0;
  std::size_t accepted = 0;
  std::size_t dropped_low_score = 0;
  std::vector<ParseIssue> issues;
};

struct ParseOptions {
  /// When set, any malformed line aborts the parse instead of being skipped.
  bool strict = false;
  /// Records with detection_score below this are dropped (not an error).
  double min_score = 0.0;
};

/// Parses line-delimited JSON records. Malformed lines are collected into the
/// report (or fatal under strict). A duplicate (video_id, frame_id, hand) key
/// is always fatal.
RecordSet parse_records(std::istream& in, const ParseOptions& options = {},
                        ParseReport* report = nullptr);
RecordSet parse_records_file(const std::filesystem::path& path,
                             const ParseOptions& options = {},
                             ParseReport* report = nullptr);

void serialize_records(const RecordSet& set, std::ostream& out);
void serialize_records_file(const RecordSet& set, const std::filesystem::path& path);

/// Horizontal mirror of a left-hand record: x -> 1 - x, hand -> right.
/// Throws if the record is already right-handed.
KeypointRecord mirror_to_right(const KeypointRecord& record);

struct BalanceResult {
  RecordSet set;
  /// Row i of `set` came from `source_rows[i]` of the input; `mirrored[i]`
  /// marks rows that were left-hand crops converted to right. Lets callers
  /// co-transform any row-aligned artifact (e.g. an image archive).
  std::vector<std::size_t> source_rows;
  std::vector<bool> mirrored;
  bool empty_side = false;
};

/// Subsamples the majority hand side down to the minority count (seeded,
/// uniform), then mirrors every left record to right. Output preserves the
/// input row order of the kept records.
BalanceResult balance_hands(const RecordSet& set, std::uint64_t seed);

}  // namespace simhand
