#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "orca/schema.hpp"

namespace orca {

// One CSV row before vocabulary encoding.
struct RawRecord {
  std::vector<std::string> values;  // schema order
  bool clicked = false;
  std::optional<double> dwell_seconds;
  std::optional<std::int64_t> timestamp;

  friend bool operator==(const RawRecord&, const RawRecord&) = default;
};

struct RejectedRow {
  std::size_t line = 0;  // 1-based, header is line 1
  std::string reason;
};

struct LoadResult {
  std::vector<RawRecord> records;
  std::vector<RejectedRow> rejects;
};

inline constexpr const char* kClickedColumn = "clicked";
inline constexpr const char* kDwellColumn = "dwell_seconds";

// Columns may appear in any order; extra columns are ignored.
LoadResult load_csv(const std::filesystem::path& path, const FeatureSchema& schema);

void write_csv(const std::filesystem::path& path, const FeatureSchema& schema,
               std::span<const RawRecord> records);

// Per-field value -> index map. Index 0 is unknown, 1 is MASK; raw values
// start at 2, ordered by (count desc, value asc).
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::vector<std::string>> values_per_field);

  std::size_t field_count() const { return values_.size(); }
  int size(std::size_t field) const;
  std::vector<int> sizes() const;
  int encode(std::size_t field, const std::string& value) const;
  const std::vector<std::string>& values(std::size_t field) const {
    return values_.at(field);
  }

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

 private:
  std::vector<std::vector<std::string>> values_;
  std::vector<std::unordered_map<std::string, int>> lookup_;
};

// Values seen fewer than min_count times map to unknown.
Vocabulary build_vocab(std::span<const RawRecord> records, const FeatureSchema& schema,
                       std::int64_t min_count);

// Binning may be null, in which case dwell_bin stays empty.
std::vector<InteractionRecord> encode_records(std::span<const RawRecord> records,
                                              const Vocabulary& vocab,
                                              const BinningSpec* binning);

enum class SplitStrategy { kRandom, kByTime };

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Disjoint and exhaustive. kByTime orders by timestamp (stable) and requires
// a timestamp for every record.
SplitIndices split_indices(std::size_t n, const SplitRatios& ratios,
                           SplitStrategy strategy, std::uint64_t seed,
                           std::span<const std::optional<std::int64_t>> timestamps = {});

struct RawSplit {
  std::vector<RawRecord> train;
  std::vector<RawRecord> val;
  std::vector<RawRecord> test;
};

RawSplit split(std::span<const RawRecord> records, const SplitRatios& ratios,
               SplitStrategy strategy, std::uint64_t seed);

SplitStrategy parse_split_strategy(const std::string& s);
std::string to_string(SplitStrategy s);

}  // namespace orca
