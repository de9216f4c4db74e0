#include "orca/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "orca/errors.hpp"
#include "orca/rng.hpp"

namespace orca {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

std::optional<std::int64_t> parse_int(const std::string& s) {
  std::int64_t v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

LoadResult load_csv(const std::filesystem::path& path, const FeatureSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path.string() + "' has no header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_line(line);
  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };

  std::vector<std::size_t> field_cols;
  for (const auto& f : schema.fields()) field_cols.push_back(column(f.name));
  const std::size_t clicked_col = column(kClickedColumn);
  const std::size_t dwell_col = column(kDwellColumn);
  std::optional<std::size_t> ts_col;
  if (schema.timestamp_column()) ts_col = column(*schema.timestamp_column());

  LoadResult result;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() < header.size()) {
      result.rejects.push_back({line_no, "expected " + std::to_string(header.size()) +
                                             " columns, got " +
                                             std::to_string(cells.size())});
      continue;
    }
    RawRecord rec;
    for (std::size_t c : field_cols) rec.values.push_back(cells[c]);

    const auto& clicked = cells[clicked_col];
    if (clicked != "0" && clicked != "1") {
      result.rejects.push_back({line_no, "clicked must be 0 or 1, got '" + clicked + "'"});
      continue;
    }
    rec.clicked = clicked == "1";

    const auto& dwell = cells[dwell_col];
    if (rec.clicked) {
      if (dwell.empty()) {
        result.rejects.push_back({line_no, "clicked row has blank dwell_seconds"});
        continue;
      }
      const auto v = parse_double(dwell);
      if (!v || !std::isfinite(*v) || *v < 0.0) {
        result.rejects.push_back({line_no, "invalid dwell_seconds '" + dwell + "'"});
        continue;
      }
      rec.dwell_seconds = *v;
    } else if (!dwell.empty()) {
      result.rejects.push_back({line_no, "unclicked row has dwell_seconds"});
      continue;
    }

    if (ts_col) {
      const auto ts = parse_int(cells[*ts_col]);
      if (!ts) {
        result.rejects.push_back({line_no, "invalid timestamp '" + cells[*ts_col] + "'"});
        continue;
      }
      rec.timestamp = *ts;
    }
    result.records.push_back(std::move(rec));
  }
  return result;
}

void write_csv(const std::filesystem::path& path, const FeatureSchema& schema,
               std::span<const RawRecord> records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  for (const auto& f : schema.fields()) out << f.name << ',';
  out << kClickedColumn << ',' << kDwellColumn;
  if (schema.timestamp_column()) out << ',' << *schema.timestamp_column();
  out << '\n';
  for (const auto& r : records) {
    if (r.values.size() != schema.size()) {
      throw DataError("record width does not match schema");
    }
    for (const auto& v : r.values) out << v << ',';
    out << (r.clicked ? '1' : '0') << ',';
    if (r.dwell_seconds) out << format_double(*r.dwell_seconds);
    if (schema.timestamp_column()) out << ',' << r.timestamp.value_or(0);
    out << '\n';
  }
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

Vocabulary::Vocabulary(std::vector<std::vector<std::string>> values_per_field)
    : values_(std::move(values_per_field)) {
  lookup_.resize(values_.size());
  for (std::size_t f = 0; f < values_.size(); ++f) {
    for (std::size_t i = 0; i < values_[f].size(); ++i) {
      if (!lookup_[f].emplace(values_[f][i], kFirstValueIndex + static_cast<int>(i)).second) {
        throw DataError("duplicate vocabulary value '" + values_[f][i] + "'");
      }
    }
  }
}

int Vocabulary::size(std::size_t field) const {
  return kFirstValueIndex + static_cast<int>(values_.at(field).size());
}

std::vector<int> Vocabulary::sizes() const {
  std::vector<int> out;
  for (std::size_t f = 0; f < values_.size(); ++f) out.push_back(size(f));
  return out;
}

int Vocabulary::encode(std::size_t field, const std::string& value) const {
  const auto& table = lookup_.at(field);
  auto it = table.find(value);
  return it == table.end() ? kUnknownIndex : it->second;
}

nlohmann::json Vocabulary::to_json() const { return values_; }

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  try {
    return Vocabulary(j.get<std::vector<std::vector<std::string>>>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed vocabulary: ") + e.what());
  }
}

Vocabulary build_vocab(std::span<const RawRecord> records, const FeatureSchema& schema,
                       std::int64_t min_count) {
  std::vector<std::map<std::string, std::int64_t>> counts(schema.size());
  for (const auto& r : records) {
    if (r.values.size() != schema.size()) throw DataError("record width does not match schema");
    for (std::size_t f = 0; f < schema.size(); ++f) ++counts[f][r.values[f]];
  }
  std::vector<std::vector<std::string>> values(schema.size());
  for (std::size_t f = 0; f < schema.size(); ++f) {
    std::vector<std::pair<std::string, std::int64_t>> entries(counts[f].begin(),
                                                              counts[f].end());
    // std::map iteration is value-ascending, so a stable sort on count keeps
    // the (count desc, value asc) order.
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [value, count] : entries) {
      if (count >= min_count) values[f].push_back(value);
    }
  }
  return Vocabulary(std::move(values));
}

std::vector<InteractionRecord> encode_records(std::span<const RawRecord> records,
                                              const Vocabulary& vocab,
                                              const BinningSpec* binning) {
  std::vector<InteractionRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (r.values.size() != vocab.field_count()) {
      throw DataError("record width does not match vocabulary");
    }
    InteractionRecord rec;
    rec.feature_ids.reserve(r.values.size());
    for (std::size_t f = 0; f < r.values.size(); ++f) {
      rec.feature_ids.push_back(vocab.encode(f, r.values[f]));
    }
    rec.clicked = r.clicked;
    if (r.clicked) {
      if (!r.dwell_seconds) throw DataError("clicked record without dwell");
      rec.dwell_seconds = r.dwell_seconds;
      if (binning != nullptr) rec.dwell_bin = assign_bin(*r.dwell_seconds, *binning);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

SplitIndices split_indices(std::size_t n, const SplitRatios& ratios,
                           SplitStrategy strategy, std::uint64_t seed,
                           std::span<const std::optional<std::int64_t>> timestamps) {
  if (!(ratios.train > 0.0 && ratios.val > 0.0 && ratios.test > 0.0)) {
    throw ConfigError("split ratios must be positive");
  }
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (strategy == SplitStrategy::kRandom) {
    auto rng = make_rng(seed, "split");
    std::shuffle(order.begin(), order.end(), rng);
  } else {
    if (timestamps.size() != n) throw ConfigError("by-time split needs a timestamp column");
    for (const auto& ts : timestamps) {
      if (!ts) throw ConfigError("by-time split needs a timestamp column");
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return *timestamps[a] < *timestamps[b];
    });
  }
  const auto n_train = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.train)));
  const auto n_val = std::min<std::size_t>(
      n - n_train,
      static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.val)));
  SplitIndices out;
  out.train.assign(order.begin(), order.begin() + n_train);
  out.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  out.test.assign(order.begin() + n_train + n_val, order.end());
  return out;
}

RawSplit split(std::span<const RawRecord> records, const SplitRatios& ratios,
               SplitStrategy strategy, std::uint64_t seed) {
  std::vector<std::optional<std::int64_t>> ts;
  ts.reserve(records.size());
  for (const auto& r : records) ts.push_back(r.timestamp);
  const auto idx = split_indices(records.size(), ratios, strategy, seed, ts);
  auto gather = [&](const std::vector<std::size_t>& ids) {
    std::vector<RawRecord> out;
    out.reserve(ids.size());
    for (auto i : ids) out.push_back(records[i]);
    return out;
  };
  return {gather(idx.train), gather(idx.val), gather(idx.test)};
}

SplitStrategy parse_split_strategy(const std::string& s) {
  if (s == "random") return SplitStrategy::kRandom;
  if (s == "by-time") return SplitStrategy::kByTime;
  throw ConfigError("unknown split strategy '" + s + "'");
}

std::string to_string(SplitStrategy s) {
  return s == SplitStrategy::kRandom ? "random" : "by-time";
}

}  // namespace orca
