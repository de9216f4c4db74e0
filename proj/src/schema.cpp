#include "orca/schema.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "orca/errors.hpp"

namespace orca {
namespace {

std::string kind_name(FieldKind kind) {
  return kind == FieldKind::kCategorical ? "categorical" : "numeric-bucketized";
}

FieldKind parse_kind(const std::string& s) {
  if (s == "categorical") return FieldKind::kCategorical;
  if (s == "numeric-bucketized") return FieldKind::kNumericBucketized;
  throw ConfigError("unknown field kind '" + s + "'");
}

double median_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

FeatureSchema::FeatureSchema(std::vector<FieldSpec> fields,
                             std::optional<std::string> timestamp_column)
    : fields_(std::move(fields)), timestamp_column_(std::move(timestamp_column)) {
  if (fields_.empty()) throw ConfigError("schema has no fields");
  std::set<std::string> names;
  bool any_pre_click = false;
  for (const auto& f : fields_) {
    if (f.name.empty()) throw ConfigError("schema field with empty name");
    if (!names.insert(f.name).second) {
      throw ConfigError("duplicate schema field '" + f.name + "'");
    }
    if (f.vocab_size < kFirstValueIndex) {
      throw ConfigError("field '" + f.name + "' has vocab_size < 2");
    }
    any_pre_click = any_pre_click || !f.is_post_click;
  }
  if (!any_pre_click) {
    throw ConfigError("schema needs at least one pre-click field");
  }
}

std::optional<std::size_t> FeatureSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < fields_.size(); ++i) {
    if (fields_[i].name == name) return i;
  }
  return std::nullopt;
}

std::vector<std::size_t> FeatureSchema::post_click_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fields_.size(); ++i) {
    if (fields_[i].is_post_click) out.push_back(i);
  }
  return out;
}

FeatureSchema FeatureSchema::with_vocab_sizes(std::span<const int> sizes) const {
  if (sizes.size() != fields_.size()) {
    throw ConfigError("vocab size count does not match schema");
  }
  auto fields = fields_;
  for (std::size_t i = 0; i < fields.size(); ++i) fields[i].vocab_size = sizes[i];
  return FeatureSchema(std::move(fields), timestamp_column_);
}

nlohmann::json FeatureSchema::to_json() const {
  nlohmann::json fields = nlohmann::json::array();
  for (const auto& f : fields_) {
    fields.push_back({{"name", f.name},
                      {"kind", kind_name(f.kind)},
                      {"vocab_size", f.vocab_size},
                      {"is_post_click", f.is_post_click}});
  }
  nlohmann::json j = {{"fields", fields}};
  j["timestamp_column"] =
      timestamp_column_ ? nlohmann::json(*timestamp_column_) : nlohmann::json();
  return j;
}

FeatureSchema FeatureSchema::from_json(const nlohmann::json& j) {
  try {
    std::vector<FieldSpec> fields;
    for (const auto& f : j.at("fields")) {
      FieldSpec spec;
      spec.name = f.at("name").get<std::string>();
      spec.kind = parse_kind(f.value("kind", std::string("categorical")));
      spec.vocab_size = f.value("vocab_size", kFirstValueIndex);
      spec.is_post_click = f.value("is_post_click", false);
      fields.push_back(std::move(spec));
    }
    std::optional<std::string> ts;
    if (j.contains("timestamp_column") && !j["timestamp_column"].is_null()) {
      ts = j["timestamp_column"].get<std::string>();
    }
    return FeatureSchema(std::move(fields), std::move(ts));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed schema: ") + e.what());
  }
}

BinningSpec::BinningSpec(std::vector<double> boundaries,
                         std::vector<double> medians, double log_offset)
    : boundaries_(std::move(boundaries)),
      medians_(std::move(medians)),
      log_offset_(log_offset) {
  if (medians_.size() < 2) throw ConfigError("binning needs at least 2 bins");
  if (boundaries_.size() + 1 != medians_.size()) {
    throw ConfigError("binning needs exactly M-1 boundaries");
  }
  if (!(log_offset_ >= 0.0)) throw ConfigError("log_offset must be >= 0");
  for (std::size_t i = 1; i < boundaries_.size(); ++i) {
    if (!(boundaries_[i] > boundaries_[i - 1])) {
      throw ConfigError("bin boundaries must be strictly increasing");
    }
  }
}

nlohmann::json BinningSpec::to_json() const {
  return {{"M", bin_count()},
          {"log_offset", log_offset_},
          {"boundaries", boundaries_},
          {"medians", medians_}};
}

BinningSpec BinningSpec::from_json(const nlohmann::json& j) {
  try {
    BinningSpec spec(j.at("boundaries").get<std::vector<double>>(),
                     j.at("medians").get<std::vector<double>>(),
                     j.at("log_offset").get<double>());
    if (j.at("M").get<int>() != spec.bin_count()) {
      throw ConfigError("binning M disagrees with medians");
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed binning: ") + e.what());
  }
}

BinningSpec build_binning(std::span<const double> train_dwell_seconds,
                          int bin_count, double log_offset) {
  if (train_dwell_seconds.empty()) throw DataError("no dwell observations");
  if (bin_count < 2) throw ConfigError("bin count must be >= 2");
  if (!(log_offset >= 0.0)) throw ConfigError("log_offset must be >= 0");

  std::vector<double> logs;
  logs.reserve(train_dwell_seconds.size());
  for (double t : train_dwell_seconds) {
    if (!(t >= 0.0)) throw DataError("negative dwell time");
    if (log_offset == 0.0 && t == 0.0) {
      throw DataError("zero dwell time needs log_offset > 0");
    }
    logs.push_back(std::log(t + log_offset));
  }
  const auto [lo_it, hi_it] = std::minmax_element(logs.begin(), logs.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) throw DataError("degenerate range");

  const double width = (hi - lo) / bin_count;
  std::vector<double> boundaries(bin_count - 1);
  for (int k = 0; k < bin_count - 1; ++k) boundaries[k] = lo + (k + 1) * width;

  std::vector<std::vector<double>> members(bin_count);
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const auto k = std::upper_bound(boundaries.begin(), boundaries.end(), logs[i]) -
                   boundaries.begin();
    members[k].push_back(train_dwell_seconds[i]);
  }
  std::vector<double> medians(bin_count);
  for (int k = 0; k < bin_count; ++k) {
    if (!members[k].empty()) {
      medians[k] = median_of(std::move(members[k]));
    } else {
      medians[k] = std::exp(lo + (k + 0.5) * width) - log_offset;
    }
  }
  return BinningSpec(std::move(boundaries), std::move(medians), log_offset);
}

int assign_bin(double seconds, const BinningSpec& spec) {
  if (!(seconds >= 0.0)) throw DataError("negative dwell time");
  const double x = std::log(seconds + spec.log_offset());
  const auto& b = spec.boundaries();
  return static_cast<int>(std::upper_bound(b.begin(), b.end(), x) - b.begin());
}

double bin_median(int bin, const BinningSpec& spec) {
  if (bin < 0 || bin >= spec.bin_count()) {
    throw std::out_of_range("bin index " + std::to_string(bin) + " out of range");
  }
  return spec.medians()[bin];
}

std::vector<std::string> validate_record(const FeatureSchema& schema,
                                         const InteractionRecord& record,
                                         const BinningSpec* spec) {
  std::vector<std::string> violations;
  if (record.feature_ids.size() != schema.size()) {
    violations.push_back("expected " + std::to_string(schema.size()) +
                         " feature ids, got " +
                         std::to_string(record.feature_ids.size()));
  }
  const std::size_t n = std::min(record.feature_ids.size(), schema.size());
  for (std::size_t i = 0; i < n; ++i) {
    const int id = record.feature_ids[i];
    const auto& f = schema.field(i);
    if (id < 0 || id >= f.vocab_size) {
      violations.push_back("field '" + f.name + "' index " + std::to_string(id) +
                           " outside [0, " + std::to_string(f.vocab_size) + ")");
    }
  }
  if (!record.clicked) {
    if (record.dwell_seconds) violations.push_back("unclicked record has dwell_seconds");
    if (record.dwell_bin) violations.push_back("unclicked record has dwell_bin");
    return violations;
  }
  if (!record.dwell_seconds) {
    violations.push_back("clicked record lacks dwell_seconds");
  } else if (!(*record.dwell_seconds >= 0.0)) {
    violations.push_back("dwell_seconds is negative");
  }
  if (spec != nullptr) {
    if (!record.dwell_bin) {
      violations.push_back("clicked record lacks dwell_bin");
    } else if (record.dwell_seconds && *record.dwell_seconds >= 0.0 &&
               *record.dwell_bin != assign_bin(*record.dwell_seconds, *spec)) {
      violations.push_back("dwell_bin disagrees with dwell_seconds");
    }
  }
  return violations;
}

}  // namespace orca
