#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace orca {

// Reserved embedding rows present in every field's vocabulary.
inline constexpr int kUnknownIndex = 0;
inline constexpr int kMaskIndex = 1;
inline constexpr int kFirstValueIndex = 2;

enum class FieldKind { kCategorical, kNumericBucketized };

struct FieldSpec {
  std::string name;
  FieldKind kind = FieldKind::kCategorical;
  int vocab_size = kFirstValueIndex;
  bool is_post_click = false;
};

// Ordered feature fields. Post-click fields are the ones masked by the
// counterfactual intervention; at least one field must be pre-click.
class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<FieldSpec> fields,
                         std::optional<std::string> timestamp_column = {});

  const std::vector<FieldSpec>& fields() const { return fields_; }
  std::size_t size() const { return fields_.size(); }
  const FieldSpec& field(std::size_t i) const { return fields_.at(i); }
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::vector<std::size_t> post_click_indices() const;
  const std::optional<std::string>& timestamp_column() const {
    return timestamp_column_;
  }

  // Same fields with vocabulary sizes replaced (one per field).
  FeatureSchema with_vocab_sizes(std::span<const int> sizes) const;

  nlohmann::json to_json() const;
  static FeatureSchema from_json(const nlohmann::json& j);

 private:
  std::vector<FieldSpec> fields_;
  std::optional<std::string> timestamp_column_;
};

// One impression. dwell_seconds / dwell_bin are present only when clicked.
struct InteractionRecord {
  std::vector<int> feature_ids;
  bool clicked = false;
  std::optional<double> dwell_seconds;
  std::optional<int> dwell_bin;

  friend bool operator==(const InteractionRecord&,
                         const InteractionRecord&) = default;
};

inline constexpr int kDefaultBinCount = 8;
inline constexpr double kDefaultLogOffset = 1.0;

// Equal-width bins over log(t + log_offset). Bin k covers
// [boundaries[k-1], boundaries[k]) with the outer bins open-ended.
class BinningSpec {
 public:
  BinningSpec() = default;  // zero bins until assigned
  BinningSpec(std::vector<double> boundaries, std::vector<double> medians,
              double log_offset);

  int bin_count() const { return static_cast<int>(medians_.size()); }
  const std::vector<double>& boundaries() const { return boundaries_; }
  const std::vector<double>& medians() const { return medians_; }
  double log_offset() const { return log_offset_; }

  // {"M":…, "log_offset":…, "boundaries":[…], "medians":[…]}
  nlohmann::json to_json() const;
  static BinningSpec from_json(const nlohmann::json& j);

 private:
  std::vector<double> boundaries_;
  std::vector<double> medians_;
  double log_offset_ = kDefaultLogOffset;
};

// Fits boundaries on the training dwell times only. Empty bins receive the
// interval midpoint mapped back to seconds as their median.
BinningSpec build_binning(std::span<const double> train_dwell_seconds,
                          int bin_count = kDefaultBinCount,
                          double log_offset = kDefaultLogOffset);

int assign_bin(double seconds, const BinningSpec& spec);
double bin_median(int bin, const BinningSpec& spec);

// All violations of the schema and record invariants; empty when valid.
// With a binning spec, clicked records must also carry the matching bin.
std::vector<std::string> validate_record(const FeatureSchema& schema,
                                         const InteractionRecord& record,
                                         const BinningSpec* spec = nullptr);

}  // namespace orca
