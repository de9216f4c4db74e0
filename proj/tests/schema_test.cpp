#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "checks.hpp"
#include "orca/errors.hpp"
#include "orca/rng.hpp"
#include "orca/schema.hpp"

namespace orca {
namespace {

const double e = std::exp(1.0);

FeatureSchema two_field_schema() {
  return FeatureSchema({{"user", FieldKind::kCategorical, 5, false},
                        {"depth", FieldKind::kNumericBucketized, 4, true}});
}

TEST(FeatureSchema, RejectsDuplicateNames) {
  EXPECT_THROW(FeatureSchema({{"a", FieldKind::kCategorical, 3, false},
                              {"a", FieldKind::kCategorical, 3, false}}),
               ConfigError);
}

TEST(FeatureSchema, RejectsTinyVocabulary) {
  EXPECT_THROW(FeatureSchema({{"a", FieldKind::kCategorical, 1, false}}), ConfigError);
}

TEST(FeatureSchema, NeedsAPreClickField) {
  EXPECT_THROW(FeatureSchema({{"z", FieldKind::kCategorical, 3, true}}), ConfigError);
}

TEST(FeatureSchema, JsonRoundTrip) {
  const FeatureSchema s({{"u", FieldKind::kCategorical, 7, false},
                         {"z", FieldKind::kNumericBucketized, 4, true}},
                        std::string("ts"));
  const auto back = FeatureSchema::from_json(s.to_json());
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.field(1).name, "z");
  EXPECT_EQ(back.field(1).kind, FieldKind::kNumericBucketized);
  EXPECT_TRUE(back.field(1).is_post_click);
  EXPECT_EQ(back.field(0).vocab_size, 7);
  EXPECT_EQ(back.timestamp_column(), "ts");
  EXPECT_EQ(back.post_click_indices(), std::vector<std::size_t>{1});
}

TEST(BuildBinning, EmptyInput) {
  EXPECT_THROW(
      {
        try {
          build_binning({}, 8);
        } catch (const DataError& err) {
          EXPECT_STREQ(err.what(), "no dwell observations");
          throw;
        }
      },
      DataError);
}

TEST(BuildBinning, DegenerateRange) {
  const std::vector<double> t(5, 4.0);
  EXPECT_THROW(
      {
        try {
          build_binning(t, 2);
        } catch (const DataError& err) {
          EXPECT_STREQ(err.what(), "degenerate range");
          throw;
        }
      },
      DataError);
}

TEST(BuildBinning, TooFewBins) {
  const std::vector<double> t{1.0, 2.0};
  EXPECT_THROW(build_binning(t, 1), ConfigError);
}

TEST(BuildBinning, HandComputedTwoBins) {
  const std::vector<double> t{1.0, e, e * e, e * e * e};
  const auto spec = build_binning(t, 2, 0.0);
  ASSERT_EQ(spec.boundaries().size(), 1u);
  EXPECT_NEAR(spec.boundaries()[0], 1.5, 1e-12);
  EXPECT_NEAR(spec.medians()[0], (1.0 + e) / 2.0, 1e-12);
  EXPECT_NEAR(spec.medians()[1], (e * e + e * e * e) / 2.0, 1e-12);
  EXPECT_NEAR(spec.medians()[0], 1.859, 1e-3);
  EXPECT_NEAR(spec.medians()[1], 13.737, 1e-3);
  EXPECT_EQ(assign_bin(1.0, spec), 0);
  EXPECT_EQ(assign_bin(e, spec), 0);
  EXPECT_EQ(assign_bin(e * e, spec), 1);
  EXPECT_NEAR(bin_median(0, spec), 1.859, 1e-3);
}

TEST(BuildBinning, EightBinsOnLogNormalAllNonEmpty) {
  auto rng = make_rng(3, "test.lognormal");
  std::vector<double> t;
  for (int i = 0; i < 10000; ++i) t.push_back(std::exp(3.0 + standard_normal(rng)));
  const auto spec = build_binning(t);
  ASSERT_EQ(spec.bin_count(), 8);
  std::vector<int> counts(8, 0);
  for (double x : t) ++counts[assign_bin(x, spec)];
  for (int k = 0; k < 8; ++k) EXPECT_GT(counts[k], 0) << "bin " << k;
}

TEST(AssignBin, BoundaryGoesUp) {
  const std::vector<double> t{0.0, 10.0, 100.0};
  const auto spec = build_binning(t, 4);
  const double b0 = spec.boundaries()[0];
  // Choose seconds so that log(t + 1) is the boundary itself.
  const BinningSpec exact({b0, spec.boundaries()[1], spec.boundaries()[2]}, spec.medians(), 1.0);
  const double at = std::exp(b0) - 1.0;
  const int k = assign_bin(at, exact);
  EXPECT_EQ(k, std::log(at + 1.0) >= b0 ? 1 : 0);
  const BinningSpec simple({std::log(2.0)}, {0.5, 3.0}, 1.0);
  EXPECT_EQ(assign_bin(1.0, simple), 1);
  EXPECT_EQ(assign_bin(0.999, simple), 0);
}

TEST(AssignBin, ZeroSecondsMapsToFirstBin) {
  const BinningSpec spec({0.5, 1.0, 2.0}, {0.2, 1.0, 3.0, 9.0}, 1.0);
  EXPECT_EQ(assign_bin(0.0, spec), 0);
}

TEST(AssignBin, NegativeIsAnError) {
  const BinningSpec spec({0.5}, {0.2, 3.0}, 1.0);
  EXPECT_THROW(assign_bin(-0.1, spec), DataError);
}

TEST(BinMedian, OutOfRange) {
  const BinningSpec spec({0.5}, {0.2, 3.0}, 1.0);
  EXPECT_THROW(bin_median(2, spec), std::out_of_range);
  EXPECT_THROW(bin_median(-1, spec), std::out_of_range);
}

TEST(BinMedian, EmptyBinFallback) {
  // 1 and 1000 with four bins leave the middle bins empty.
  const std::vector<double> t{1.0, 1000.0};
  const auto spec = build_binning(t, 4);
  const double lo = std::log(2.0);
  const double w = (std::log(1001.0) - lo) / 4.0;
  EXPECT_NEAR(spec.medians()[1], std::exp(lo + 1.5 * w) - 1.0, 1e-9);
  EXPECT_NEAR(spec.medians()[2], std::exp(lo + 2.5 * w) - 1.0, 1e-9);
}

TEST(BinningSpec, JsonRoundTrip) {
  const std::vector<double> t{1.0, 5.0, 20.0, 300.0};
  const auto spec = build_binning(t, 3);
  const auto j = spec.to_json();
  EXPECT_EQ(j.at("M"), 3);
  EXPECT_TRUE(j.contains("log_offset"));
  const auto back = BinningSpec::from_json(j);
  EXPECT_EQ(back.boundaries(), spec.boundaries());
  EXPECT_EQ(back.medians(), spec.medians());
}

TEST(BinningProperties, ThousandRandomizedSpecs) {
  const auto r = checks::binning_properties(1000, 20240611);
  EXPECT_EQ(r.specs, 1000);
  EXPECT_EQ(r.failures, 0) << r.first_failure;
  EXPECT_LT(r.max_width_spread, 1e-9);
}

TEST(ValidateRecord, ValidRecordHasNoViolations) {
  const auto schema = two_field_schema();
  InteractionRecord r{{2, 3}, true, 12.0, std::nullopt};
  EXPECT_TRUE(validate_record(schema, r).empty());
  InteractionRecord u{{0, 1}, false, std::nullopt, std::nullopt};
  EXPECT_TRUE(validate_record(schema, u).empty());
}

TEST(ValidateRecord, UnclickedWithDwell) {
  const auto schema = two_field_schema();
  InteractionRecord r{{2, 3}, false, 5.0, std::nullopt};
  EXPECT_EQ(validate_record(schema, r).size(), 1u);
}

TEST(ValidateRecord, IndexEqualToVocabSize) {
  const auto schema = two_field_schema();
  InteractionRecord r{{5, 3}, false, std::nullopt, std::nullopt};
  EXPECT_EQ(validate_record(schema, r).size(), 1u);
}

TEST(ValidateRecord, ReportsEveryViolation) {
  const auto schema = two_field_schema();
  InteractionRecord r{{9, -1}, false, 5.0, 2};
  EXPECT_EQ(validate_record(schema, r).size(), 4u);
}

TEST(ValidateRecord, BinMustMatchSeconds) {
  const auto schema = two_field_schema();
  const BinningSpec spec({std::log(11.0)}, {3.0, 30.0}, 1.0);
  InteractionRecord r{{2, 2}, true, 50.0, 0};
  EXPECT_EQ(validate_record(schema, r, &spec).size(), 1u);
  r.dwell_bin = 1;
  EXPECT_TRUE(validate_record(schema, r, &spec).empty());
}

}  // namespace
}  // namespace orca
