#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "orca/model.hpp"
#include "orca/schema.hpp"

namespace orca {

struct ErrorPair {
  double mae = 0.0;
  double rmse = 0.0;
};

// Mean absolute and root-mean-square bin distance.
ErrorPair mae_rmse_class(std::span<const int> pred_bins, std::span<const int> true_bins);

struct ClassStats {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long support = 0;    // true count
  long predicted = 0;  // predicted count
};

struct ClassificationReport {
  double weighted_f1 = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  std::vector<ClassStats> per_class;
  std::vector<std::vector<long>> confusion;  // [true][pred]
};

// Absent classes count as 0 in macro averages; weighted F1 uses true support.
ClassificationReport classification_report(std::span<const int> pred_bins,
                                           std::span<const int> true_bins, int bin_count);

// Predicted bins are mapped to their median seconds.
ErrorPair mae_rmse_seconds(std::span<const int> pred_bins, std::span<const double> true_seconds,
                           const BinningSpec& spec);

// Rank AUC with ties counted as one half. Throws DataError("AUC undefined")
// when either class is missing.
double auc(std::span<const double> scores, std::span<const int> labels);
// As auc() but NaN instead of throwing.
double auc_or_nan(std::span<const double> scores, std::span<const int> labels);

// Splits instances into n_groups groups of near-equal size (±1) by ascending
// score; ties are broken by position.
std::vector<int> quantile_groups(std::span<const double> scores, int n_groups);

struct Heatmap {
  std::vector<std::vector<long>> counts;  // [ctr decile][bin]
  std::vector<long> row_totals;
  std::vector<long> col_totals;
  std::vector<double> decile_upper;  // largest score in each decile
  long total = 0;
};

Heatmap heatmap(std::span<const double> ctr_probs, std::span<const int> bins, int bin_count,
                int n_deciles = 10);
std::string heatmap_csv(const Heatmap& h);

struct ModerateMass {
  double pred_mass = 0.0;
  double true_mass = 0.0;
  std::optional<double> ratio;  // absent when true_mass is 0
};

ModerateMass moderate_mass(std::span<const int> pred_bins, std::span<const int> true_bins,
                           std::span<const int> moderate_set);
// {2,3,4,6} for eight bins, every interior bin otherwise.
std::vector<int> default_moderate_bins(int bin_count);
// Interior bins (not first or last) whose true mass is at least min_mass.
std::vector<int> interior_moderate_bins(std::span<const int> true_bins, int bin_count,
                                        double min_mass = 0.02);

struct CtrBias {
  std::vector<double> bias;  // mean(pred - true) per group
  std::vector<long> counts;
  std::vector<double> mean_ctr;
  double slope = 0.0;  // least squares of bias on group index, non-empty groups
};

CtrBias ctr_conditioned_bias(std::span<const double> ctr_probs, std::span<const int> pred_bins,
                             std::span<const int> true_bins, int n_groups = 10);
double least_squares_slope(std::span<const double> x, std::span<const double> y);
std::string bias_csv(const CtrBias& b);

struct MetricsReport {
  double mae_class = 0.0;
  double rmse_class = 0.0;
  double weighted_f1 = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double mae_seconds = 0.0;
  double rmse_seconds = 0.0;
  double auc = 0.0;
  long n_clicked = 0;
  long n_total = 0;
  ClassificationReport classes;
};

// Builds the report from predictions over `records`. Needs both click
// classes and at least one clicked record with dwell seconds.
MetricsReport compute_report(const Predictions& preds, std::span<const InteractionRecord> records,
                             const BinningSpec& spec);
MetricsReport evaluate(const OrcaModel& model, std::span<const InteractionRecord> records,
                       const BinningSpec& spec);
nlohmann::json to_json(const MetricsReport& r);

struct FeatureAblation {
  std::string field;
  double auc = 0.0;
  double auc_ablated = 0.0;
  double delta_auc = 0.0;
  double mae_class = 0.0;
  double mae_class_ablated = 0.0;
  double delta_mae_class = 0.0;
  bool post_click_candidate = false;
};

// Replaces the field with the unknown index and re-evaluates. Flagged when
// |delta AUC| < auc_threshold and |delta MAE_class| > mae_threshold.
FeatureAblation leave_one_feature_out(const OrcaModel& model,
                                      std::span<const InteractionRecord> records,
                                      const std::string& field_name, double auc_threshold = 0.005,
                                      double mae_threshold = 0.02);
nlohmann::json to_json(const FeatureAblation& a);

struct TTest {
  double t = 0.0;
  int df = 0;
  double p_value = 1.0;  // two-sided
  double mean_diff = 0.0;
};

// Paired two-sided t-test on a - b. Needs at least two pairs.
TTest paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace orca
