#include <gtest/gtest.h>

#include <cmath>

#include "checks.hpp"
#include "orca/commands.hpp"
#include "orca/errors.hpp"
#include "orca/metrics.hpp"
#include "orca/scm.hpp"

namespace orca {
namespace {

TEST(MaeRmseClass, Examples) {
  const std::vector<int> a{0, 2}, b{1, 2};
  const auto same = mae_rmse_class(a, a);
  EXPECT_EQ(same.mae, 0.0);
  EXPECT_EQ(same.rmse, 0.0);
  const auto e = mae_rmse_class(a, b);
  EXPECT_DOUBLE_EQ(e.mae, 0.5);
  EXPECT_NEAR(e.rmse, 0.7071, 1e-4);
  EXPECT_THROW(mae_rmse_class({}, {}), DataError);
}

TEST(MaeRmseClass, LoopOracleOnAThousandPairs) {
  std::mt19937_64 rng(5);
  std::vector<int> p(1000), t(1000);
  std::vector<double> pd(1000), td(1000);
  for (int i = 0; i < 1000; ++i) {
    p[i] = static_cast<int>(rng() % 8);
    t[i] = static_cast<int>(rng() % 8);
    pd[i] = p[i];
    td[i] = t[i];
  }
  const auto e = mae_rmse_class(p, t);
  const auto o = checks::error_loop(pd, td);
  EXPECT_NEAR(e.mae, o.mae, 1e-12);
  EXPECT_NEAR(e.rmse, o.rmse, 1e-12);
  EXPECT_LE(e.mae, e.rmse);
  EXPECT_LE(e.rmse, 7.0);
}

TEST(ClassificationReport, Examples) {
  const std::vector<int> all{0, 1, 2, 3};
  const auto perfect = classification_report(all, all, 4);
  EXPECT_EQ(perfect.weighted_f1, 1.0);
  EXPECT_EQ(perfect.macro_precision, 1.0);
  EXPECT_EQ(perfect.macro_recall, 1.0);

  const std::vector<int> ones(5, 1);
  const auto single = classification_report(ones, ones, 4);
  EXPECT_EQ(single.weighted_f1, 1.0);
  EXPECT_EQ(single.macro_recall, 0.25);

  // Confusion [[2,1],[0,3]] (rows true, columns predicted).
  const std::vector<int> truth{0, 0, 0, 1, 1, 1}, pred{0, 0, 1, 1, 1, 1};
  const auto r = classification_report(pred, truth, 2);
  EXPECT_EQ(r.confusion, (std::vector<std::vector<long>>{{2, 1}, {0, 3}}));
  EXPECT_DOUBLE_EQ(r.macro_precision, 0.875);
  EXPECT_EQ(r.per_class[1].support, 3);
  EXPECT_EQ(r.per_class[1].predicted, 4);
}

TEST(MaeRmseSeconds, Examples) {
  const BinningSpec spec({std::log(11.0)}, {10.0, 50.0}, 1.0);
  const std::vector<int> p{0};
  const auto e = mae_rmse_seconds(p, std::vector<double>{14.0}, spec);
  EXPECT_EQ(e.mae, 4.0);
  EXPECT_EQ(e.rmse, 4.0);
  const auto z = mae_rmse_seconds(std::vector<int>{0, 1}, std::vector<double>{10.0, 50.0}, spec);
  EXPECT_EQ(z.mae, 0.0);
  EXPECT_EQ(z.rmse, 0.0);
}

TEST(Auc, Examples) {
  const std::vector<int> y{0, 0, 1, 1};
  EXPECT_EQ(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, y), 1.0);
  EXPECT_EQ(auc(std::vector<double>(4, 0.3), y), 0.5);
  EXPECT_EQ(auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, y), 0.0);
  try {
    auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("AUC undefined"), std::string::npos);
  }
  EXPECT_TRUE(std::isnan(auc_or_nan(std::vector<double>{0.1}, std::vector<int>{0})));
}

TEST(Auc, TwentyRandomScoresMatchPairCounting) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> s(20);
  std::vector<int> y(20);
  for (int i = 0; i < 20; ++i) {
    s[i] = unit(rng);
    y[i] = i % 3 == 0;
  }
  EXPECT_NEAR(auc(s, y), checks::auc_pairs(s, y), 1e-12);
}

TEST(MetricOracles, HundredRandomizedCases) {
  const auto r = checks::metric_oracles(100, 2024);
  EXPECT_EQ(r.cases, 100);
  EXPECT_LE(r.auc, 1e-12);
  EXPECT_LE(r.class_errors, 1e-12);
  EXPECT_LE(r.report, 1e-12);
  EXPECT_LE(r.seconds, 1e-9);
}

TEST(QuantileGroups, EvenPartition) {
  for (int n : {10, 23, 101, 1000}) {
    const std::vector<double> uniform(n, 0.5);
    const auto g = quantile_groups(uniform, 10);
    std::vector<int> counts(10, 0);
    for (int x : g) ++counts[x];
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    EXPECT_LE(*hi - *lo, 1) << n;
  }
}

TEST(Heatmap, ConservationAndMarginals) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> p(257);
  std::vector<int> b(257);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = unit(rng);
    b[i] = static_cast<int>(rng() % 8);
  }
  const auto h = heatmap(p, b, 8);
  EXPECT_EQ(h.total, 257);
  long sum = 0;
  for (std::size_t r = 0; r < h.counts.size(); ++r) {
    long row = 0;
    for (long c : h.counts[r]) row += c;
    EXPECT_EQ(row, h.row_totals[r]);
    sum += row;
  }
  EXPECT_EQ(sum, 257);
  const auto csv = heatmap_csv(h);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 12);
}

TEST(ModerateMass, Examples) {
  const std::vector<int> t{0, 2, 3, 7, 6};
  const auto same = moderate_mass(t, t, default_moderate_bins(8));
  EXPECT_EQ(same.ratio, 1.0);
  const std::vector<int> none{0, 0, 1, 7, 5};
  const std::vector<int> truth{0, 2, 1, 7, 5, 3, 4, 0, 1, 5};
  const std::vector<int> pred(10, 0);
  const auto z = moderate_mass(pred, truth, default_moderate_bins(8));
  EXPECT_DOUBLE_EQ(z.true_mass, 0.3);
  EXPECT_EQ(z.ratio, 0.0);
  EXPECT_FALSE(moderate_mass(none, none, default_moderate_bins(8)).ratio.has_value());
  EXPECT_EQ(default_moderate_bins(8), (std::vector<int>{2, 3, 4, 6}));
  EXPECT_EQ(default_moderate_bins(4), (std::vector<int>{1, 2}));
}

TEST(ModerateMass, InteriorBinsAboveMinimumMass) {
  std::vector<int> t(100, 0);
  t[0] = 1;  // 1% in bin 1
  for (int i = 1; i < 6; ++i) t[i] = 2;
  for (int i = 6; i < 20; ++i) t[i] = 4;  // bin 4 has 14%
  for (int i = 20; i < 40; ++i) t[i] = 5;  // last bin
  EXPECT_EQ(interior_moderate_bins(t, 6), (std::vector<int>{2, 4}));
}

TEST(CtrBias, Examples) {
  const std::vector<double> p{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  const std::vector<int> t{1, 2, 3, 0, 1, 2};
  const auto perfect = ctr_conditioned_bias(p, t, t, 3);
  for (double b : perfect.bias) EXPECT_EQ(b, 0.0);
  EXPECT_EQ(perfect.slope, 0.0);
  EXPECT_DOUBLE_EQ(least_squares_slope(std::vector<double>{0, 1, 2}, std::vector<double>{-1, 0, 1}), 1.0);
  const std::vector<int> pred{0, 1, 3, 0, 2, 3};
  const auto b = ctr_conditioned_bias(p, pred, t, 3);
  EXPECT_EQ(b.bias, (std::vector<double>{-1.0, 0.0, 1.0}));
  EXPECT_DOUBLE_EQ(b.slope, 1.0);
}

TEST(DtMetrics, UnclickedRecordsNeverMatter) {
  const auto schema = testing::small_schema();
  auto records = testing::random_records(schema, 60, 4, 5);
  Predictions preds;
  for (std::size_t i = 0; i < records.size(); ++i) {
    preds.ctr_prob.push_back(0.01 * static_cast<double>(i % 97));
    preds.dt_bin.push_back(static_cast<int>(i % 4));
    preds.raw_dt_bin.push_back(0);
  }
  std::vector<double> t;
  for (const auto& r : records) {
    if (r.clicked) t.push_back(*r.dwell_seconds);
  }
  const auto spec = build_binning(t, 4);
  const auto a = compute_report(preds, records, spec);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].clicked) preds.dt_bin[i] = 3 - preds.dt_bin[i];
  }
  const auto b = compute_report(preds, records, spec);
  EXPECT_EQ(a.mae_class, b.mae_class);
  EXPECT_EQ(a.weighted_f1, b.weighted_f1);
  EXPECT_EQ(a.mae_seconds, b.mae_seconds);
  EXPECT_GT(a.n_total, a.n_clicked);
  const auto j = to_json(a);
  EXPECT_TRUE(j.contains("auc"));
  EXPECT_TRUE(j.contains("mae_class"));
}

TEST(PairedTTest, KnownValues) {
  // Differences 1, 2, 3: mean 2, sd 1, t = 2 * sqrt(3).
  const std::vector<double> a{2, 4, 6}, b{1, 2, 3};
  const auto t = paired_t_test(a, b);
  EXPECT_NEAR(t.t, 2.0 * std::sqrt(3.0), 1e-12);
  EXPECT_EQ(t.df, 2);
  EXPECT_NEAR(t.p_value, 0.07418, 1e-4);
  EXPECT_EQ(paired_t_test(a, a).p_value, 1.0);
  EXPECT_THROW(paired_t_test(std::vector<double>{1.0}, std::vector<double>{2.0}),
               std::invalid_argument);
}

// Train briefly on SCM data and ablate each feature.
class LeaveOneFeatureOut : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ScmConfig scm;
    scm.n_users = 200;
    scm.n_items = 150;
    const auto data = generate_dataset(scm, 30000);
    const auto raw = to_raw_records(data);
    prepared_ = new PreparedData(prepare_data(raw, data.schema, DataConfig{}, 8));
    ModelConfig mc;
    mc.backbone.embedding_dim = 8;
    mc.backbone.expert_hidden = {16, 8};
    mc.backbone.tower_hidden = {8};
    TrainConfig tc;
    tc.max_epochs = 3;
    tc.learning_rate = 0.005;
    tc.variant = Variant::kBase;
    model_ = new OrcaModel(
        train(prepared_->schema, prepared_->train, prepared_->val, mc, tc).model);
  }
  static void TearDownTestSuite() {
    delete model_;
    delete prepared_;
  }
  static PreparedData* prepared_;
  static OrcaModel* model_;
};

PreparedData* LeaveOneFeatureOut::prepared_ = nullptr;
OrcaModel* LeaveOneFeatureOut::model_ = nullptr;

TEST_F(LeaveOneFeatureOut, DepthIsDwellOnly) {
  const auto a = leave_one_feature_out(*model_, prepared_->test, "content_depth");
  EXPECT_GT(std::abs(a.delta_mae_class), 5.0 * std::abs(a.delta_auc));
  EXPECT_TRUE(a.post_click_candidate);
}

TEST_F(LeaveOneFeatureOut, TitleAppealDrivesClicks) {
  const auto a = leave_one_feature_out(*model_, prepared_->test, "title_appeal");
  EXPECT_LT(a.delta_auc, -0.01);
  EXPECT_FALSE(a.post_click_candidate);
}

TEST_F(LeaveOneFeatureOut, UnknownFieldIsAConfigError) {
  EXPECT_THROW(leave_one_feature_out(*model_, prepared_->test, "nope"), ConfigError);
  const auto j = to_json(leave_one_feature_out(*model_, prepared_->test, "user_id"));
  EXPECT_EQ(j.at("field"), "user_id");
}

}  // namespace
}  // namespace orca
