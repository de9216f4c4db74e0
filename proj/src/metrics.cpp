#include "orca/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "orca/errors.hpp"

namespace orca {
namespace {

void require_pairs(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": length mismatch");
  if (a == 0) throw DataError(std::string(what) + ": no instances");
}

}  // namespace

ErrorPair mae_rmse_class(std::span<const int> pred_bins, std::span<const int> true_bins) {
  require_pairs(pred_bins.size(), true_bins.size(), "mae_rmse_class");
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  for (std::size_t i = 0; i < pred_bins.size(); ++i) {
    if (pred_bins[i] < 0 || true_bins[i] < 0) throw std::invalid_argument("negative bin index");
    const double d = pred_bins[i] - true_bins[i];
    abs_sum += std::abs(d);
    sq_sum += d * d;
  }
  const double n = static_cast<double>(pred_bins.size());
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

ClassificationReport classification_report(std::span<const int> pred_bins,
                                           std::span<const int> true_bins, int bin_count) {
  require_pairs(pred_bins.size(), true_bins.size(), "classification_report");
  if (bin_count < 1) throw std::invalid_argument("bin_count must be >= 1");
  const auto m = static_cast<std::size_t>(bin_count);
  ClassificationReport r;
  r.confusion.assign(m, std::vector<long>(m, 0));
  for (std::size_t i = 0; i < pred_bins.size(); ++i) {
    if (pred_bins[i] < 0 || pred_bins[i] >= bin_count || true_bins[i] < 0 ||
        true_bins[i] >= bin_count) {
      throw std::invalid_argument("bin index out of range");
    }
    ++r.confusion[true_bins[i]][pred_bins[i]];
  }
  r.per_class.resize(m);
  const double n = static_cast<double>(pred_bins.size());
  for (std::size_t k = 0; k < m; ++k) {
    auto& c = r.per_class[k];
    const long tp = r.confusion[k][k];
    for (std::size_t j = 0; j < m; ++j) {
      c.support += r.confusion[k][j];
      c.predicted += r.confusion[j][k];
    }
    c.precision = c.predicted == 0 ? 0.0 : static_cast<double>(tp) / c.predicted;
    c.recall = c.support == 0 ? 0.0 : static_cast<double>(tp) / c.support;
    c.f1 = c.precision + c.recall == 0.0
               ? 0.0
               : 2.0 * c.precision * c.recall / (c.precision + c.recall);
    r.macro_precision += c.precision;
    r.macro_recall += c.recall;
    r.weighted_f1 += c.f1 * static_cast<double>(c.support) / n;
  }
  r.macro_precision /= static_cast<double>(m);
  r.macro_recall /= static_cast<double>(m);
  return r;
}

ErrorPair mae_rmse_seconds(std::span<const int> pred_bins, std::span<const double> true_seconds,
                           const BinningSpec& spec) {
  require_pairs(pred_bins.size(), true_seconds.size(), "mae_rmse_seconds");
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  for (std::size_t i = 0; i < pred_bins.size(); ++i) {
    const double d = bin_median(pred_bins[i], spec) - true_seconds[i];
    abs_sum += std::abs(d);
    sq_sum += d * d;
  }
  const double n = static_cast<double>(pred_bins.size());
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  double pos = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // average of 1-based ranks i+1 .. j
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        pos_rank_sum += rank;
        pos += 1.0;
      }
    }
    i = j;
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) throw DataError("AUC undefined: only one class present");
  return (pos_rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double auc_or_nan(std::span<const double> scores, std::span<const int> labels) {
  try {
    return auc(scores, labels);
  } catch (const DataError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

std::vector<int> quantile_groups(std::span<const double> scores, int n_groups) {
  if (n_groups < 1) throw std::invalid_argument("n_groups must be >= 1");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<int> group(n);
  for (std::size_t rank = 0; rank < n; ++rank) {
    group[order[rank]] = static_cast<int>(rank * static_cast<std::size_t>(n_groups) / n);
  }
  return group;
}

Heatmap heatmap(std::span<const double> ctr_probs, std::span<const int> bins, int bin_count,
                int n_deciles) {
  require_pairs(ctr_probs.size(), bins.size(), "heatmap");
  if (bin_count < 1) throw std::invalid_argument("bin_count must be >= 1");
  const auto groups = quantile_groups(ctr_probs, n_deciles);
  Heatmap h;
  h.counts.assign(n_deciles, std::vector<long>(bin_count, 0));
  h.row_totals.assign(n_deciles, 0);
  h.col_totals.assign(bin_count, 0);
  h.decile_upper.assign(n_deciles, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < bins.size(); ++i) {
    if (bins[i] < 0 || bins[i] >= bin_count) throw std::invalid_argument("bin index out of range");
    const int g = groups[i];
    ++h.counts[g][bins[i]];
    ++h.row_totals[g];
    ++h.col_totals[bins[i]];
    ++h.total;
    if (std::isnan(h.decile_upper[g]) || ctr_probs[i] > h.decile_upper[g]) {
      h.decile_upper[g] = ctr_probs[i];
    }
  }
  return h;
}

std::string heatmap_csv(const Heatmap& h) {
  std::ostringstream out;
  out.precision(10);
  out << "ctr_decile,ctr_upper";
  for (std::size_t k = 0; k < h.col_totals.size(); ++k) out << ",bin_" << k;
  out << ",total\n";
  for (std::size_t g = 0; g < h.counts.size(); ++g) {
    out << g << ',' << h.decile_upper[g];
    for (long c : h.counts[g]) out << ',' << c;
    out << ',' << h.row_totals[g] << '\n';
  }
  out << "total,";
  for (long c : h.col_totals) out << ',' << c;
  out << ',' << h.total << '\n';
  return out.str();
}

ModerateMass moderate_mass(std::span<const int> pred_bins, std::span<const int> true_bins,
                           std::span<const int> moderate_set) {
  require_pairs(pred_bins.size(), true_bins.size(), "moderate_mass");
  auto in_set = [&](int b) {
    return std::find(moderate_set.begin(), moderate_set.end(), b) != moderate_set.end();
  };
  double pred = 0.0;
  double truth = 0.0;
  for (std::size_t i = 0; i < pred_bins.size(); ++i) {
    pred += in_set(pred_bins[i]) ? 1.0 : 0.0;
    truth += in_set(true_bins[i]) ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(pred_bins.size());
  ModerateMass m{pred / n, truth / n, std::nullopt};
  if (truth > 0.0) m.ratio = pred / truth;
  return m;
}

std::vector<int> default_moderate_bins(int bin_count) {
  if (bin_count == 8) return {2, 3, 4, 6};
  std::vector<int> out;
  for (int k = 1; k + 1 < bin_count; ++k) out.push_back(k);
  return out;
}

std::vector<int> interior_moderate_bins(std::span<const int> true_bins, int bin_count,
                                        double min_mass) {
  std::vector<double> counts(std::max(bin_count, 0), 0.0);
  for (int b : true_bins) {
    if (b >= 0 && b < bin_count) counts[b] += 1.0;
  }
  std::vector<int> out;
  if (true_bins.empty()) return out;
  const double n = static_cast<double>(true_bins.size());
  for (int k = 1; k + 1 < bin_count; ++k) {
    if (counts[k] / n >= min_mass) out.push_back(k);
  }
  return out;
}

double least_squares_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("slope: length mismatch");
  if (x.size() < 2) return 0.0;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx == 0.0 ? 0.0 : sxy / sxx;
}

CtrBias ctr_conditioned_bias(std::span<const double> ctr_probs, std::span<const int> pred_bins,
                             std::span<const int> true_bins, int n_groups) {
  require_pairs(ctr_probs.size(), pred_bins.size(), "ctr_conditioned_bias");
  require_pairs(ctr_probs.size(), true_bins.size(), "ctr_conditioned_bias");
  const auto groups = quantile_groups(ctr_probs, n_groups);
  CtrBias b;
  b.bias.assign(n_groups, 0.0);
  b.counts.assign(n_groups, 0);
  b.mean_ctr.assign(n_groups, 0.0);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    b.bias[groups[i]] += pred_bins[i] - true_bins[i];
    b.mean_ctr[groups[i]] += ctr_probs[i];
    ++b.counts[groups[i]];
  }
  std::vector<double> xs;
  std::vector<double> ys;
  for (int g = 0; g < n_groups; ++g) {
    if (b.counts[g] == 0) continue;
    b.bias[g] /= static_cast<double>(b.counts[g]);
    b.mean_ctr[g] /= static_cast<double>(b.counts[g]);
    xs.push_back(g);
    ys.push_back(b.bias[g]);
  }
  b.slope = least_squares_slope(xs, ys);
  return b;
}

std::string bias_csv(const CtrBias& b) {
  std::ostringstream out;
  out.precision(10);
  out << "group,count,mean_ctr,mean_bias\n";
  for (std::size_t g = 0; g < b.bias.size(); ++g) {
    out << g << ',' << b.counts[g] << ',' << b.mean_ctr[g] << ',' << b.bias[g] << '\n';
  }
  out << "# slope," << b.slope << '\n';
  return out.str();
}

MetricsReport compute_report(const Predictions& preds, std::span<const InteractionRecord> records,
                             const BinningSpec& spec) {
  if (preds.ctr_prob.size() != records.size()) {
    throw std::invalid_argument("predictions do not match records");
  }
  MetricsReport r;
  r.n_total = static_cast<long>(records.size());
  std::vector<int> labels;
  std::vector<int> pred_bins;
  std::vector<int> true_bins;
  std::vector<double> seconds;
  for (std::size_t i = 0; i < records.size(); ++i) {
    labels.push_back(records[i].clicked ? 1 : 0);
    if (!records[i].clicked) continue;
    if (!records[i].dwell_seconds) throw DataError("clicked record without dwell seconds");
    pred_bins.push_back(preds.dt_bin[i]);
    true_bins.push_back(records[i].dwell_bin.value());
    seconds.push_back(*records[i].dwell_seconds);
  }
  r.n_clicked = static_cast<long>(pred_bins.size());
  if (pred_bins.empty()) throw DataError("no clicked records to evaluate");
  r.auc = auc(preds.ctr_prob, labels);
  const auto cls = mae_rmse_class(pred_bins, true_bins);
  r.mae_class = cls.mae;
  r.rmse_class = cls.rmse;
  r.classes = classification_report(pred_bins, true_bins, spec.bin_count());
  r.weighted_f1 = r.classes.weighted_f1;
  r.macro_precision = r.classes.macro_precision;
  r.macro_recall = r.classes.macro_recall;
  const auto sec = mae_rmse_seconds(pred_bins, seconds, spec);
  r.mae_seconds = sec.mae;
  r.rmse_seconds = sec.rmse;
  return r;
}

MetricsReport evaluate(const OrcaModel& model, std::span<const InteractionRecord> records,
                       const BinningSpec& spec) {
  return compute_report(predict(model, records), records, spec);
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json per_class = nlohmann::json::array();
  for (std::size_t k = 0; k < r.classes.per_class.size(); ++k) {
    const auto& c = r.classes.per_class[k];
    per_class.push_back({{"bin", k},
                         {"precision", c.precision},
                         {"recall", c.recall},
                         {"f1", c.f1},
                         {"support", c.support},
                         {"predicted", c.predicted}});
  }
  return {{"mae_class", r.mae_class},
          {"rmse_class", r.rmse_class},
          {"weighted_f1", r.weighted_f1},
          {"macro_precision", r.macro_precision},
          {"macro_recall", r.macro_recall},
          {"mae_seconds", r.mae_seconds},
          {"rmse_seconds", r.rmse_seconds},
          {"auc", r.auc},
          {"n_clicked", r.n_clicked},
          {"n_total", r.n_total},
          {"per_class", per_class},
          {"confusion", r.classes.confusion}};
}

FeatureAblation leave_one_feature_out(const OrcaModel& model,
                                      std::span<const InteractionRecord> records,
                                      const std::string& field_name, double auc_threshold,
                                      double mae_threshold) {
  const auto index = model.schema().index_of(field_name);
  if (!index) throw ConfigError("unknown field '" + field_name + "'");
  const auto field = *index;
  std::vector<InteractionRecord> ablated(records.begin(), records.end());
  for (auto& r : ablated) r.feature_ids.at(field) = kUnknownIndex;

  auto score = [&](std::span<const InteractionRecord> rs) {
    const auto p = predict(model, rs);
    std::vector<int> labels;
    std::vector<int> pred;
    std::vector<int> truth;
    for (std::size_t i = 0; i < rs.size(); ++i) {
      labels.push_back(rs[i].clicked ? 1 : 0);
      if (rs[i].clicked) {
        pred.push_back(p.dt_bin[i]);
        truth.push_back(rs[i].dwell_bin.value());
      }
    }
    return std::pair{auc(p.ctr_prob, labels), mae_rmse_class(pred, truth).mae};
  };
  FeatureAblation a;
  a.field = field_name;
  std::tie(a.auc, a.mae_class) = score(records);
  std::tie(a.auc_ablated, a.mae_class_ablated) = score(ablated);
  a.delta_auc = a.auc_ablated - a.auc;
  a.delta_mae_class = a.mae_class_ablated - a.mae_class;
  a.post_click_candidate =
      std::abs(a.delta_auc) < auc_threshold && std::abs(a.delta_mae_class) > mae_threshold;
  return a;
}

nlohmann::json to_json(const FeatureAblation& a) {
  return {{"field", a.field},
          {"auc", a.auc},
          {"auc_ablated", a.auc_ablated},
          {"delta_auc", a.delta_auc},
          {"mae_class", a.mae_class},
          {"mae_class_ablated", a.mae_class_ablated},
          {"delta_mae_class", a.delta_mae_class},
          {"post_click_candidate", a.post_click_candidate}};
}

TTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired_t_test: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("paired_t_test needs at least two pairs");
  const double n = static_cast<double>(a.size());
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double se = std::sqrt(ss / (n - 1.0) / n);
  TTest t;
  t.df = static_cast<int>(a.size()) - 1;
  t.mean_diff = mean;
  if (se == 0.0) {
    t.t = mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
    t.p_value = mean == 0.0 ? 1.0 : 0.0;
    return t;
  }
  t.t = mean / se;
  boost::math::students_t dist(static_cast<double>(t.df));
  t.p_value = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t.t))),
                         0.0, 1.0);
  return t;
}

}  // namespace orca
