#pragma once

// Oracle checks shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "orca/metrics.hpp"
#include "orca/training.hpp"
#include "test_util.hpp"

namespace orca::checks {

enum class LossKind { kCtr, kDt, kOrca };

inline const char* loss_name(LossKind k) {
  switch (k) {
    case LossKind::kCtr: return "L_C";
    case LossKind::kDt: return "L_T";
    case LossKind::kOrca: return "L_ORCA";
  }
  return "?";
}

struct GradFixture {
  FeatureSchema schema = testing::tiny_schema();
  OrcaModel model;
  std::vector<InteractionRecord> records;
  TrainingBatch batch;
  TrainConfig train_cfg;
  std::vector<double> weights;
  NdeInputs nde_inputs;

  explicit GradFixture(std::uint64_t seed, const ModelConfig& cfg = testing::tiny_model_config()) {
    model = OrcaModel(cfg, schema);
    model.init(seed);
    testing::randomize(model, seed);
    records = testing::random_records(schema, 8, model.bin_count(), seed, 0.6);
    std::vector<const InteractionRecord*> ptrs;
    for (const auto& r : records) ptrs.push_back(&r);
    auto rng = make_rng(seed, "test.mask");
    batch = make_batch(ptrs, schema, true, 0.5, rng);
    train_cfg.alpha = 1.0;
    train_cfg.gamma = 0.5;
    const auto eval = evaluate_batch(model, batch, train_cfg);
    weights = eval.losses.weights;
    nde_inputs = eval.forward.nde_inputs;
  }

  double loss(LossKind k) const {
    const auto eval = evaluate_batch(model, batch, train_cfg, &weights, &nde_inputs);
    switch (k) {
      case LossKind::kCtr: return eval.losses.loss_ctr;
      case LossKind::kDt: return eval.losses.loss_dt;
      case LossKind::kOrca: return eval.losses.loss_orca;
    }
    return 0.0;
  }

  void analytic(LossKind k) {
    model.zero_grad();
    const auto eval = evaluate_batch(model, batch, train_cfg, &weights, &nde_inputs);
    LossSwitches s;
    s.ctr = k == LossKind::kCtr;
    s.dt = k == LossKind::kDt;
    s.orca = k == LossKind::kOrca;
    accumulate_gradients(model, batch, eval, s);
  }
};

struct GradCheckResult {
  std::size_t parameters = 0;
  int coordinates = 0;
  double max_relative_error = 0.0;
  int nonzero = 0;  // coordinates with a non-negligible gradient
};

// Central differences on random coordinates, with the instance weights and
// the detached NDE inputs held at their values for the unperturbed model.
inline GradCheckResult gradient_check(LossKind kind, std::uint64_t seed, int n_coords = 20,
                                      const ModelConfig& cfg = testing::tiny_model_config(),
                                      double h = 1e-5) {
  GradFixture fx(seed, cfg);
  fx.analytic(kind);
  auto params = fx.model.parameters();
  std::vector<std::pair<Param*, Eigen::Index>> coords;
  for (auto* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) coords.emplace_back(p, i);
  }
  GradCheckResult out;
  out.parameters = coords.size();
  std::mt19937_64 pick(seed ^ 0x5eedULL);
  std::shuffle(coords.begin(), coords.end(), pick);
  coords.resize(std::min<std::size_t>(coords.size(), static_cast<std::size_t>(n_coords)));
  for (auto [p, i] : coords) {
    const double analytic = p->grad.data()[i];
    const double saved = p->value.data()[i];
    p->value.data()[i] = saved + h;
    const double up = fx.loss(kind);
    p->value.data()[i] = saved - h;
    const double down = fx.loss(kind);
    p->value.data()[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    out.max_relative_error =
        std::max(out.max_relative_error, testing::relative_error(analytic, numeric));
    if (std::abs(analytic) > 1e-6) ++out.nonzero;
    ++out.coordinates;
  }
  return out;
}

struct StopGradResult {
  double max_backbone_abs = 0.0;  // must be exactly 0
  double max_head_abs = 0.0;      // the head itself still learns
};

// L_ORCA alone with y^T frozen: every backbone gradient must be exactly zero.
inline StopGradResult stop_gradient_check(std::uint64_t seed,
                                          const ModelConfig& cfg = testing::tiny_model_config()) {
  GradFixture fx(seed, cfg);
  fx.model.zero_grad();
  const auto eval = evaluate_batch(fx.model, fx.batch, fx.train_cfg);
  accumulate_gradients(fx.model, fx.batch, eval, {false, false, true, false});
  StopGradResult out;
  for (auto* p : fx.model.backbone_parameters()) {
    out.max_backbone_abs = std::max(out.max_backbone_abs, p->grad.cwiseAbs().maxCoeff());
  }
  for (auto* p : fx.model.head_parameters()) {
    out.max_head_abs = std::max(out.max_head_abs, p->grad.cwiseAbs().maxCoeff());
  }
  return out;
}

// Brute-force references.
inline double auc_pairs(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      ++pairs;
      if (s[i] > s[j]) wins += 1.0;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

inline ErrorPair error_loop(const std::vector<double>& pred, const std::vector<double>& truth) {
  double a = 0.0, s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    a += std::abs(pred[i] - truth[i]);
    s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  }
  const double n = static_cast<double>(pred.size());
  return {a / n, std::sqrt(s / n)};
}

struct ReportOracle {
  double weighted_f1 = 0.0, macro_precision = 0.0, macro_recall = 0.0;
};

inline ReportOracle report_loop(const std::vector<int>& pred, const std::vector<int>& truth,
                                int m) {
  ReportOracle r;
  for (int k = 0; k < m; ++k) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] == k && truth[i] == k) ++tp;
      else if (pred[i] == k) ++fp;
      else if (truth[i] == k) ++fn;
    }
    const double p = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double rc = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    const double f1 = p + rc > 0 ? 2.0 * p * rc / (p + rc) : 0.0;
    r.macro_precision += p / m;
    r.macro_recall += rc / m;
    r.weighted_f1 += f1 * static_cast<double>(tp + fn) / static_cast<double>(pred.size());
  }
  return r;
}

struct MetricOracleResult {
  int cases = 0;
  double auc = 0.0;
  double class_errors = 0.0;
  double report = 0.0;
  double seconds = 0.0;
};

// Largest absolute deviation of each metric from its oracle over n_cases
// randomized inputs.
inline MetricOracleResult metric_oracles(int n_cases, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> size(2, 60);
  std::uniform_int_distribution<int> bins(2, 10);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MetricOracleResult out;
  for (int c = 0; c < n_cases; ++c) {
    const int n = size(rng);
    const int m = bins(rng);
    // Coarse scores force ties.
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
      scores[i] = c % 2 == 0 ? std::floor(unit(rng) * 5.0) / 5.0 : unit(rng);
      labels[i] = unit(rng) < 0.4 ? 1 : 0;
    }
    labels[0] = 1;
    labels[1] = 0;
    out.auc = std::max(out.auc, std::abs(auc(scores, labels) - auc_pairs(scores, labels)));

    std::vector<int> pred(n), truth(n);
    std::vector<double> pred_d(n), truth_d(n), seconds(n), medians(n);
    for (int i = 0; i < n; ++i) {
      pred[i] = static_cast<int>(rng() % m);
      truth[i] = static_cast<int>(rng() % m);
      pred_d[i] = pred[i];
      truth_d[i] = truth[i];
    }
    const auto e = mae_rmse_class(pred, truth);
    const auto o = error_loop(pred_d, truth_d);
    out.class_errors =
        std::max({out.class_errors, std::abs(e.mae - o.mae), std::abs(e.rmse - o.rmse)});

    const auto rep = classification_report(pred, truth, m);
    const auto ro = report_loop(pred, truth, m);
    out.report = std::max({out.report, std::abs(rep.weighted_f1 - ro.weighted_f1),
                           std::abs(rep.macro_precision - ro.macro_precision),
                           std::abs(rep.macro_recall - ro.macro_recall)});

    std::vector<double> t(n);
    for (auto& x : t) x = std::exp(1.0 + 3.0 * unit(rng));
    t[0] = 1.0;
    t[1] = 500.0;
    const auto spec = build_binning(t, m);
    for (int i = 0; i < n; ++i) medians[i] = spec.medians()[pred[i]];
    const auto es = mae_rmse_seconds(pred, t, spec);
    const auto os = error_loop(medians, t);
    out.seconds = std::max({out.seconds, std::abs(es.mae - os.mae), std::abs(es.rmse - os.rmse)});
    ++out.cases;
  }
  return out;
}

// Eq. 11 by a double loop: sum_i w_i * CE_i / sum_i w_i over clicked.
inline double orca_loss_loop(const Matrix& logits, const std::vector<int>& bins,
                             const std::vector<double>& w, const std::vector<int>& clicked) {
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    if (!clicked[i]) continue;
    double z = 0.0;
    for (Eigen::Index k = 0; k < logits.rows(); ++k) z += std::exp(logits(k, i));
    num += w[i] * (std::log(z) - logits(bins[i], i));
    den += w[i];
  }
  return num / den;
}

struct WeightPropertyResult {
  bool examples_exact = false;
  double scaling_max_abs = 0.0;  // |loss_orca(c*w) - loss_orca(w)| over random cases
  double loop_max_abs = 0.0;     // against the double loop
};

inline WeightPropertyResult weight_properties(int n_cases, std::uint64_t seed) {
  WeightPropertyResult out;
  out.examples_exact = instance_weight(0.5, 2.0, 1.0, 0.0, 1e-3) == 4.0 &&
                       instance_weight(0.01, 1.5, 0.0, 0.25, 1e-3) == 1.75 &&
                       instance_weight(0.9, 1.5, 0.0, 0.25, 1e-3) == 1.75 &&
                       instance_weight(0.0, 1.0, 1.0, 0.0, 1e-3) == 1000.0;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 0; c < n_cases; ++c) {
    const int n = 2 + static_cast<int>(rng() % 30);
    const int m = 2 + static_cast<int>(rng() % 8);
    Matrix logits(m, n);
    std::vector<int> bins(n), clicked(n);
    std::vector<double> w(n), scaled(n);
    const double factor = std::exp(8.0 * unit(rng) - 4.0);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < m; ++k) logits(k, i) = 6.0 * unit(rng) - 3.0;
      clicked[i] = i == 0 || unit(rng) < 0.6;
      bins[i] = clicked[i] ? static_cast<int>(rng() % m) : -1;
      w[i] = i == 0 ? 0.5 + unit(rng) : 3.0 * unit(rng);
      scaled[i] = factor * w[i];
    }
    const double base = loss_orca(logits, bins, w, clicked).value;
    out.scaling_max_abs =
        std::max(out.scaling_max_abs, std::abs(loss_orca(logits, bins, scaled, clicked).value - base));
    out.loop_max_abs = std::max(out.loop_max_abs, std::abs(base - orca_loss_loop(logits, bins, w, clicked)));
  }
  return out;
}

struct BinningPropertyResult {
  int specs = 0;
  int failures = 0;
  double max_width_spread = 0.0;  // largest (max - min) log-space bin width
  std::string first_failure;
};

// Partition, monotonicity, equidistance and median round trip on randomized
// specs, with assign_bin checked against a linear scan.
inline BinningPropertyResult binning_properties(int n_specs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> bins(2, 12);
  std::uniform_int_distribution<int> sizes(2, 200);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  BinningPropertyResult out;
  auto fail = [&](int trial, const std::string& what) {
    if (out.failures++ == 0) out.first_failure = "spec " + std::to_string(trial) + ": " + what;
  };
  for (int trial = 0; trial < n_specs; ++trial) {
    ++out.specs;
    const int m = bins(rng);
    const double offset = trial % 3 == 0 ? 0.5 : 1.0;
    const double mu = 4.0 * unit(rng);
    const double sigma = 0.2 + 2.0 * unit(rng);
    std::normal_distribution<double> normal(mu, sigma);
    std::vector<double> t(sizes(rng));
    for (auto& x : t) x = std::exp(normal(rng));
    const auto spec = build_binning(t, m, offset);
    const auto& b = spec.boundaries();
    if (spec.bin_count() != m || static_cast<int>(b.size()) != m - 1) {
      fail(trial, "wrong bin count");
      continue;
    }

    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double x : t) {
      lo = std::min(lo, std::log(x + offset));
      hi = std::max(hi, std::log(x + offset));
    }
    std::vector<double> edges{lo};
    edges.insert(edges.end(), b.begin(), b.end());
    edges.push_back(hi);
    double wmin = std::numeric_limits<double>::infinity();
    double wmax = 0.0;
    bool increasing = true;
    for (std::size_t k = 1; k < edges.size(); ++k) {
      increasing = increasing && edges[k] > edges[k - 1];
      wmin = std::min(wmin, edges[k] - edges[k - 1]);
      wmax = std::max(wmax, edges[k] - edges[k - 1]);
    }
    out.max_width_spread = std::max(out.max_width_spread, wmax - wmin);
    if (!increasing) fail(trial, "boundaries not increasing");
    if (wmax - wmin >= 1e-9) fail(trial, "bins not equidistant");

    std::vector<double> probes{0.0};
    for (int i = 0; i < 50; ++i) {
      probes.push_back(std::exp(mu + 3.0 * sigma * (2.0 * unit(rng) - 1.0)));
    }
    std::sort(probes.begin(), probes.end());
    int previous = 0;
    for (double x : probes) {
      const int k = assign_bin(x, spec);
      int scan = 0;
      while (scan < m - 1 && std::log(x + offset) >= b[scan]) ++scan;
      if (k < 0 || k >= m) fail(trial, "bin outside [0, M)");
      if (k != scan) fail(trial, "assign_bin disagrees with linear scan");
      if (k < previous) fail(trial, "assign_bin not monotone");
      previous = k;
    }

    std::vector<int> counts(m, 0);
    for (double x : t) ++counts[assign_bin(x, spec)];
    for (int k = 0; k < m; ++k) {
      if (counts[k] > 0 && assign_bin(bin_median(k, spec), spec) != k) {
        fail(trial, "median of bin " + std::to_string(k) + " lands elsewhere");
      }
    }
  }
  return out;
}

}  // namespace orca::checks
