#include "orca/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "orca/errors.hpp"
#include "orca/json_fields.hpp"
#include "orca/metrics.hpp"

namespace orca {
namespace {

// log-sum-exp minus the target logit, for one column.
double softmax_cross_entropy(const Eigen::Ref<const Eigen::VectorXd>& logits, int target) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits(target);
}

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": length mismatch");
}

}  // namespace

void TrainConfig::validate() const {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  if (!(clamp_eps > 0.0)) throw ConfigError("clamp_eps must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (early_stop_patience < 0) throw ConfigError("early_stop_patience must be >= 0");
  if (optimizer != "adam") throw ConfigError("unsupported optimizer '" + optimizer + "'");
  if (!(divergence_threshold > 0.0)) throw ConfigError("divergence_threshold must be > 0");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"alpha", c.alpha},
          {"gamma", c.gamma},
          {"clamp_eps", c.clamp_eps},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"early_stop_patience", c.early_stop_patience},
          {"seed", c.seed},
          {"variant", to_string(c.variant)},
          {"optimizer", c.optimizer},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"divergence_threshold", c.divergence_threshold}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  JsonFields f(j, "train");
  f.read("alpha", c.alpha);
  f.read("gamma", c.gamma);
  f.read("clamp_eps", c.clamp_eps);
  f.read("learning_rate", c.learning_rate);
  f.read("batch_size", c.batch_size);
  f.read("max_epochs", c.max_epochs);
  f.read("early_stop_patience", c.early_stop_patience);
  f.read("seed", c.seed);
  std::string variant = to_string(c.variant);
  f.read("variant", variant);
  c.variant = parse_variant(variant);
  f.read("optimizer", c.optimizer);
  f.read("adam_beta1", c.adam_beta1);
  f.read("adam_beta2", c.adam_beta2);
  f.read("adam_epsilon", c.adam_epsilon);
  f.read("divergence_threshold", c.divergence_threshold);
  f.finish();
  c.validate();
  return c;
}

double instance_weight(double l_ctr, double l_dt, double alpha, double gamma, double clamp_eps) {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  if (!(clamp_eps > 0.0)) throw ConfigError("clamp_eps must be > 0");
  return std::pow(std::max(l_ctr, clamp_eps), -alpha) * l_dt + gamma;
}

LossValue loss_ctr(std::span<const double> ctr_probs, std::span<const int> clicked) {
  check_lengths(ctr_probs.size(), clicked.size(), "loss_ctr");
  LossValue out;
  out.per_instance.resize(ctr_probs.size());
  if (ctr_probs.empty()) {
    out.empty = true;
    return out;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < ctr_probs.size(); ++i) {
    const double p = std::clamp(ctr_probs[i], kProbClip, 1.0 - kProbClip);
    const double l = clicked[i] ? -std::log(p) : -std::log(1.0 - p);
    out.per_instance[i] = l;
    sum += l;
  }
  out.value = sum / static_cast<double>(ctr_probs.size());
  return out;
}

LossValue loss_dt(const Matrix& dt_logits, std::span<const int> dwell_bins,
                  std::span<const int> clicked) {
  check_lengths(static_cast<std::size_t>(dt_logits.cols()), clicked.size(), "loss_dt");
  check_lengths(dwell_bins.size(), clicked.size(), "loss_dt");
  LossValue out;
  out.per_instance.assign(clicked.size(), 0.0);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < clicked.size(); ++i) {
    if (!clicked[i]) continue;
    const double l = softmax_cross_entropy(dt_logits.col(static_cast<Eigen::Index>(i)), dwell_bins[i]);
    out.per_instance[i] = l;
    sum += l;
    ++n;
  }
  out.empty = n == 0;
  out.value = n == 0 ? 0.0 : sum / static_cast<double>(n);
  return out;
}

LossValue loss_orca(const Matrix& orca_logits, std::span<const int> dwell_bins,
                    std::span<const double> weights, std::span<const int> clicked) {
  check_lengths(static_cast<std::size_t>(orca_logits.cols()), clicked.size(), "loss_orca");
  check_lengths(dwell_bins.size(), clicked.size(), "loss_orca");
  check_lengths(weights.size(), clicked.size(), "loss_orca");
  LossValue out;
  out.per_instance.assign(clicked.size(), 0.0);
  double weighted = 0.0;
  double total_weight = 0.0;
  for (std::size_t i = 0; i < clicked.size(); ++i) {
    if (!clicked[i]) continue;
    if (weights[i] < 0.0) throw std::invalid_argument("loss_orca: negative weight");
    const double l =
        softmax_cross_entropy(orca_logits.col(static_cast<Eigen::Index>(i)), dwell_bins[i]);
    out.per_instance[i] = l;
    weighted += weights[i] * l;
    total_weight += weights[i];
  }
  out.empty = !(total_weight > 0.0);
  out.value = out.empty ? 0.0 : weighted / total_weight;
  return out;
}

TrainingBatch make_batch(std::span<const InteractionRecord* const> records,
                         const FeatureSchema& schema, bool mask, double p_fea, Rng& rng) {
  TrainingBatch batch;
  batch.ids = make_id_matrix(records);
  batch.clicked.reserve(records.size());
  batch.bins.reserve(records.size());
  for (const auto* r : records) {
    batch.clicked.push_back(r->clicked ? 1 : 0);
    if (r->clicked && !r->dwell_bin) throw DataError("clicked record without a dwell bin");
    batch.bins.push_back(r->clicked ? *r->dwell_bin : -1);
  }
  if (mask) {
    const auto fields = schema.post_click_indices();
    batch.masked_ids = batch.ids;
    for (Eigen::Index b = 0; b < batch.ids.cols(); ++b) {
      if (uniform01(rng) < p_fea) {
        for (auto f : fields) batch.masked_ids(static_cast<Eigen::Index>(f), b) = kMaskIndex;
        ++batch.masked_count;
      }
    }
  }
  return batch;
}

TrainingBatch make_batch(std::span<const InteractionRecord> records) {
  std::vector<const InteractionRecord*> ptrs;
  for (const auto& r : records) ptrs.push_back(&r);
  Rng unused(0);
  return make_batch(ptrs, FeatureSchema(), false, 0.0, unused);
}

BatchEvaluation evaluate_batch(const OrcaModel& model, const TrainingBatch& batch,
                               const TrainConfig& cfg, const std::vector<double>* fixed_weights,
                               const NdeInputs* fixed_nde_inputs) {
  const IdMatrix* masked = batch.masked_ids.size() > 0 ? &batch.masked_ids : nullptr;
  BatchEvaluation eval{model.forward(batch.ids, masked, fixed_nde_inputs), {}};
  auto& L = eval.losses;
  const auto& f = eval.forward;
  const auto n = static_cast<std::size_t>(f.ctr_logit.cols());

  std::vector<double> probs(n);
  for (std::size_t i = 0; i < n; ++i) probs[i] = sigmoid(f.ctr_logit(0, static_cast<Eigen::Index>(i)));
  auto lc = loss_ctr(probs, batch.clicked);
  auto lt = loss_dt(f.dt_logits, batch.bins, batch.clicked);
  L.loss_ctr = lc.value;
  L.loss_dt = lt.value;
  L.dt_empty = lt.empty;

  const auto& orca_cfg = model.config().orca;
  if (orca_cfg.nde_active()) {
    if (fixed_weights != nullptr) {
      L.weights = *fixed_weights;
    } else {
      L.weights.assign(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        if (!batch.clicked[i]) continue;
        if (!orca_cfg.enable_scd) {
          L.weights[i] = 1.0;
          continue;
        }
        double w = instance_weight(lc.per_instance[i], lt.per_instance[i], cfg.alpha, cfg.gamma,
                                   cfg.clamp_eps);
        if (w < 0.0) {
          w = 0.0;
          ++L.clamped_weights;
        }
        L.weights[i] = w;
      }
    }
    auto lo = loss_orca(f.orca_logits, batch.bins, L.weights, batch.clicked);
    L.loss_orca = lo.value;
    L.orca_empty = lo.empty;
  } else {
    L.weights.assign(n, 0.0);
    L.orca_empty = true;
  }
  L.ctr_i = std::move(lc.per_instance);
  L.dt_i = std::move(lt.per_instance);
  L.total = L.loss_ctr + L.loss_dt + L.loss_orca;
  return eval;
}

void accumulate_gradients(OrcaModel& model, const TrainingBatch& batch,
                          const BatchEvaluation& eval, const LossSwitches& switches) {
  const auto& f = eval.forward;
  const auto& L = eval.losses;
  const Eigen::Index n = f.ctr_logit.cols();
  const Eigen::Index m = f.dt_logits.rows();

  Matrix d_ctr = Matrix::Zero(1, n);
  if (switches.ctr && n > 0) {
    for (Eigen::Index i = 0; i < n; ++i) {
      d_ctr(0, i) = (sigmoid(f.ctr_logit(0, i)) - batch.clicked[i]) / static_cast<double>(n);
    }
  }

  Matrix d_dt = Matrix::Zero(m, n);
  if (switches.dt && !L.dt_empty) {
    const double clicks = std::accumulate(batch.clicked.begin(), batch.clicked.end(), 0.0);
    const Matrix p = softmax_columns(f.dt_logits);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!batch.clicked[i]) continue;
      d_dt.col(i) = p.col(i) / clicks;
      d_dt(batch.bins[i], i) -= 1.0 / clicks;
    }
  }

  Matrix d_orca = Matrix::Zero(m, n);
  if (switches.orca && !L.orca_empty) {
    double total_weight = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (batch.clicked[i]) total_weight += L.weights[i];
    }
    const Matrix p = softmax_columns(f.orca_logits);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!batch.clicked[i] || L.weights[i] == 0.0) continue;
      const double s = L.weights[i] / total_weight;
      d_orca.col(i) = p.col(i) * s;
      d_orca(batch.bins[i], i) -= s;
    }
  }
  model.backward(f, d_ctr, d_dt, d_orca, switches.orca_through_dt);
}

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void Adam::step(const std::vector<Param*>& params) {
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (m_.size() != params.size()) throw std::logic_error("Adam: parameter set changed");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseAbs2();
    p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

BatchLosses train_step(OrcaModel& model, Adam& optimizer, const TrainingBatch& batch,
                       const TrainConfig& cfg) {
  auto eval = evaluate_batch(model, batch, cfg);
  const auto& L = eval.losses;
  if (!std::isfinite(L.total)) {
    std::ostringstream msg;
    msg << "non-finite loss: L_C=" << L.loss_ctr << " L_T=" << L.loss_dt
        << " L_ORCA=" << L.loss_orca;
    throw DivergenceError(msg.str());
  }
  auto params = model.parameters();
  for (auto* p : params) p->zero_grad();
  accumulate_gradients(model, batch, eval);
  optimizer.step(params);
  return std::move(eval.losses);
}

ModelConfig resolve_model_config(ModelConfig cfg, const TrainConfig& train_cfg) {
  apply_variant(cfg.orca, train_cfg.variant);
  return cfg;
}

TrainResult train(const FeatureSchema& schema, std::span<const InteractionRecord> train_data,
                  std::span<const InteractionRecord> val_data, const ModelConfig& model_cfg,
                  const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  if (train_data.empty()) throw DataError("empty training split");
  std::vector<int> val_true;
  std::vector<const InteractionRecord*> val_clicked;
  for (const auto& r : val_data) {
    if (r.clicked) {
      val_clicked.push_back(&r);
      val_true.push_back(r.dwell_bin.value());
    }
  }
  if (val_clicked.empty()) throw DataError("validation split has no clicked records");

  const auto resolved = resolve_model_config(model_cfg, cfg);
  OrcaModel model(resolved, schema);
  model.init(derive_seed(cfg.seed, "init"));
  Adam adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
  const bool mask = resolved.orca.enable_fci && resolved.orca.p_fea > 0.0;

  TrainResult result;
  result.model = model;
  double best_mae = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;

  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<const InteractionRecord*> chunk;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto shuffle_rng = make_rng(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t batches = 0;
    try {
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        chunk.clear();
        for (std::size_t k = start; k < end; ++k) chunk.push_back(&train_data[order[k]]);
        auto mask_rng = make_rng(cfg.seed, "mask",
                                 (static_cast<std::uint64_t>(epoch) << 32) | batches);
        const auto batch = make_batch(chunk, schema, mask, resolved.orca.p_fea, mask_rng);
        const auto losses = train_step(model, adam, batch, cfg);
        if (losses.total > cfg.divergence_threshold) {
          throw DivergenceError("loss " + std::to_string(losses.total) + " exceeds " +
                                std::to_string(cfg.divergence_threshold));
        }
        rec.loss_ctr += losses.loss_ctr;
        rec.loss_dt += losses.loss_dt;
        rec.loss_orca += losses.loss_orca;
        rec.loss_total += losses.total;
        ++batches;
      }
    } catch (const DivergenceError& e) {
      result.diverged = true;
      result.divergence_message = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
    const double nb = static_cast<double>(batches);
    rec.loss_ctr /= nb;
    rec.loss_dt /= nb;
    rec.loss_orca /= nb;
    rec.loss_total /= nb;

    const auto preds = predict(model, val_data);
    std::vector<int> pred_clicked;
    std::vector<int> clicked_labels;
    for (std::size_t i = 0; i < val_data.size(); ++i) {
      clicked_labels.push_back(val_data[i].clicked ? 1 : 0);
      if (val_data[i].clicked) pred_clicked.push_back(preds.dt_bin[i]);
    }
    const auto [mae, rmse] = mae_rmse_class(pred_clicked, val_true);
    rec.val_mae_class = mae;
    rec.val_rmse_class = rmse;
    rec.val_auc = auc_or_nan(preds.ctr_prob, clicked_labels);
    const auto moderate = interior_moderate_bins(val_true, model.bin_count());
    rec.val_moderate_ratio = moderate_mass(pred_clicked, val_true, moderate).ratio.value_or(0.0);

    rec.improved = mae < best_mae;
    if (rec.improved) {
      best_mae = mae;
      bad_epochs = 0;
      result.model = model;
      result.best_epoch = epoch;
    } else {
      ++bad_epochs;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (bad_epochs > cfg.early_stop_patience) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,loss_ctr,loss_dt,loss_orca,loss_total,val_mae_class,val_rmse_class,val_auc,"
         "val_moderate_ratio,improved\n";
  for (const auto& h : history) {
    out << h.epoch << ',' << h.loss_ctr << ',' << h.loss_dt << ',' << h.loss_orca << ','
        << h.loss_total << ',' << h.val_mae_class << ',' << h.val_rmse_class << ',' << h.val_auc
        << ',' << h.val_moderate_ratio << ',' << (h.improved ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace orca
