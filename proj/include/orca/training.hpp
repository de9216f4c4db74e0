#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "orca/head.hpp"
#include "orca/model.hpp"

namespace orca {

struct TrainConfig {
  double alpha = 1.0;
  double gamma = 1.0;
  double clamp_eps = 1e-3;
  double learning_rate = 1e-3;
  int batch_size = 256;
  int max_epochs = 30;
  int early_stop_patience = 3;
  std::uint64_t seed = 1;
  Variant variant = Variant::kFull;
  std::string optimizer = "adam";
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double divergence_threshold = 1e6;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// w = max(l_ctr, clamp_eps)^(-alpha) * l_dt + gamma
double instance_weight(double l_ctr, double l_dt, double alpha, double gamma, double clamp_eps);

struct LossValue {
  double value = 0.0;
  std::vector<double> per_instance;  // zero for excluded instances
  bool empty = false;                // nothing to average over; no gradient
};

inline constexpr double kProbClip = 1e-7;

// Mean binary cross-entropy over all impressions.
LossValue loss_ctr(std::span<const double> ctr_probs, std::span<const int> clicked);
// Mean softmax cross-entropy over clicked instances (logits are M x batch).
LossValue loss_dt(const Matrix& dt_logits, std::span<const int> dwell_bins,
                  std::span<const int> clicked);
// Weighted softmax cross-entropy over clicked instances, normalised by the
// sum of their weights.
LossValue loss_orca(const Matrix& orca_logits, std::span<const int> dwell_bins,
                    std::span<const double> weights, std::span<const int> clicked);

struct BatchLosses {
  double loss_ctr = 0.0;
  double loss_dt = 0.0;
  double loss_orca = 0.0;
  double total = 0.0;
  std::vector<double> ctr_i;
  std::vector<double> dt_i;
  std::vector<double> weights;
  bool dt_empty = false;
  bool orca_empty = false;
  int clamped_weights = 0;  // weights raised to 0 because gamma < 0
};

struct TrainingBatch {
  IdMatrix ids;
  IdMatrix masked_ids;  // empty unless counterfactual masking is on
  std::vector<int> clicked;
  std::vector<int> bins;  // -1 for unclicked
  int masked_count = 0;
};

// Draws one mask decision per record from `rng` when p_fea > 0.
TrainingBatch make_batch(std::span<const InteractionRecord* const> records,
                         const FeatureSchema& schema, bool mask, double p_fea, Rng& rng);
TrainingBatch make_batch(std::span<const InteractionRecord> records);

struct BatchEvaluation {
  ModelForward forward;
  BatchLosses losses;
};

// Forward pass and all three losses. `fixed_weights` and `fixed_nde_inputs`
// replace the values normally computed from the current parameters, which
// lets finite-difference checks hold the detached quantities constant.
BatchEvaluation evaluate_batch(const OrcaModel& model, const TrainingBatch& batch,
                               const TrainConfig& cfg,
                               const std::vector<double>* fixed_weights = nullptr,
                               const NdeInputs* fixed_nde_inputs = nullptr);

struct LossSwitches {
  bool ctr = true;
  bool dt = true;
  bool orca = true;
  // When false, L_ORCA is differentiated with y^T held fixed.
  bool orca_through_dt = true;
};

// Adds gradients of the selected losses to the model's accumulators.
void accumulate_gradients(OrcaModel& model, const TrainingBatch& batch,
                          const BatchEvaluation& eval, const LossSwitches& switches = {});

class Adam {
 public:
  Adam(double learning_rate, double beta1, double beta2, double epsilon);
  void step(const std::vector<Param*>& params);
  std::int64_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

// One optimiser update on L = L_C + L_T + L_ORCA. Throws DivergenceError on
// a non-finite loss.
BatchLosses train_step(OrcaModel& model, Adam& optimizer, const TrainingBatch& batch,
                       const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double loss_ctr = 0.0;
  double loss_dt = 0.0;
  double loss_orca = 0.0;
  double loss_total = 0.0;
  double val_mae_class = 0.0;
  double val_rmse_class = 0.0;
  double val_auc = 0.0;
  double val_moderate_ratio = 0.0;
  bool improved = false;
};

struct TrainResult {
  OrcaModel model;  // best epoch by validation MAE_class
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  bool early_stopped = false;
  bool diverged = false;
  std::string divergence_message;
};

// Model config with the variant's ablation switches applied.
ModelConfig resolve_model_config(ModelConfig cfg, const TrainConfig& train_cfg);

TrainResult train(const FeatureSchema& schema, std::span<const InteractionRecord> train_data,
                  std::span<const InteractionRecord> val_data, const ModelConfig& model_cfg,
                  const TrainConfig& train_cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace orca
