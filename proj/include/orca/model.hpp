#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "orca/backbone.hpp"
#include "orca/head.hpp"

namespace orca {

struct ModelConfig {
  BackboneConfig backbone;
  OrcaConfig orca;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Representations fed to the NDE path. They are values, never traced back
// into the backbone.
struct NdeInputs {
  Matrix shared;
  Matrix ctr;
  Matrix dt;
};

struct ModelForward {
  IdMatrix ids;
  Matrix embedded;
  ExpertsCache experts;
  Representations reps;
  TowerCache towers;
  Matrix ctr_logit;  // 1 x batch
  Matrix dt_logits;  // M x batch, y^T
  NdeInputs nde_inputs;
  NdeCache nde;
  Matrix nde_logits;   // M x batch, y^NDE
  Matrix orca_logits;  // M x batch, y^ORCA = y^T - y^NDE
};

// Backbone plus the ORCA head.
class OrcaModel {
 public:
  OrcaModel() = default;
  OrcaModel(const ModelConfig& cfg, const FeatureSchema& schema);

  const ModelConfig& config() const { return cfg_; }
  const FeatureSchema& schema() const { return schema_; }
  int bin_count() const { return cfg_.backbone.bin_count; }

  void init(std::uint64_t seed);

  // masked_ids feeds the NDE path from a second, masked backbone pass; when
  // null the NDE path reuses the unmasked representations. frozen_nde_inputs
  // overrides both (used to hold the detached inputs fixed).
  ModelForward forward(const IdMatrix& ids, const IdMatrix* masked_ids = nullptr,
                       const NdeInputs* frozen_nde_inputs = nullptr) const;

  // Accumulates dL/dtheta. d_orca reaches the backbone only through the
  // y^T term of the subtraction, and not at all when orca_through_dt is off.
  void backward(const ModelForward& fwd, const Matrix& d_ctr_logit, const Matrix& d_dt_logits,
                const Matrix& d_orca_logits, bool orca_through_dt = true);

  std::vector<Param*> parameters();
  std::vector<Param*> backbone_parameters();
  std::vector<Param*> head_parameters();
  void zero_grad();

  Backbone& backbone() { return backbone_; }
  const Backbone& backbone() const { return backbone_; }
  NdeHead& head() { return head_; }
  const NdeHead& head() const { return head_; }

 private:
  ModelConfig cfg_;
  FeatureSchema schema_;
  Backbone backbone_;
  NdeHead head_;
};

struct Predictions {
  std::vector<double> ctr_prob;
  std::vector<int> dt_bin;      // argmax of y^ORCA, ties to the lowest bin
  std::vector<int> raw_dt_bin;  // argmax of y^T
};

int argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& logits);

Predictions predict(const OrcaModel& model, std::span<const InteractionRecord> records,
                    std::size_t batch_size = 1024);

}  // namespace orca
