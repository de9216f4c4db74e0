#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "orca/nn.hpp"
#include "orca/schema.hpp"

namespace orca {

enum class BackboneArch { kMmoe, kPle };

struct BackboneConfig {
  BackboneArch arch = BackboneArch::kMmoe;
  int embedding_dim = 16;
  int n_shared_experts = 2;
  int n_task_experts = 2;  // PLE only
  std::vector<int> expert_hidden = {64, 32};
  std::vector<int> tower_hidden = {32};
  int n_ple_levels = 1;
  int bin_count = kDefaultBinCount;

  void validate() const;
  int representation_dim() const { return expert_hidden.back(); }
};

nlohmann::json to_json(const BackboneConfig& cfg);
BackboneConfig backbone_config_from_json(const nlohmann::json& j);

// Feature ids of a batch: rows are fields, columns are instances.
using IdMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

IdMatrix make_id_matrix(std::span<const InteractionRecord> records);
IdMatrix make_id_matrix(std::span<const InteractionRecord* const> records);

// e^S, e^C, e^T for a batch (representation_dim x batch each).
struct Representations {
  Matrix shared;
  Matrix ctr;
  Matrix dt;
};

struct TowerOutputs {
  Matrix ctr_logit;  // 1 x batch
  Matrix dt_logits;  // M x batch
};

// Single-instance view of a backbone forward pass.
struct ForwardOutputs {
  std::vector<double> e_shared;
  std::vector<double> e_ctr;
  std::vector<double> e_dt;
  double ctr_logit = 0.0;
  double ctr_prob = 0.5;
  std::vector<double> dt_logits;
};

enum RepresentationSlot : std::size_t { kSharedSlot = 0, kCtrSlot = 1, kDtSlot = 2 };

struct LevelCache {
  std::array<Matrix, 3> inputs;
  std::vector<MlpCache> experts;
  std::vector<Matrix> expert_out;
  std::array<Matrix, 3> gate_weights;  // n_gate_experts x batch
};

struct ExpertsCache {
  std::vector<LevelCache> levels;
};

struct TowerCache {
  Matrix ctr_in;
  Matrix dt_in;
  MlpCache ctr;
  MlpCache dt;
};

// Field embeddings, gated experts (MMoE or PLE) and the CTR / DT towers.
class Backbone {
 public:
  Backbone() = default;
  Backbone(const BackboneConfig& cfg, const FeatureSchema& schema);

  const BackboneConfig& config() const { return cfg_; }
  int field_count() const { return static_cast<int>(tables_.size()); }
  int input_dim() const { return field_count() * cfg_.embedding_dim; }

  void init(Rng& rng);

  Matrix embed(const IdMatrix& ids) const;
  Representations forward_experts(const Matrix& embedded, ExpertsCache* cache = nullptr) const;
  TowerOutputs towers(const Representations& reps, TowerCache* cache = nullptr) const;

  // Backward passes accumulate parameter gradients and return input grads.
  Representations towers_backward(const TowerCache& cache, const Matrix& d_ctr_logit,
                                  const Matrix& d_dt_logits);
  Matrix experts_backward(const ExpertsCache& cache, const Representations& d_reps);
  void embed_backward(const IdMatrix& ids, const Matrix& d_embedded);

  ForwardOutputs forward(const InteractionRecord& record) const;

  Param& embedding_table(std::size_t field) { return tables_.at(field); }
  const Param& embedding_table(std::size_t field) const { return tables_.at(field); }
  Mlp& expert(std::size_t level, std::size_t k) { return levels_.at(level).experts.at(k).net; }
  Linear& gate(std::size_t level, RepresentationSlot slot) {
    return levels_.at(level).gates[slot].proj;
  }
  Mlp& ctr_tower() { return ctr_tower_; }
  Mlp& dt_tower() { return dt_tower_; }

  // Embedding tables first, then experts / gates, then towers.
  void collect(std::vector<Param*>& out);

 private:
  struct Expert {
    Mlp net;
    RepresentationSlot input = kSharedSlot;
  };
  struct Gate {
    std::vector<int> experts;
    RepresentationSlot input = kSharedSlot;
    bool uniform = false;
    Linear proj;
  };
  struct Level {
    std::vector<Expert> experts;
    std::array<Gate, 3> gates;
  };

  BackboneConfig cfg_;
  std::vector<Param> tables_;
  std::vector<Level> levels_;
  Mlp ctr_tower_;
  Mlp dt_tower_;
};

}  // namespace orca
