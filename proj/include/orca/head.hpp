#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "orca/nn.hpp"
#include "orca/rng.hpp"
#include "orca/schema.hpp"

namespace orca {

// Ablation variants: backbone only, + counterfactual masking, + cross-task
// interaction with instance weighting, and both.
enum class Variant { kBase, kFci, kScd, kFull };

Variant parse_variant(const std::string& s);
std::string to_string(Variant v);

struct OrcaConfig {
  double p_fea = 0.5;
  int n_heads = 2;
  int attn_dim = 0;  // 0 means "same as the representation dim"
  std::vector<int> nde_tower_hidden = {32};
  bool enable_fci = true;
  bool enable_scd = true;

  void validate(int representation_dim) const;
  int resolved_attn_dim(int representation_dim) const {
    return attn_dim > 0 ? attn_dim : representation_dim;
  }
  // The NDE tower only trains when at least one mechanism is on; otherwise
  // it stays at its zero init and the model reduces to the backbone.
  bool nde_active() const { return enable_fci || enable_scd; }
};

void apply_variant(OrcaConfig& cfg, Variant v);
Variant variant_of(const OrcaConfig& cfg);

nlohmann::json to_json(const OrcaConfig& cfg);
OrcaConfig orca_config_from_json(const nlohmann::json& j);

// With probability p_fea (one draw per record) every post-click field is
// replaced by the MASK index. Other fields are never touched.
InteractionRecord mask_post_click(const InteractionRecord& record, const FeatureSchema& schema,
                                  double p_fea, Rng& rng);
// Same, returning whether the record was masked. Writes into `out`.
bool mask_post_click_into(const InteractionRecord& record,
                          std::span<const std::size_t> post_click_fields, double p_fea,
                          Rng& rng, InteractionRecord& out);

struct AttentionCache {
  Matrix ctr_in, dt_in;              // tokens, dim x batch
  Matrix q_ctr, k_ctr, v_ctr;        // attn_dim x batch
  Matrix q_dt, k_dt, v_dt;
  std::vector<Matrix> probs;         // per head: 4 x batch (cc, ct, tc, tt)
  Matrix o_ctr, o_dt;                // concatenated heads, attn_dim x batch
};

// One multi-head self-attention layer over the two-token sequence
// [e^C; e^T]. Output is both attended tokens stacked (2*dim x batch).
class CrossAttention {
 public:
  CrossAttention() = default;
  CrossAttention(int dim, int attn_dim, int n_heads);

  int dim() const { return dim_; }
  int heads() const { return n_heads_; }
  void init(Rng& rng);

  Matrix forward(const Matrix& e_ctr, const Matrix& e_dt, AttentionCache* cache = nullptr) const;
  // Accumulates parameter gradients only; the inputs are detached.
  void backward(const AttentionCache& cache, const Matrix& d_out);

  Linear& query() { return q_; }
  Linear& key() { return k_; }
  Linear& value() { return v_; }
  Linear& output() { return o_; }
  void collect(std::vector<Param*>& out);

 private:
  int dim_ = 0;
  int attn_dim_ = 0;
  int n_heads_ = 1;
  Linear q_, k_, v_, o_;
};

struct NdeCache {
  AttentionCache attention;
  Matrix tower_in;
  MlpCache tower;
};

// Negative-dependency extractor: the auxiliary DT tower over e^S, optionally
// extended with the cross-task interaction of e^C and e^T.
class NdeHead {
 public:
  NdeHead() = default;
  NdeHead(const OrcaConfig& cfg, int representation_dim, int bin_count);

  bool uses_interaction() const { return use_interaction_; }
  void init(Rng& rng);

  Matrix forward(const Matrix& e_shared, const Matrix& e_ctr, const Matrix& e_dt,
                 NdeCache* cache = nullptr) const;
  void backward(const NdeCache& cache, const Matrix& d_nde_logits);

  Mlp& tower() { return tower_; }
  CrossAttention& attention() { return attention_; }
  void collect(std::vector<Param*>& out);

 private:
  bool use_interaction_ = false;
  int representation_dim_ = 0;
  CrossAttention attention_;
  Mlp tower_;
};

// orca = dt - nde, elementwise in logit space.
std::vector<double> debias(std::span<const double> dt_logits, std::span<const double> nde_logits);

}  // namespace orca
