#include "orca/model.hpp"

#include "orca/errors.hpp"
#include "orca/json_fields.hpp"

namespace orca {

nlohmann::json to_json(const ModelConfig& cfg) {
  return {{"backbone", to_json(cfg.backbone)}, {"orca", to_json(cfg.orca)}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  JsonFields f(j, "model");
  if (f.has("backbone")) cfg.backbone = backbone_config_from_json(f.at("backbone"));
  if (f.has("orca")) cfg.orca = orca_config_from_json(f.at("orca"));
  f.finish();
  return cfg;
}

OrcaModel::OrcaModel(const ModelConfig& cfg, const FeatureSchema& schema)
    : cfg_(cfg), schema_(schema), backbone_(cfg.backbone, schema) {
  cfg_.orca.validate(cfg_.backbone.representation_dim());
  if (cfg_.orca.enable_fci && schema_.post_click_indices().empty()) {
    throw ConfigError("counterfactual masking enabled but the schema has no post-click field");
  }
  head_ = NdeHead(cfg_.orca, cfg_.backbone.representation_dim(), cfg_.backbone.bin_count);
}

void OrcaModel::init(std::uint64_t seed) {
  auto rng = make_rng(seed, "init.backbone");
  backbone_.init(rng);
  auto head_rng = make_rng(seed, "init.head");
  head_.init(head_rng);
}

ModelForward OrcaModel::forward(const IdMatrix& ids, const IdMatrix* masked_ids,
                                const NdeInputs* frozen_nde_inputs) const {
  ModelForward f;
  f.ids = ids;
  f.embedded = backbone_.embed(ids);
  f.reps = backbone_.forward_experts(f.embedded, &f.experts);
  auto out = backbone_.towers(f.reps, &f.towers);
  f.ctr_logit = std::move(out.ctr_logit);
  f.dt_logits = std::move(out.dt_logits);

  if (!cfg_.orca.nde_active()) {
    f.nde_logits = Matrix::Zero(f.dt_logits.rows(), f.dt_logits.cols());
    f.orca_logits = f.dt_logits;
    return f;
  }
  if (frozen_nde_inputs != nullptr) {
    f.nde_inputs = *frozen_nde_inputs;
  } else if (masked_ids != nullptr) {
    auto masked = backbone_.forward_experts(backbone_.embed(*masked_ids));
    f.nde_inputs = {std::move(masked.shared), std::move(masked.ctr), std::move(masked.dt)};
  } else {
    f.nde_inputs = {f.reps.shared, f.reps.ctr, f.reps.dt};
  }
  f.nde_logits = head_.forward(f.nde_inputs.shared, f.nde_inputs.ctr, f.nde_inputs.dt, &f.nde);
  f.orca_logits = f.dt_logits - f.nde_logits;
  return f;
}

void OrcaModel::backward(const ModelForward& fwd, const Matrix& d_ctr_logit,
                         const Matrix& d_dt_logits, const Matrix& d_orca_logits,
                         bool orca_through_dt) {
  Matrix d_dt = d_dt_logits;
  if (orca_through_dt) d_dt += d_orca_logits;
  if (cfg_.orca.nde_active()) head_.backward(fwd.nde, -d_orca_logits);

  const auto d_reps = backbone_.towers_backward(fwd.towers, d_ctr_logit, d_dt);
  const Matrix d_embedded = backbone_.experts_backward(fwd.experts, d_reps);
  backbone_.embed_backward(fwd.ids, d_embedded);
}

std::vector<Param*> OrcaModel::backbone_parameters() {
  std::vector<Param*> out;
  backbone_.collect(out);
  return out;
}

std::vector<Param*> OrcaModel::head_parameters() {
  std::vector<Param*> out;
  head_.collect(out);
  return out;
}

std::vector<Param*> OrcaModel::parameters() {
  auto out = backbone_parameters();
  head_.collect(out);
  return out;
}

void OrcaModel::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

int argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  int best = 0;
  for (Eigen::Index k = 1; k < logits.size(); ++k) {
    if (logits(k) > logits(best)) best = static_cast<int>(k);
  }
  return best;
}

Predictions predict(const OrcaModel& model, std::span<const InteractionRecord> records,
                    std::size_t batch_size) {
  Predictions p;
  p.ctr_prob.reserve(records.size());
  p.dt_bin.reserve(records.size());
  p.raw_dt_bin.reserve(records.size());
  for (std::size_t start = 0; start < records.size(); start += batch_size) {
    const auto chunk = records.subspan(start, std::min(batch_size, records.size() - start));
    const auto f = model.forward(make_id_matrix(chunk));
    for (Eigen::Index b = 0; b < f.ctr_logit.cols(); ++b) {
      p.ctr_prob.push_back(sigmoid(f.ctr_logit(0, b)));
      p.dt_bin.push_back(argmax_lowest(f.orca_logits.col(b)));
      p.raw_dt_bin.push_back(argmax_lowest(f.dt_logits.col(b)));
    }
  }
  return p;
}

}  // namespace orca
