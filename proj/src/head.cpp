#include "orca/head.hpp"

#include <cmath>

#include "orca/errors.hpp"
#include "orca/json_fields.hpp"

namespace orca {

Variant parse_variant(const std::string& s) {
  if (s == "base") return Variant::kBase;
  if (s == "fci") return Variant::kFci;
  if (s == "scd") return Variant::kScd;
  if (s == "full") return Variant::kFull;
  throw ConfigError("unknown variant '" + s + "' (expected base, fci, scd or full)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kBase: return "base";
    case Variant::kFci: return "fci";
    case Variant::kScd: return "scd";
    case Variant::kFull: return "full";
  }
  return "full";
}

void OrcaConfig::validate(int representation_dim) const {
  if (!(p_fea >= 0.0 && p_fea <= 1.0)) throw ConfigError("p_fea must lie in [0, 1]");
  if (n_heads < 1) throw ConfigError("n_heads must be >= 1");
  if (attn_dim < 0) throw ConfigError("attn_dim must be >= 0");
  if (resolved_attn_dim(representation_dim) % n_heads != 0) {
    throw ConfigError("n_heads must divide attn_dim");
  }
  for (int w : nde_tower_hidden) {
    if (w < 1) throw ConfigError("nde tower widths must be >= 1");
  }
}

void apply_variant(OrcaConfig& cfg, Variant v) {
  cfg.enable_fci = v == Variant::kFci || v == Variant::kFull;
  cfg.enable_scd = v == Variant::kScd || v == Variant::kFull;
}

Variant variant_of(const OrcaConfig& cfg) {
  if (cfg.enable_fci && cfg.enable_scd) return Variant::kFull;
  if (cfg.enable_fci) return Variant::kFci;
  if (cfg.enable_scd) return Variant::kScd;
  return Variant::kBase;
}

nlohmann::json to_json(const OrcaConfig& c) {
  return {{"p_fea", c.p_fea},
          {"n_heads", c.n_heads},
          {"attn_dim", c.attn_dim},
          {"nde_tower_hidden", c.nde_tower_hidden},
          {"enable_fci", c.enable_fci},
          {"enable_scd", c.enable_scd}};
}

OrcaConfig orca_config_from_json(const nlohmann::json& j) {
  OrcaConfig c;
  JsonFields f(j, "orca");
  f.read("p_fea", c.p_fea);
  f.read("n_heads", c.n_heads);
  f.read("attn_dim", c.attn_dim);
  f.read("nde_tower_hidden", c.nde_tower_hidden);
  f.read("enable_fci", c.enable_fci);
  f.read("enable_scd", c.enable_scd);
  f.finish();
  return c;
}

bool mask_post_click_into(const InteractionRecord& record,
                          std::span<const std::size_t> post_click_fields, double p_fea,
                          Rng& rng, InteractionRecord& out) {
  out = record;
  if (!(uniform01(rng) < p_fea)) return false;
  for (auto f : post_click_fields) out.feature_ids.at(f) = kMaskIndex;
  return true;
}

InteractionRecord mask_post_click(const InteractionRecord& record, const FeatureSchema& schema,
                                  double p_fea, Rng& rng) {
  InteractionRecord out;
  const auto fields = schema.post_click_indices();
  mask_post_click_into(record, fields, p_fea, rng, out);
  return out;
}

CrossAttention::CrossAttention(int dim, int attn_dim, int n_heads)
    : dim_(dim),
      attn_dim_(attn_dim),
      n_heads_(n_heads),
      q_("orca.attention.query", dim, attn_dim, false),
      k_("orca.attention.key", dim, attn_dim, false),
      v_("orca.attention.value", dim, attn_dim, false),
      o_("orca.attention.output", attn_dim, dim, false) {
  if (attn_dim % n_heads != 0) throw ConfigError("n_heads must divide attn_dim");
}

void CrossAttention::init(Rng& rng) {
  q_.init(rng);
  k_.init(rng);
  v_.init(rng);
  o_.init(rng);
}

Matrix CrossAttention::forward(const Matrix& e_ctr, const Matrix& e_dt,
                               AttentionCache* cache) const {
  const Eigen::Index batch = e_ctr.cols();
  const int dh = attn_dim_ / n_heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix qc = q_.forward(e_ctr), kc = k_.forward(e_ctr), vc = v_.forward(e_ctr);
  Matrix qt = q_.forward(e_dt), kt = k_.forward(e_dt), vt = v_.forward(e_dt);
  Matrix oc(attn_dim_, batch), ot(attn_dim_, batch);
  std::vector<Matrix> probs;
  for (int h = 0; h < n_heads_; ++h) {
    const auto rows = [&](const Matrix& m) { return m.middleRows(h * dh, dh); };
    // Row-vectors of scores, query token first.
    RowVector s_cc = rows(qc).cwiseProduct(rows(kc)).colwise().sum() * scale;
    RowVector s_ct = rows(qc).cwiseProduct(rows(kt)).colwise().sum() * scale;
    RowVector s_tc = rows(qt).cwiseProduct(rows(kc)).colwise().sum() * scale;
    RowVector s_tt = rows(qt).cwiseProduct(rows(kt)).colwise().sum() * scale;
    Matrix p(4, batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
      const double mc = std::max(s_cc(b), s_ct(b));
      const double a = std::exp(s_cc(b) - mc), c = std::exp(s_ct(b) - mc);
      p(0, b) = a / (a + c);
      p(1, b) = c / (a + c);
      const double mt = std::max(s_tc(b), s_tt(b));
      const double e = std::exp(s_tc(b) - mt), f = std::exp(s_tt(b) - mt);
      p(2, b) = e / (e + f);
      p(3, b) = f / (e + f);
    }
    oc.middleRows(h * dh, dh) = rows(vc).cwiseProduct(p.row(0).replicate(dh, 1)) +
                                rows(vt).cwiseProduct(p.row(1).replicate(dh, 1));
    ot.middleRows(h * dh, dh) = rows(vc).cwiseProduct(p.row(2).replicate(dh, 1)) +
                                rows(vt).cwiseProduct(p.row(3).replicate(dh, 1));
    probs.push_back(std::move(p));
  }
  Matrix out(2 * dim_, batch);
  out.topRows(dim_) = o_.forward(oc);
  out.bottomRows(dim_) = o_.forward(ot);
  if (cache != nullptr) {
    cache->ctr_in = e_ctr;
    cache->dt_in = e_dt;
    cache->q_ctr = std::move(qc);
    cache->k_ctr = std::move(kc);
    cache->v_ctr = std::move(vc);
    cache->q_dt = std::move(qt);
    cache->k_dt = std::move(kt);
    cache->v_dt = std::move(vt);
    cache->probs = std::move(probs);
    cache->o_ctr = std::move(oc);
    cache->o_dt = std::move(ot);
  }
  return out;
}

void CrossAttention::backward(const AttentionCache& c, const Matrix& d_out) {
  const Eigen::Index batch = d_out.cols();
  const int dh = attn_dim_ / n_heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Matrix d_oc = o_.backward(c.o_ctr, d_out.topRows(dim_));
  const Matrix d_ot = o_.backward(c.o_dt, d_out.bottomRows(dim_));

  Matrix dqc = Matrix::Zero(attn_dim_, batch), dkc = dqc, dvc = dqc;
  Matrix dqt = dqc, dkt = dqc, dvt = dqc;
  for (int h = 0; h < n_heads_; ++h) {
    const auto& p = c.probs[h];
    auto sl = [&](const Matrix& m) { return m.middleRows(h * dh, dh); };
    auto rep = [&](const RowVector& r) { return r.replicate(dh, 1); };
    const RowVector p_cc = p.row(0), p_ct = p.row(1), p_tc = p.row(2), p_tt = p.row(3);

    dvc.middleRows(h * dh, dh) = sl(d_oc).cwiseProduct(rep(p_cc)) + sl(d_ot).cwiseProduct(rep(p_tc));
    dvt.middleRows(h * dh, dh) = sl(d_oc).cwiseProduct(rep(p_ct)) + sl(d_ot).cwiseProduct(rep(p_tt));

    const RowVector dp_cc = sl(d_oc).cwiseProduct(sl(c.v_ctr)).colwise().sum();
    const RowVector dp_ct = sl(d_oc).cwiseProduct(sl(c.v_dt)).colwise().sum();
    const RowVector dp_tc = sl(d_ot).cwiseProduct(sl(c.v_ctr)).colwise().sum();
    const RowVector dp_tt = sl(d_ot).cwiseProduct(sl(c.v_dt)).colwise().sum();
    // Two-way softmax backward, pre-scaled.
    const RowVector mean_c = p_cc.cwiseProduct(dp_cc) + p_ct.cwiseProduct(dp_ct);
    const RowVector mean_t = p_tc.cwiseProduct(dp_tc) + p_tt.cwiseProduct(dp_tt);
    const RowVector ds_cc = p_cc.cwiseProduct(dp_cc - mean_c) * scale;
    const RowVector ds_ct = p_ct.cwiseProduct(dp_ct - mean_c) * scale;
    const RowVector ds_tc = p_tc.cwiseProduct(dp_tc - mean_t) * scale;
    const RowVector ds_tt = p_tt.cwiseProduct(dp_tt - mean_t) * scale;

    dqc.middleRows(h * dh, dh) =
        sl(c.k_ctr).cwiseProduct(rep(ds_cc)) + sl(c.k_dt).cwiseProduct(rep(ds_ct));
    dqt.middleRows(h * dh, dh) =
        sl(c.k_ctr).cwiseProduct(rep(ds_tc)) + sl(c.k_dt).cwiseProduct(rep(ds_tt));
    dkc.middleRows(h * dh, dh) =
        sl(c.q_ctr).cwiseProduct(rep(ds_cc)) + sl(c.q_dt).cwiseProduct(rep(ds_tc));
    dkt.middleRows(h * dh, dh) =
        sl(c.q_ctr).cwiseProduct(rep(ds_ct)) + sl(c.q_dt).cwiseProduct(rep(ds_tt));
  }
  q_.backward(c.ctr_in, dqc);
  q_.backward(c.dt_in, dqt);
  k_.backward(c.ctr_in, dkc);
  k_.backward(c.dt_in, dkt);
  v_.backward(c.ctr_in, dvc);
  v_.backward(c.dt_in, dvt);
}

void CrossAttention::collect(std::vector<Param*>& out) {
  q_.collect(out);
  k_.collect(out);
  v_.collect(out);
  o_.collect(out);
}

NdeHead::NdeHead(const OrcaConfig& cfg, int representation_dim, int bin_count)
    : use_interaction_(cfg.enable_scd), representation_dim_(representation_dim) {
  cfg.validate(representation_dim);
  if (use_interaction_) {
    attention_ = CrossAttention(representation_dim, cfg.resolved_attn_dim(representation_dim),
                                cfg.n_heads);
  }
  const int in = use_interaction_ ? 3 * representation_dim : representation_dim;
  tower_ = Mlp("orca.nde_tower", in, cfg.nde_tower_hidden, bin_count, false);
}

void NdeHead::init(Rng& rng) {
  if (use_interaction_) attention_.init(rng);
  // Zero output layer: the head starts as a no-op on the DT logits.
  tower_.init(rng, /*zero_output_layer=*/true);
}

Matrix NdeHead::forward(const Matrix& e_shared, const Matrix& e_ctr, const Matrix& e_dt,
                        NdeCache* cache) const {
  Matrix in;
  if (use_interaction_) {
    const Matrix inter = attention_.forward(e_ctr, e_dt, cache ? &cache->attention : nullptr);
    in.resize(e_shared.rows() + inter.rows(), e_shared.cols());
    in.topRows(e_shared.rows()) = e_shared;
    in.bottomRows(inter.rows()) = inter;
  } else {
    in = e_shared;
  }
  Matrix out = tower_.forward(in, cache ? &cache->tower : nullptr);
  if (cache != nullptr) cache->tower_in = std::move(in);
  return out;
}

void NdeHead::backward(const NdeCache& cache, const Matrix& d_nde_logits) {
  const Matrix d_in = tower_.backward(cache.tower, d_nde_logits);
  if (use_interaction_) {
    attention_.backward(cache.attention, d_in.bottomRows(2 * representation_dim_));
  }
  // e^S, e^C, e^T are detached: nothing flows further.
}

void NdeHead::collect(std::vector<Param*>& out) {
  if (use_interaction_) attention_.collect(out);
  tower_.collect(out);
}

std::vector<double> debias(std::span<const double> dt_logits, std::span<const double> nde_logits) {
  if (dt_logits.size() != nde_logits.size()) {
    throw std::invalid_argument("debias: logit length mismatch");
  }
  std::vector<double> out(dt_logits.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dt_logits[i] - nde_logits[i];
  return out;
}

}  // namespace orca
