#include "orca/backbone.hpp"

#include "orca/errors.hpp"
#include "orca/json_fields.hpp"

namespace orca {
namespace {

Matrix concat_rows(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b.rows()) = b;
  return out;
}

std::vector<double> column(const Matrix& m) {
  return std::vector<double>(m.col(0).data(), m.col(0).data() + m.rows());
}

}  // namespace

void BackboneConfig::validate() const {
  if (embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
  if (n_shared_experts < 1) throw ConfigError("n_shared_experts must be >= 1");
  if (n_task_experts < 0) throw ConfigError("n_task_experts must be >= 0");
  if (expert_hidden.empty()) throw ConfigError("expert_hidden needs at least one width");
  for (int w : expert_hidden) {
    if (w < 1) throw ConfigError("expert widths must be >= 1");
  }
  for (int w : tower_hidden) {
    if (w < 1) throw ConfigError("tower widths must be >= 1");
  }
  if (n_ple_levels < 1) throw ConfigError("n_ple_levels must be >= 1");
  if (bin_count < 2) throw ConfigError("bin count M must be >= 2");
}

nlohmann::json to_json(const BackboneConfig& c) {
  return {{"arch", c.arch == BackboneArch::kMmoe ? "mmoe" : "ple"},
          {"embedding_dim", c.embedding_dim},
          {"n_shared_experts", c.n_shared_experts},
          {"n_task_experts", c.n_task_experts},
          {"expert_hidden", c.expert_hidden},
          {"tower_hidden", c.tower_hidden},
          {"n_ple_levels", c.n_ple_levels},
          {"bin_count", c.bin_count}};
}

BackboneConfig backbone_config_from_json(const nlohmann::json& j) {
  BackboneConfig c;
  JsonFields f(j, "backbone");
  std::string arch = c.arch == BackboneArch::kMmoe ? "mmoe" : "ple";
  f.read("arch", arch);
  if (arch == "mmoe") {
    c.arch = BackboneArch::kMmoe;
  } else if (arch == "ple") {
    c.arch = BackboneArch::kPle;
  } else {
    throw ConfigError("unknown backbone arch '" + arch + "'");
  }
  f.read("embedding_dim", c.embedding_dim);
  f.read("n_shared_experts", c.n_shared_experts);
  f.read("n_task_experts", c.n_task_experts);
  f.read("expert_hidden", c.expert_hidden);
  f.read("tower_hidden", c.tower_hidden);
  f.read("n_ple_levels", c.n_ple_levels);
  f.read("bin_count", c.bin_count);
  f.finish();
  c.validate();
  return c;
}

IdMatrix make_id_matrix(std::span<const InteractionRecord> records) {
  if (records.empty()) return IdMatrix(0, 0);
  IdMatrix ids(static_cast<Eigen::Index>(records.front().feature_ids.size()),
               static_cast<Eigen::Index>(records.size()));
  for (std::size_t b = 0; b < records.size(); ++b) {
    for (std::size_t f = 0; f < records[b].feature_ids.size(); ++f) {
      ids(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(b)) =
          records[b].feature_ids[f];
    }
  }
  return ids;
}

IdMatrix make_id_matrix(std::span<const InteractionRecord* const> records) {
  if (records.empty()) return IdMatrix(0, 0);
  IdMatrix ids(static_cast<Eigen::Index>(records.front()->feature_ids.size()),
               static_cast<Eigen::Index>(records.size()));
  for (std::size_t b = 0; b < records.size(); ++b) {
    for (std::size_t f = 0; f < records[b]->feature_ids.size(); ++f) {
      ids(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(b)) =
          records[b]->feature_ids[f];
    }
  }
  return ids;
}

Backbone::Backbone(const BackboneConfig& cfg, const FeatureSchema& schema) : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.embedding_dim;
  for (const auto& field : schema.fields()) {
    tables_.emplace_back("backbone.embedding." + field.name, d, field.vocab_size);
  }
  const int r = cfg_.representation_dim();
  const std::vector<int> expert_hidden(cfg_.expert_hidden.begin(), cfg_.expert_hidden.end() - 1);

  auto make_expert = [&](const std::string& name, int in, RepresentationSlot slot) {
    return Expert{Mlp(name, in, expert_hidden, r, /*relu_output=*/true), slot};
  };
  auto make_gate = [&](const std::string& name, int in, std::vector<int> experts,
                       RepresentationSlot slot, bool uniform) {
    Gate g;
    g.input = slot;
    g.uniform = uniform;
    if (!uniform) g.proj = Linear(name, in, static_cast<int>(experts.size()));
    g.experts = std::move(experts);
    return g;
  };

  if (cfg_.arch == BackboneArch::kMmoe) {
    // Every expert is shared; e^S is their uniform mixture.
    Level level;
    std::vector<int> all;
    for (int k = 0; k < cfg_.n_shared_experts; ++k) {
      level.experts.push_back(make_expert("backbone.expert" + std::to_string(k), input_dim(),
                                          kSharedSlot));
      all.push_back(k);
    }
    level.gates[kSharedSlot] = make_gate("", input_dim(), all, kSharedSlot, true);
    level.gates[kCtrSlot] = make_gate("backbone.gate_ctr", input_dim(), all, kCtrSlot, false);
    level.gates[kDtSlot] = make_gate("backbone.gate_dt", input_dim(), all, kDtSlot, false);
    levels_.push_back(std::move(level));
  } else {
    for (int l = 0; l < cfg_.n_ple_levels; ++l) {
      const int in = l == 0 ? input_dim() : r;
      const std::string prefix = "backbone.level" + std::to_string(l);
      Level level;
      std::vector<int> shared, ctr, dt;
      for (int k = 0; k < cfg_.n_shared_experts; ++k) {
        shared.push_back(static_cast<int>(level.experts.size()));
        level.experts.push_back(
            make_expert(prefix + ".shared_expert" + std::to_string(k), in, kSharedSlot));
      }
      for (int k = 0; k < cfg_.n_task_experts; ++k) {
        ctr.push_back(static_cast<int>(level.experts.size()));
        level.experts.push_back(
            make_expert(prefix + ".ctr_expert" + std::to_string(k), in, kCtrSlot));
      }
      for (int k = 0; k < cfg_.n_task_experts; ++k) {
        dt.push_back(static_cast<int>(level.experts.size()));
        level.experts.push_back(
            make_expert(prefix + ".dt_expert" + std::to_string(k), in, kDtSlot));
      }
      std::vector<int> all(level.experts.size());
      for (std::size_t k = 0; k < all.size(); ++k) all[k] = static_cast<int>(k);
      ctr.insert(ctr.end(), shared.begin(), shared.end());
      dt.insert(dt.end(), shared.begin(), shared.end());
      level.gates[kSharedSlot] = make_gate(prefix + ".gate_shared", in, all, kSharedSlot, false);
      level.gates[kCtrSlot] = make_gate(prefix + ".gate_ctr", in, ctr, kCtrSlot, false);
      level.gates[kDtSlot] = make_gate(prefix + ".gate_dt", in, dt, kDtSlot, false);
      levels_.push_back(std::move(level));
    }
  }
  ctr_tower_ = Mlp("backbone.tower_ctr", 2 * r, cfg_.tower_hidden, 1, false);
  dt_tower_ = Mlp("backbone.tower_dt", 2 * r, cfg_.tower_hidden, cfg_.bin_count, false);
}

void Backbone::init(Rng& rng) {
  std::normal_distribution<double> emb(0.0, 0.05);
  for (auto& t : tables_) {
    for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
      for (Eigen::Index r = 0; r < t.value.rows(); ++r) t.value(r, c) = emb(rng);
    }
  }
  for (auto& level : levels_) {
    for (auto& e : level.experts) e.net.init(rng);
    for (auto& g : level.gates) {
      if (!g.uniform) g.proj.init(rng);
    }
  }
  ctr_tower_.init(rng);
  dt_tower_.init(rng);
}

Matrix Backbone::embed(const IdMatrix& ids) const {
  if (ids.rows() != field_count()) {
    throw DataError("batch has " + std::to_string(ids.rows()) + " fields, model expects " +
                    std::to_string(field_count()));
  }
  const int d = cfg_.embedding_dim;
  Matrix x(input_dim(), ids.cols());
  for (Eigen::Index b = 0; b < ids.cols(); ++b) {
    for (int f = 0; f < field_count(); ++f) {
      const int id = ids(f, b);
      if (id < 0 || id >= tables_[f].value.cols()) {
        throw DataError("feature index " + std::to_string(id) + " out of range for field " +
                        std::to_string(f));
      }
      x.block(f * d, b, d, 1) = tables_[f].value.col(id);
    }
  }
  return x;
}

void Backbone::embed_backward(const IdMatrix& ids, const Matrix& d_embedded) {
  const int d = cfg_.embedding_dim;
  for (Eigen::Index b = 0; b < ids.cols(); ++b) {
    for (int f = 0; f < field_count(); ++f) {
      tables_[f].grad.col(ids(f, b)) += d_embedded.block(f * d, b, d, 1);
    }
  }
}

Representations Backbone::forward_experts(const Matrix& embedded, ExpertsCache* cache) const {
  std::array<Matrix, 3> inputs = {embedded, embedded, embedded};
  if (cache != nullptr) cache->levels.assign(levels_.size(), LevelCache{});
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    const auto& level = levels_[l];
    std::vector<Matrix> outs(level.experts.size());
    std::vector<MlpCache> expert_caches(level.experts.size());
    for (std::size_t k = 0; k < level.experts.size(); ++k) {
      const auto& e = level.experts[k];
      outs[k] = e.net.forward(inputs[e.input], cache ? &expert_caches[k] : nullptr);
    }
    std::array<Matrix, 3> next;
    std::array<Matrix, 3> weights;
    for (std::size_t s = 0; s < 3; ++s) {
      const auto& g = level.gates[s];
      const auto n = static_cast<Eigen::Index>(g.experts.size());
      if (g.uniform) {
        weights[s] = Matrix::Constant(n, embedded.cols(), 1.0 / static_cast<double>(n));
      } else {
        weights[s] = softmax_columns(g.proj.forward(inputs[g.input]));
      }
      next[s] = Matrix::Zero(cfg_.representation_dim(), embedded.cols());
      for (Eigen::Index k = 0; k < n; ++k) {
        next[s] += outs[g.experts[k]].cwiseProduct(
            weights[s].row(k).replicate(cfg_.representation_dim(), 1));
      }
    }
    if (cache != nullptr) {
      auto& lc = cache->levels[l];
      lc.inputs = inputs;
      lc.experts = std::move(expert_caches);
      lc.expert_out = std::move(outs);
      lc.gate_weights = weights;
    }
    inputs = std::move(next);
  }
  return {std::move(inputs[kSharedSlot]), std::move(inputs[kCtrSlot]),
          std::move(inputs[kDtSlot])};
}

Matrix Backbone::experts_backward(const ExpertsCache& cache, const Representations& d_reps) {
  std::array<Matrix, 3> d_out = {d_reps.shared, d_reps.ctr, d_reps.dt};
  const int r = cfg_.representation_dim();
  for (std::size_t l = levels_.size(); l-- > 0;) {
    auto& level = levels_[l];
    const auto& lc = cache.levels[l];
    const Eigen::Index batch = lc.inputs[0].cols();
    std::vector<Matrix> d_expert(level.experts.size(), Matrix::Zero(r, batch));
    std::array<Matrix, 3> d_in;
    for (auto& m : d_in) m = Matrix::Zero(lc.inputs[0].rows(), batch);

    for (std::size_t s = 0; s < 3; ++s) {
      auto& g = level.gates[s];
      const auto& w = lc.gate_weights[s];
      Matrix dw(w.rows(), batch);
      for (Eigen::Index k = 0; k < w.rows(); ++k) {
        const int e = g.experts[k];
        d_expert[e] += d_out[s].cwiseProduct(w.row(k).replicate(r, 1));
        dw.row(k) = lc.expert_out[e].cwiseProduct(d_out[s]).colwise().sum();
      }
      if (!g.uniform) {
        d_in[g.input] += g.proj.backward(lc.inputs[g.input], softmax_backward(w, dw));
      }
    }
    for (std::size_t k = 0; k < level.experts.size(); ++k) {
      auto& e = level.experts[k];
      d_in[e.input] += e.net.backward(lc.experts[k], d_expert[k]);
    }
    d_out = std::move(d_in);
  }
  return d_out[0] + d_out[1] + d_out[2];
}

TowerOutputs Backbone::towers(const Representations& reps, TowerCache* cache) const {
  Matrix ctr_in = concat_rows(reps.shared, reps.ctr);
  Matrix dt_in = concat_rows(reps.shared, reps.dt);
  TowerOutputs out;
  out.ctr_logit = ctr_tower_.forward(ctr_in, cache ? &cache->ctr : nullptr);
  out.dt_logits = dt_tower_.forward(dt_in, cache ? &cache->dt : nullptr);
  if (cache != nullptr) {
    cache->ctr_in = std::move(ctr_in);
    cache->dt_in = std::move(dt_in);
  }
  return out;
}

Representations Backbone::towers_backward(const TowerCache& cache, const Matrix& d_ctr_logit,
                                          const Matrix& d_dt_logits) {
  const int r = cfg_.representation_dim();
  const Matrix d_ctr_in = ctr_tower_.backward(cache.ctr, d_ctr_logit);
  const Matrix d_dt_in = dt_tower_.backward(cache.dt, d_dt_logits);
  return {d_ctr_in.topRows(r) + d_dt_in.topRows(r), d_ctr_in.bottomRows(r),
          d_dt_in.bottomRows(r)};
}

ForwardOutputs Backbone::forward(const InteractionRecord& record) const {
  const IdMatrix ids = make_id_matrix(std::span<const InteractionRecord>(&record, 1));
  const auto reps = forward_experts(embed(ids));
  const auto t = towers(reps);
  ForwardOutputs out;
  out.e_shared = column(reps.shared);
  out.e_ctr = column(reps.ctr);
  out.e_dt = column(reps.dt);
  out.ctr_logit = t.ctr_logit(0, 0);
  out.ctr_prob = sigmoid(out.ctr_logit);
  out.dt_logits = column(t.dt_logits);
  return out;
}

void Backbone::collect(std::vector<Param*>& out) {
  for (auto& t : tables_) out.push_back(&t);
  for (auto& level : levels_) {
    for (auto& e : level.experts) e.net.collect(out);
    for (auto& g : level.gates) {
      if (!g.uniform) g.proj.collect(out);
    }
  }
  ctr_tower_.collect(out);
  dt_tower_.collect(out);
}

}  // namespace orca
