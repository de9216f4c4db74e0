#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "orca/ingest.hpp"
#include "orca/schema.hpp"

namespace orca {

enum class ClickLink {
  kLogistic,  // P(click) = sigmoid(score)
  kStep,      // P(click) = 1{score > 0}
};

// Structural equations of the synthetic click/dwell world.
//
//   u ~ N(0, I), v ~ N(0, I)                      user / item latents
//   b ~ Bernoulli(clickbait_fraction)             item clickbait flag
//   q = quality_base - quality_penalty*b + quality_sigma*n
//   z = q + depth_sigma*n                         content depth (post-click)
//   a = b + appeal_sigma*n                        title appeal (pre-click)
//   score = affinity_weight*u.v/sqrt(latent_dim) + click_bias*b + click_offset
//   C = 1{link(score) > U},  U ~ Unif(0,1)
//   log T = dwell_intercept + quality_coef*q + depth_coef*z
//           + mediation_strength*C + noise_sigma*eps
//
// Observed dwell is T clipped to [dwell_floor_seconds, dwell_cap_seconds],
// recorded for clicked impressions only.
struct ScmConfig {
  int n_users = 500;
  int n_items = 300;
  int latent_dim = 4;
  double clickbait_fraction = 0.3;
  double click_bias = 2.0;
  double click_offset = -2.0;
  double affinity_weight = 1.0;
  double quality_base = 0.0;
  double quality_penalty = 1.5;
  double quality_sigma = 1.0;
  double depth_sigma = 0.5;
  double appeal_sigma = 0.3;
  double quality_coef = 0.6;
  double depth_coef = 0.6;
  double dwell_intercept = 4.3;
  double mediation_strength = 0.3;
  double noise_sigma = 1.4;
  double dwell_floor_seconds = 5.0;
  double dwell_cap_seconds = 600.0;
  int appeal_buckets = 8;
  int depth_buckets = 16;
  ClickLink click_link = ClickLink::kLogistic;
  std::uint64_t seed = 7;

  void validate() const;
};

nlohmann::json to_json(const ScmConfig& cfg);
// Rejects unknown keys; missing keys keep their defaults.
ScmConfig scm_config_from_json(const nlohmann::json& j);

// Values of the feature node X for one (user, item) pair.
struct FeatureAssignment {
  std::vector<double> user_latent;
  std::vector<double> item_latent;
  bool clickbait = false;
  double quality = 0.0;
  double depth = 0.0;
};

struct EffectEstimate {
  double te = 0.0;
  double nie = 0.0;
  double tde = 0.0;
  double te_se = 0.0;
  double nie_se = 0.0;
  double tde_se = 0.0;
  std::int64_t n_mc = 0;

  double combined_se() const;
};

struct ItemAttributes {
  int item = 0;
  bool clickbait = false;
  double quality = 0.0;
  double depth = 0.0;
  double title_appeal = 0.0;
  std::vector<double> latent;
};

// Field order of generated data.
enum SyntheticField : std::size_t {
  kUserField = 0,
  kItemField = 1,
  kAppealField = 2,
  kDepthField = 3,
};

struct SyntheticDataset {
  FeatureSchema schema;
  std::vector<InteractionRecord> records;  // ids use the generator's own vocab
  std::vector<std::int64_t> timestamps;
  std::vector<ItemAttributes> items;
  std::vector<std::vector<double>> user_latents;
};

inline constexpr const char* kTimestampColumn = "impression_ts";

SyntheticDataset generate_dataset(const ScmConfig& cfg, std::int64_t n_impressions);

// Raw string tokens of a generated dataset, ready for CSV.
std::vector<RawRecord> to_raw_records(const SyntheticDataset& data);

// Companion document: schema fields, timestamp column, item ground truth.
nlohmann::json dataset_schema_json(const SyntheticDataset& data,
                                   const ScmConfig& cfg);

// Latent dwell seconds for a fixed feature state, click value and noise draw.
double potential_dwell(const ScmConfig& cfg, const FeatureAssignment& x,
                       bool clicked, double dwell_noise);
bool potential_click(const ScmConfig& cfg, const FeatureAssignment& x,
                     double click_uniform);

// Monte-Carlo TE / NIE / TDE with one shared exogenous draw per repetition.
EffectEstimate estimate_effects(const ScmConfig& cfg, const FeatureAssignment& x,
                                const FeatureAssignment& x_star, std::int64_t n_mc);

struct DatasetStats {
  std::int64_t impressions = 0;
  std::int64_t clicks = 0;
  double click_rate = 0.0;
  std::optional<double> supervision_ratio;  // impressions per click
  std::vector<std::int64_t> bin_histogram;  // clicked records only

  std::string ratio_string() const;  // "7.7:1"
};

DatasetStats dataset_stats(std::span<const InteractionRecord> records, int bin_count);

// Pearson correlation between per-item empirical CTR and mean clicked dwell,
// over items with at least one click.
double item_ctr_dwell_correlation(const SyntheticDataset& data);

}  // namespace orca
