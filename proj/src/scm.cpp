#include "orca/scm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "orca/errors.hpp"
#include "orca/json_fields.hpp"
#include "orca/rng.hpp"

namespace orca {
namespace {

constexpr const char* kFieldPrefixes[] = {"u", "i", "a", "d"};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> normal_vector(Rng& rng, int dim) {
  std::vector<double> v(dim);
  for (auto& x : v) x = standard_normal(rng);
  return v;
}

std::vector<int> bucketize(const std::vector<double>& values, int buckets) {
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  std::vector<int> out(values.size(), 0);
  if (!(*hi > *lo)) return out;
  const double width = (*hi - *lo) / buckets;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = std::clamp(static_cast<int>((values[i] - *lo) / width), 0, buckets - 1);
  }
  return out;
}

double click_score(const ScmConfig& cfg, const FeatureAssignment& x) {
  double dot = 0.0;
  for (int k = 0; k < cfg.latent_dim; ++k) dot += x.user_latent[k] * x.item_latent[k];
  return cfg.affinity_weight * dot / std::sqrt(static_cast<double>(cfg.latent_dim)) +
         cfg.click_bias * (x.clickbait ? 1.0 : 0.0) + cfg.click_offset;
}

// Running mean / variance.
struct Moments {
  std::int64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double standard_error() const {
    if (n < 2) return 0.0;
    return std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));
  }
};

std::string format_ratio(double r) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", r);
  std::string s(buf);
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

}  // namespace

void ScmConfig::validate() const {
  if (n_users < 1 || n_items < 1) throw ConfigError("n_users and n_items must be >= 1");
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  if (!(clickbait_fraction >= 0.0 && clickbait_fraction <= 1.0)) {
    throw ConfigError("clickbait_fraction must lie in [0, 1]");
  }
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  if (!(quality_sigma >= 0.0 && depth_sigma >= 0.0 && appeal_sigma >= 0.0)) {
    throw ConfigError("attribute noise scales must be >= 0");
  }
  if (!(dwell_floor_seconds >= 0.0)) throw ConfigError("dwell_floor_seconds must be >= 0");
  if (dwell_cap_seconds > 0.0 && dwell_cap_seconds <= dwell_floor_seconds) {
    throw ConfigError("dwell_cap_seconds must exceed dwell_floor_seconds");
  }
  if (appeal_buckets < 1 || depth_buckets < 1) throw ConfigError("bucket counts must be >= 1");
}

nlohmann::json to_json(const ScmConfig& c) {
  return {{"n_users", c.n_users},
          {"n_items", c.n_items},
          {"latent_dim", c.latent_dim},
          {"clickbait_fraction", c.clickbait_fraction},
          {"click_bias", c.click_bias},
          {"click_offset", c.click_offset},
          {"affinity_weight", c.affinity_weight},
          {"quality_base", c.quality_base},
          {"quality_penalty", c.quality_penalty},
          {"quality_sigma", c.quality_sigma},
          {"depth_sigma", c.depth_sigma},
          {"appeal_sigma", c.appeal_sigma},
          {"quality_coef", c.quality_coef},
          {"depth_coef", c.depth_coef},
          {"dwell_intercept", c.dwell_intercept},
          {"mediation_strength", c.mediation_strength},
          {"noise_sigma", c.noise_sigma},
          {"dwell_floor_seconds", c.dwell_floor_seconds},
          {"dwell_cap_seconds", c.dwell_cap_seconds},
          {"appeal_buckets", c.appeal_buckets},
          {"depth_buckets", c.depth_buckets},
          {"click_link", c.click_link == ClickLink::kLogistic ? "logistic" : "step"},
          {"seed", c.seed}};
}

ScmConfig scm_config_from_json(const nlohmann::json& j) {
  ScmConfig c;
  JsonFields f(j, "scm");
  f.read("n_users", c.n_users);
  f.read("n_items", c.n_items);
  f.read("latent_dim", c.latent_dim);
  f.read("clickbait_fraction", c.clickbait_fraction);
  f.read("click_bias", c.click_bias);
  f.read("click_offset", c.click_offset);
  f.read("affinity_weight", c.affinity_weight);
  f.read("quality_base", c.quality_base);
  f.read("quality_penalty", c.quality_penalty);
  f.read("quality_sigma", c.quality_sigma);
  f.read("depth_sigma", c.depth_sigma);
  f.read("appeal_sigma", c.appeal_sigma);
  f.read("quality_coef", c.quality_coef);
  f.read("depth_coef", c.depth_coef);
  f.read("dwell_intercept", c.dwell_intercept);
  f.read("mediation_strength", c.mediation_strength);
  f.read("noise_sigma", c.noise_sigma);
  f.read("dwell_floor_seconds", c.dwell_floor_seconds);
  f.read("dwell_cap_seconds", c.dwell_cap_seconds);
  f.read("appeal_buckets", c.appeal_buckets);
  f.read("depth_buckets", c.depth_buckets);
  std::string link = c.click_link == ClickLink::kLogistic ? "logistic" : "step";
  f.read("click_link", link);
  if (link == "logistic") {
    c.click_link = ClickLink::kLogistic;
  } else if (link == "step") {
    c.click_link = ClickLink::kStep;
  } else {
    throw ConfigError("unknown click_link '" + link + "'");
  }
  f.read("seed", c.seed);
  f.finish();
  c.validate();
  return c;
}

double EffectEstimate::combined_se() const {
  return std::sqrt(te_se * te_se + nie_se * nie_se + tde_se * tde_se);
}

bool potential_click(const ScmConfig& cfg, const FeatureAssignment& x,
                     double click_uniform) {
  const double s = click_score(cfg, x);
  const double p = cfg.click_link == ClickLink::kLogistic ? sigmoid(s) : (s > 0.0 ? 1.0 : 0.0);
  return p > click_uniform;
}

double potential_dwell(const ScmConfig& cfg, const FeatureAssignment& x, bool clicked,
                       double dwell_noise) {
  const double log_t = cfg.dwell_intercept + cfg.quality_coef * x.quality +
                       cfg.depth_coef * x.depth +
                       cfg.mediation_strength * (clicked ? 1.0 : 0.0) +
                       cfg.noise_sigma * dwell_noise;
  return std::exp(log_t);
}

SyntheticDataset generate_dataset(const ScmConfig& cfg, std::int64_t n_impressions) {
  cfg.validate();
  if (n_impressions <= 0) throw ConfigError("n_impressions must be positive");

  SyntheticDataset data;
  auto user_rng = make_rng(cfg.seed, "scm.users");
  data.user_latents.reserve(cfg.n_users);
  for (int u = 0; u < cfg.n_users; ++u) {
    data.user_latents.push_back(normal_vector(user_rng, cfg.latent_dim));
  }

  auto item_rng = make_rng(cfg.seed, "scm.items");
  std::vector<double> appeal(cfg.n_items);
  std::vector<double> depth(cfg.n_items);
  data.items.reserve(cfg.n_items);
  for (int i = 0; i < cfg.n_items; ++i) {
    ItemAttributes item;
    item.item = i;
    item.latent = normal_vector(item_rng, cfg.latent_dim);
    item.clickbait = uniform01(item_rng) < cfg.clickbait_fraction;
    const double b = item.clickbait ? 1.0 : 0.0;
    item.quality = cfg.quality_base - cfg.quality_penalty * b +
                   cfg.quality_sigma * standard_normal(item_rng);
    item.depth = item.quality + cfg.depth_sigma * standard_normal(item_rng);
    item.title_appeal = b + cfg.appeal_sigma * standard_normal(item_rng);
    appeal[i] = item.title_appeal;
    depth[i] = item.depth;
    data.items.push_back(std::move(item));
  }
  const auto appeal_bucket = bucketize(appeal, cfg.appeal_buckets);
  const auto depth_bucket = bucketize(depth, cfg.depth_buckets);

  data.schema = FeatureSchema(
      {{"user_id", FieldKind::kCategorical, cfg.n_users + kFirstValueIndex, false},
       {"item_id", FieldKind::kCategorical, cfg.n_items + kFirstValueIndex, false},
       {"title_appeal", FieldKind::kNumericBucketized, cfg.appeal_buckets + kFirstValueIndex,
        false},
       {"content_depth", FieldKind::kNumericBucketized, cfg.depth_buckets + kFirstValueIndex,
        true}},
      std::string(kTimestampColumn));

  auto imp_rng = make_rng(cfg.seed, "scm.impressions");
  std::uniform_int_distribution<int> pick_user(0, cfg.n_users - 1);
  std::uniform_int_distribution<int> pick_item(0, cfg.n_items - 1);
  const double cap = cfg.dwell_cap_seconds > 0.0 ? cfg.dwell_cap_seconds
                                                  : std::numeric_limits<double>::infinity();
  data.records.reserve(n_impressions);
  data.timestamps.reserve(n_impressions);
  FeatureAssignment x;
  for (std::int64_t n = 0; n < n_impressions; ++n) {
    const int u = pick_user(imp_rng);
    const int i = pick_item(imp_rng);
    const double click_uniform = uniform01(imp_rng);
    const double dwell_noise = standard_normal(imp_rng);
    const auto& item = data.items[i];
    x.user_latent = data.user_latents[u];
    x.item_latent = item.latent;
    x.clickbait = item.clickbait;
    x.quality = item.quality;
    x.depth = item.depth;

    InteractionRecord rec;
    rec.feature_ids = {kFirstValueIndex + u, kFirstValueIndex + i,
                       kFirstValueIndex + appeal_bucket[i], kFirstValueIndex + depth_bucket[i]};
    rec.clicked = potential_click(cfg, x, click_uniform);
    if (rec.clicked) {
      rec.dwell_seconds =
          std::clamp(potential_dwell(cfg, x, true, dwell_noise), cfg.dwell_floor_seconds, cap);
    }
    data.records.push_back(std::move(rec));
    data.timestamps.push_back(n);
  }
  return data;
}

std::vector<RawRecord> to_raw_records(const SyntheticDataset& data) {
  std::vector<RawRecord> out;
  out.reserve(data.records.size());
  for (std::size_t n = 0; n < data.records.size(); ++n) {
    const auto& rec = data.records[n];
    RawRecord raw;
    for (std::size_t f = 0; f < rec.feature_ids.size(); ++f) {
      raw.values.push_back(kFieldPrefixes[f] +
                           std::to_string(rec.feature_ids[f] - kFirstValueIndex));
    }
    raw.clicked = rec.clicked;
    raw.dwell_seconds = rec.dwell_seconds;
    raw.timestamp = data.timestamps[n];
    out.push_back(std::move(raw));
  }
  return out;
}

nlohmann::json dataset_schema_json(const SyntheticDataset& data, const ScmConfig& cfg) {
  auto j = data.schema.to_json();
  nlohmann::json items = nlohmann::json::array();
  for (const auto& item : data.items) {
    items.push_back({{"item", std::string(kFieldPrefixes[kItemField]) + std::to_string(item.item)},
                     {"clickbait", item.clickbait},
                     {"quality", item.quality},
                     {"depth", item.depth},
                     {"title_appeal", item.title_appeal}});
  }
  j["items"] = std::move(items);
  j["generator"] = to_json(cfg);
  return j;
}

EffectEstimate estimate_effects(const ScmConfig& cfg, const FeatureAssignment& x,
                                const FeatureAssignment& x_star, std::int64_t n_mc) {
  cfg.validate();
  if (n_mc <= 0) throw ConfigError("n_mc must be positive");
  for (const auto* a : {&x, &x_star}) {
    if (static_cast<int>(a->user_latent.size()) != cfg.latent_dim ||
        static_cast<int>(a->item_latent.size()) != cfg.latent_dim) {
      throw ConfigError("feature assignment latent size does not match latent_dim");
    }
  }
  Moments te, nie, tde;
  for (std::int64_t r = 0; r < n_mc; ++r) {
    // Abduction: one exogenous draw shared by all three potential outcomes.
    auto rng = make_rng(cfg.seed, "scm.mediation", static_cast<std::uint64_t>(r));
    const double click_uniform = uniform01(rng);
    const double dwell_noise = standard_normal(rng);

    const bool c_x = potential_click(cfg, x, click_uniform);
    const bool c_star = potential_click(cfg, x_star, click_uniform);
    const double t_x_cx = potential_dwell(cfg, x, c_x, dwell_noise);
    const double t_star_cx = potential_dwell(cfg, x_star, c_x, dwell_noise);
    const double t_star_cstar = potential_dwell(cfg, x_star, c_star, dwell_noise);

    te.add(t_x_cx - t_star_cstar);
    nie.add(t_star_cx - t_star_cstar);
    tde.add(t_x_cx - t_star_cx);
  }
  return {te.mean, nie.mean, tde.mean, te.standard_error(), nie.standard_error(),
          tde.standard_error(), n_mc};
}

std::string DatasetStats::ratio_string() const {
  if (!supervision_ratio) return "undefined";
  return format_ratio(*supervision_ratio) + ":1";
}

DatasetStats dataset_stats(std::span<const InteractionRecord> records, int bin_count) {
  if (records.empty()) throw DataError("no records");
  DatasetStats s;
  s.bin_histogram.assign(bin_count, 0);
  for (const auto& r : records) {
    ++s.impressions;
    if (!r.clicked) continue;
    ++s.clicks;
    if (!r.dwell_bin || *r.dwell_bin < 0 || *r.dwell_bin >= bin_count) {
      throw DataError("clicked record without a valid dwell bin");
    }
    ++s.bin_histogram[*r.dwell_bin];
  }
  s.click_rate = static_cast<double>(s.clicks) / static_cast<double>(s.impressions);
  if (s.clicks > 0) {
    s.supervision_ratio = static_cast<double>(s.impressions) / static_cast<double>(s.clicks);
  }
  return s;
}

double item_ctr_dwell_correlation(const SyntheticDataset& data) {
  const std::size_t n_items = data.items.size();
  std::vector<double> shown(n_items, 0.0), clicks(n_items, 0.0), dwell(n_items, 0.0);
  for (const auto& r : data.records) {
    const auto i = static_cast<std::size_t>(r.feature_ids[kItemField] - kFirstValueIndex);
    shown[i] += 1.0;
    if (r.clicked) {
      clicks[i] += 1.0;
      dwell[i] += *r.dwell_seconds;
    }
  }
  std::vector<double> ctr, mean_dwell;
  for (std::size_t i = 0; i < n_items; ++i) {
    if (clicks[i] == 0.0) continue;
    ctr.push_back(clicks[i] / shown[i]);
    mean_dwell.push_back(dwell[i] / clicks[i]);
  }
  const auto m = static_cast<double>(ctr.size());
  if (m < 2) return 0.0;
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < ctr.size(); ++k) {
    mx += ctr[k];
    my += mean_dwell[k];
  }
  mx /= m;
  my /= m;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t k = 0; k < ctr.size(); ++k) {
    sxy += (ctr[k] - mx) * (mean_dwell[k] - my);
    sxx += (ctr[k] - mx) * (ctr[k] - mx);
    syy += (mean_dwell[k] - my) * (mean_dwell[k] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace orca
