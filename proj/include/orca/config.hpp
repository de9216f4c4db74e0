#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "orca/ingest.hpp"
#include "orca/model.hpp"
#include "orca/scm.hpp"
#include "orca/training.hpp"

namespace orca {

struct GenerateConfig {
  std::int64_t n_impressions = 100000;
};

struct DataConfig {
  std::string dir;  // holds impressions.csv and schema.json
  SplitStrategy split = SplitStrategy::kRandom;
  SplitRatios ratios;
  std::uint64_t split_seed = 17;
  std::int64_t min_count = 1;
  double log_offset = kDefaultLogOffset;
};

struct MetricsConfig {
  int ctr_deciles = 10;
  int bias_groups = 10;
  std::vector<int> moderate_bins;  // empty: default set for the bin count
  double lofo_auc_threshold = 0.005;
  double lofo_mae_threshold = 0.02;
};

struct AblateConfig {
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<Variant> variants{Variant::kBase, Variant::kFci, Variant::kScd, Variant::kFull};
};

// Sections: generate, scm, data, backbone, orca, train, metrics, ablate.
// The bin count M lives in backbone.bin_count.
struct RunConfig {
  GenerateConfig generate;
  ScmConfig scm;
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  MetricsConfig metrics;
  AblateConfig ablate;
};

nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);

// Sets a dotted path ("train.learning_rate=0.01") in a config document. The
// value is parsed as JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Reads a config file, or the config embedded in a run manifest, then
// applies overrides. An empty path starts from the defaults.
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides = {});

}  // namespace orca
