#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "orca/config.hpp"
#include "orca/ingest.hpp"
#include "orca/metrics.hpp"
#include "orca/training.hpp"

namespace orca {

inline constexpr const char* kDatasetCsv = "impressions.csv";
inline constexpr const char* kDatasetSchema = "schema.json";
inline constexpr const char* kRunManifest = "run_manifest.json";
inline constexpr const char* kRunManifestFormat = "orca-run/1";

struct DatasetFiles {
  FeatureSchema schema;
  std::vector<RawRecord> raw;
  std::vector<RejectedRow> rejects;
  std::uint64_t hash = 0;  // FNV-1a over the CSV and schema bytes
};

DatasetFiles load_dataset_dir(const std::filesystem::path& dir);

// Encoded splits. Vocabulary and binning come from the training split only.
struct PreparedData {
  FeatureSchema schema;  // vocab sizes filled in
  Vocabulary vocab;
  BinningSpec binning;
  std::vector<InteractionRecord> train;
  std::vector<InteractionRecord> val;
  std::vector<InteractionRecord> test;
};

PreparedData prepare_data(std::span<const RawRecord> raw, const FeatureSchema& schema,
                          const DataConfig& cfg, int bin_count);

// Variant switches applied; FCI is turned off with a warning when the schema
// has no post-click field.
ModelConfig effective_model_config(const RunConfig& cfg, const FeatureSchema& schema,
                                   std::vector<std::string>* warnings = nullptr);

// Metrics plus the diagnostic analyses on one split.
struct Diagnostics {
  MetricsReport report;
  std::vector<int> moderate_set;
  ModerateMass moderate;
  std::vector<int> interior_set;  // interior bins with true mass >= 2%
  ModerateMass interior;
  CtrBias bias;
  Heatmap truth_heatmap;
  Heatmap pred_heatmap;
};

Diagnostics diagnose(const OrcaModel& model, std::span<const InteractionRecord> records,
                     const BinningSpec& binning, const MetricsConfig& cfg);
nlohmann::json to_json(const Diagnostics& d);

std::string environment_tag();

void cmd_generate(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

void cmd_train(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

// split: train, val, test or all.
MetricsReport cmd_eval(const std::filesystem::path& checkpoint_dir, const std::string& split,
                       const std::optional<std::filesystem::path>& data_dir,
                       const std::optional<std::filesystem::path>& out_file, std::ostream& log);

void cmd_analyze(const std::filesystem::path& checkpoint_dir, const std::string& split,
                 const std::optional<std::filesystem::path>& data_dir,
                 const std::filesystem::path& out_dir,
                 const std::optional<std::filesystem::path>& compare_dir, std::ostream& log);

void cmd_ablate(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

}  // namespace orca
