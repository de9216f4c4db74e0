#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "orca/ingest.hpp"
#include "orca/model.hpp"
#include "orca/schema.hpp"

namespace orca {

// Everything needed to score new data: model weights, the encoded schema,
// the training vocabulary and the frozen binning.
struct Checkpoint {
  OrcaModel model;
  Vocabulary vocab;
  BinningSpec binning;
  nlohmann::json run;  // free-form run description (config, data location)
};

// Layout: manifest.json (config, schema, vocabulary, binning, tensor index),
// params.bin (little-endian float32, column-major, concatenated in index
// order) and binning.json.
void save_checkpoint(const std::filesystem::path& dir, OrcaModel& model, const Vocabulary& vocab,
                     const BinningSpec& binning, const nlohmann::json& run);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace orca
