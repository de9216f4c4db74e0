#include "orca/config.hpp"

#include <fstream>

#include "orca/errors.hpp"
#include "orca/json_fields.hpp"

namespace orca {
namespace {

nlohmann::json to_json(const GenerateConfig& c) { return {{"n_impressions", c.n_impressions}}; }

GenerateConfig generate_config_from_json(const nlohmann::json& j) {
  GenerateConfig c;
  JsonFields f(j, "generate");
  f.read("n_impressions", c.n_impressions);
  f.finish();
  if (c.n_impressions < 1) throw ConfigError("generate.n_impressions must be >= 1");
  return c;
}

nlohmann::json to_json(const DataConfig& c) {
  return {{"dir", c.dir},
          {"split", to_string(c.split)},
          {"train_ratio", c.ratios.train},
          {"val_ratio", c.ratios.val},
          {"test_ratio", c.ratios.test},
          {"split_seed", c.split_seed},
          {"min_count", c.min_count},
          {"log_offset", c.log_offset}};
}

DataConfig data_config_from_json(const nlohmann::json& j) {
  DataConfig c;
  JsonFields f(j, "data");
  f.read("dir", c.dir);
  std::string split = to_string(c.split);
  f.read("split", split);
  c.split = parse_split_strategy(split);
  f.read("train_ratio", c.ratios.train);
  f.read("val_ratio", c.ratios.val);
  f.read("test_ratio", c.ratios.test);
  f.read("split_seed", c.split_seed);
  f.read("min_count", c.min_count);
  f.read("log_offset", c.log_offset);
  f.finish();
  if (c.min_count < 0) throw ConfigError("data.min_count must be >= 0");
  return c;
}

nlohmann::json to_json(const MetricsConfig& c) {
  return {{"ctr_deciles", c.ctr_deciles},
          {"bias_groups", c.bias_groups},
          {"moderate_bins", c.moderate_bins},
          {"lofo_auc_threshold", c.lofo_auc_threshold},
          {"lofo_mae_threshold", c.lofo_mae_threshold}};
}

MetricsConfig metrics_config_from_json(const nlohmann::json& j) {
  MetricsConfig c;
  JsonFields f(j, "metrics");
  f.read("ctr_deciles", c.ctr_deciles);
  f.read("bias_groups", c.bias_groups);
  f.read("moderate_bins", c.moderate_bins);
  f.read("lofo_auc_threshold", c.lofo_auc_threshold);
  f.read("lofo_mae_threshold", c.lofo_mae_threshold);
  f.finish();
  if (c.ctr_deciles < 1 || c.bias_groups < 1) throw ConfigError("metrics group counts must be >= 1");
  return c;
}

nlohmann::json to_json(const AblateConfig& c) {
  std::vector<std::string> variants;
  for (auto v : c.variants) variants.push_back(to_string(v));
  return {{"seeds", c.seeds}, {"variants", variants}};
}

AblateConfig ablate_config_from_json(const nlohmann::json& j) {
  AblateConfig c;
  JsonFields f(j, "ablate");
  f.read("seeds", c.seeds);
  if (f.has("variants")) {
    std::vector<std::string> names;
    f.read("variants", names);
    c.variants.clear();
    for (const auto& n : names) c.variants.push_back(parse_variant(n));
  }
  f.finish();
  if (c.seeds.empty()) throw ConfigError("ablate.seeds must not be empty");
  if (c.variants.empty()) throw ConfigError("ablate.variants must not be empty");
  return c;
}

}  // namespace

nlohmann::json to_json(const RunConfig& c) {
  return {{"generate", to_json(c.generate)},  {"scm", to_json(c.scm)},
          {"data", to_json(c.data)},          {"backbone", to_json(c.model.backbone)},
          {"orca", to_json(c.model.orca)},    {"train", to_json(c.train)},
          {"metrics", to_json(c.metrics)},    {"ablate", to_json(c.ablate)}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  JsonFields f(j, "config");
  if (f.has("generate")) c.generate = generate_config_from_json(f.at("generate"));
  if (f.has("scm")) c.scm = scm_config_from_json(f.at("scm"));
  if (f.has("data")) c.data = data_config_from_json(f.at("data"));
  if (f.has("backbone")) c.model.backbone = backbone_config_from_json(f.at("backbone"));
  if (f.has("orca")) c.model.orca = orca_config_from_json(f.at("orca"));
  if (f.has("train")) c.train = train_config_from_json(f.at("train"));
  if (f.has("metrics")) c.metrics = metrics_config_from_json(f.at("metrics"));
  if (f.has("ablate")) c.ablate = ablate_config_from_json(f.at("ablate"));
  f.finish();
  return c;
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key.path=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigError("empty key in override '" + path + "'");
    if (!node->is_object()) *node = nlohmann::json::object();
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides) {
  nlohmann::json doc = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("cannot parse config '" + path.string() + "': " + e.what());
    }
    // A run manifest carries its full config under "config".
    if (doc.is_object() && doc.contains("format") && doc.contains("config")) doc = doc["config"];
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return run_config_from_json(doc);
}

}  // namespace orca
