#include "orca/commands.hpp"

#include <Eigen/Core>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "orca/checkpoint.hpp"
#include "orca/errors.hpp"
#include "orca/rng.hpp"
#include "orca/scm.hpp"

namespace orca {
namespace fs = std::filesystem;
namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

fs::path resolve_data_dir(const RunConfig& cfg) {
  if (cfg.data.dir.empty()) throw ConfigError("no dataset directory (set data.dir or pass --data)");
  return fs::path(cfg.data.dir);
}

std::vector<RawRecord> pick_split(const RawSplit& s, const std::string& name,
                                  std::span<const RawRecord> all) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  if (name == "all") return {all.begin(), all.end()};
  throw ConfigError("unknown split '" + name + "' (expected train, val, test or all)");
}

struct LoadedRun {
  Checkpoint ckpt;
  RunConfig cfg;
  std::vector<InteractionRecord> records;
};

LoadedRun load_run(const fs::path& checkpoint_dir, const std::string& split_name,
                   const std::optional<fs::path>& data_dir) {
  LoadedRun run{load_checkpoint(checkpoint_dir), {}, {}};
  if (!run.ckpt.run.contains("config")) {
    throw DataError("checkpoint '" + checkpoint_dir.string() + "' has no run config");
  }
  run.cfg = run_config_from_json(run.ckpt.run["config"]);
  if (data_dir) run.cfg.data.dir = data_dir->string();
  const auto files = load_dataset_dir(resolve_data_dir(run.cfg));
  const auto parts = split(files.raw, run.cfg.data.ratios, run.cfg.data.split,
                           run.cfg.data.split_seed);
  const auto raw = pick_split(parts, split_name, files.raw);
  run.records = encode_records(raw, run.ckpt.vocab, &run.ckpt.binning);
  return run;
}

std::vector<std::string> metric_names() {
  return {"mae_class",   "rmse_class",   "weighted_f1", "macro_precision",
          "macro_recall", "mae_seconds", "rmse_seconds", "auc",
          "moderate_ratio", "interior_moderate_ratio", "bias_slope"};
}

std::vector<double> metric_values(const Diagnostics& d) {
  const auto& r = d.report;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return {r.mae_class,    r.rmse_class,  r.weighted_f1, r.macro_precision,
          r.macro_recall, r.mae_seconds, r.rmse_seconds, r.auc,
          d.moderate.ratio.value_or(nan), d.interior.ratio.value_or(nan), d.bias.slope};
}

}  // namespace

DatasetFiles load_dataset_dir(const fs::path& dir) {
  const auto csv_path = dir / kDatasetCsv;
  const auto schema_path = dir / kDatasetSchema;
  if (!fs::exists(csv_path)) throw DataError("missing dataset file '" + csv_path.string() + "'");
  if (!fs::exists(schema_path)) {
    throw DataError("missing schema file '" + schema_path.string() + "'");
  }
  const std::string schema_text = read_file(schema_path);
  nlohmann::json schema_json;
  try {
    schema_json = nlohmann::json::parse(schema_text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cannot parse '" + schema_path.string() + "': " + e.what());
  }
  DatasetFiles files;
  files.schema = FeatureSchema::from_json(schema_json);
  auto loaded = load_csv(csv_path, files.schema);
  files.raw = std::move(loaded.records);
  files.rejects = std::move(loaded.rejects);
  files.hash = fnv1a(schema_text, fnv1a(read_file(csv_path)));
  if (files.raw.empty()) throw DataError("dataset '" + dir.string() + "' has no valid rows");
  return files;
}

PreparedData prepare_data(std::span<const RawRecord> raw, const FeatureSchema& schema,
                          const DataConfig& cfg, int bin_count) {
  const auto parts = split(raw, cfg.ratios, cfg.split, cfg.split_seed);
  PreparedData d;
  d.vocab = build_vocab(parts.train, schema, cfg.min_count);
  d.schema = schema.with_vocab_sizes(d.vocab.sizes());
  std::vector<double> dwell;
  for (const auto& r : parts.train) {
    if (r.clicked && r.dwell_seconds) dwell.push_back(*r.dwell_seconds);
  }
  d.binning = build_binning(dwell, bin_count, cfg.log_offset);
  d.train = encode_records(parts.train, d.vocab, &d.binning);
  d.val = encode_records(parts.val, d.vocab, &d.binning);
  d.test = encode_records(parts.test, d.vocab, &d.binning);
  return d;
}

ModelConfig effective_model_config(const RunConfig& cfg, const FeatureSchema& schema,
                                   std::vector<std::string>* warnings) {
  auto m = resolve_model_config(cfg.model, cfg.train);
  if (m.orca.enable_fci && schema.post_click_indices().empty()) {
    m.orca.enable_fci = false;
    if (warnings) {
      warnings->push_back("no post-click field in schema; counterfactual masking disabled");
    }
  }
  return m;
}

Diagnostics diagnose(const OrcaModel& model, std::span<const InteractionRecord> records,
                     const BinningSpec& binning, const MetricsConfig& cfg) {
  const auto preds = predict(model, records);
  Diagnostics d;
  d.report = compute_report(preds, records, binning);
  std::vector<double> ctr;
  std::vector<int> pred_bins;
  std::vector<int> true_bins;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].clicked) continue;
    ctr.push_back(preds.ctr_prob[i]);
    pred_bins.push_back(preds.dt_bin[i]);
    true_bins.push_back(*records[i].dwell_bin);
  }
  const int m = binning.bin_count();
  d.moderate_set = cfg.moderate_bins.empty() ? default_moderate_bins(m) : cfg.moderate_bins;
  d.moderate = moderate_mass(pred_bins, true_bins, d.moderate_set);
  d.interior_set = interior_moderate_bins(true_bins, m);
  d.interior = moderate_mass(pred_bins, true_bins, d.interior_set);
  d.bias = ctr_conditioned_bias(ctr, pred_bins, true_bins, cfg.bias_groups);
  d.truth_heatmap = heatmap(ctr, true_bins, m, cfg.ctr_deciles);
  d.pred_heatmap = heatmap(ctr, pred_bins, m, cfg.ctr_deciles);
  return d;
}

nlohmann::json to_json(const Diagnostics& d) {
  auto mass = [](const std::vector<int>& set, const ModerateMass& m) {
    return nlohmann::json{{"bins", set},
                          {"pred_mass", m.pred_mass},
                          {"true_mass", m.true_mass},
                          {"ratio", m.ratio ? nlohmann::json(*m.ratio) : nlohmann::json()}};
  };
  auto j = to_json(d.report);
  j["moderate_mass"] = mass(d.moderate_set, d.moderate);
  j["interior_moderate_mass"] = mass(d.interior_set, d.interior);
  j["ctr_bias"] = {{"bias", d.bias.bias}, {"counts", d.bias.counts}, {"slope", d.bias.slope}};
  return j;
}

std::string environment_tag() {
  std::ostringstream tag;
#if defined(__clang__)
  tag << "clang " << __clang_major__ << '.' << __clang_minor__;
#elif defined(__GNUC__)
  tag << "gcc " << __GNUC__ << '.' << __GNUC_MINOR__;
#else
  tag << "unknown-compiler";
#endif
  tag << "; eigen " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.'
      << EIGEN_MINOR_VERSION << "; c++" << __cplusplus;
#ifdef NDEBUG
  tag << "; release";
#else
  tag << "; debug";
#endif
  return tag.str();
}

void cmd_generate(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  fs::create_directories(out_dir);
  const auto data = generate_dataset(cfg.scm, cfg.generate.n_impressions);
  write_csv(out_dir / kDatasetCsv, data.schema, to_raw_records(data));
  write_json(out_dir / kDatasetSchema, dataset_schema_json(data, cfg.scm));

  std::vector<double> dwell;
  for (const auto& r : data.records) {
    if (r.clicked) dwell.push_back(*r.dwell_seconds);
  }
  auto binned = data.records;
  const auto binning = build_binning(dwell, cfg.model.backbone.bin_count, cfg.data.log_offset);
  for (auto& r : binned) {
    if (r.clicked) r.dwell_bin = assign_bin(*r.dwell_seconds, binning);
  }
  const auto stats = dataset_stats(binned, binning.bin_count());
  const double corr = item_ctr_dwell_correlation(data);
  const nlohmann::json j = {{"impressions", stats.impressions},
                            {"clicks", stats.clicks},
                            {"click_rate", stats.click_rate},
                            {"supervision_ratio", stats.ratio_string()},
                            {"bin_histogram", stats.bin_histogram},
                            {"item_ctr_dwell_correlation", corr},
                            {"seed", cfg.scm.seed}};
  write_json(out_dir / "stats.json", j);
  log << "impressions " << stats.impressions << ", clicks " << stats.clicks
      << ", supervision ratio " << stats.ratio_string() << '\n'
      << "item CTR/dwell correlation " << std::fixed << std::setprecision(4) << corr << '\n'
      << "dwell bins";
  for (auto c : stats.bin_histogram) log << ' ' << c;
  log << '\n';
}

void cmd_train(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  const auto data_dir = resolve_data_dir(cfg);
  const auto files = load_dataset_dir(data_dir);
  if (!files.rejects.empty()) {
    log << "warning: " << files.rejects.size() << " rows rejected, first at line "
        << files.rejects.front().line << ": " << files.rejects.front().reason << '\n';
  }
  const auto data = prepare_data(files.raw, files.schema, cfg.data, cfg.model.backbone.bin_count);
  std::vector<std::string> warnings;
  const auto model_cfg = effective_model_config(cfg, data.schema, &warnings);
  for (const auto& w : warnings) log << "warning: " << w << '\n';

  RunConfig effective = cfg;
  effective.data.dir = fs::absolute(data_dir).string();
  // Variant switches are already folded into model_cfg.
  auto train_cfg = cfg.train;
  train_cfg.variant = variant_of(model_cfg.orca);
  fs::create_directories(out_dir);

  log << "train " << data.train.size() << ", val " << data.val.size() << ", test "
      << data.test.size() << " impressions; variant " << to_string(cfg.train.variant) << '\n';
  auto result = train(data.schema, data.train, data.val, model_cfg, train_cfg,
                      [&](const EpochRecord& e) {
                        log << "epoch " << e.epoch << " loss " << std::setprecision(5)
                            << e.loss_total << " val_mae_class " << e.val_mae_class
                            << " val_auc " << e.val_auc << (e.improved ? " *" : "") << '\n';
                      });

  const nlohmann::json run = {{"config", to_json(effective)}};
  save_checkpoint(out_dir / "checkpoint", result.model, data.vocab, data.binning, run);
  write_file(out_dir / "history.csv", history_csv(result.history));

  const auto diag = diagnose(result.model, data.test, data.binning, cfg.metrics);
  write_json(out_dir / "metrics_test.json", to_json(diag));
  {
    const auto preds = predict(result.model, data.test);
    std::ostringstream csv;
    csv.precision(9);
    csv << "index,clicked,dwell_bin,ctr_prob,pred_bin,raw_pred_bin\n";
    for (std::size_t i = 0; i < data.test.size(); ++i) {
      const auto& r = data.test[i];
      csv << i << ',' << (r.clicked ? 1 : 0) << ',';
      if (r.dwell_bin) csv << *r.dwell_bin;
      csv << ',' << preds.ctr_prob[i] << ',' << preds.dt_bin[i] << ',' << preds.raw_dt_bin[i]
          << '\n';
    }
    write_file(out_dir / "predictions_test.csv", csv.str());
  }

  const nlohmann::json manifest = {
      {"format", kRunManifestFormat},
      {"config", to_json(effective)},
      {"effective_model", to_json(model_cfg)},
      {"seeds",
       {{"train", cfg.train.seed}, {"split", cfg.data.split_seed}, {"scm", cfg.scm.seed}}},
      {"dataset",
       {{"dir", effective.data.dir},
        {"fnv1a", hex64(files.hash)},
        {"rows", files.raw.size()},
        {"rejected", files.rejects.size()}}},
      {"environment", environment_tag()},
      {"warnings", warnings},
      {"best_epoch", result.best_epoch},
      {"epochs_run", result.history.size()},
      {"early_stopped", result.early_stopped},
      {"diverged", result.diverged}};
  write_json(out_dir / kRunManifest, manifest);

  log << "best epoch " << result.best_epoch << "; test mae_class " << std::setprecision(4)
      << diag.report.mae_class << ", auc " << diag.report.auc << ", moderate ratio "
      << diag.moderate.ratio.value_or(0.0) << '\n';
  if (result.diverged) {
    throw DivergenceError(result.divergence_message + " (last good checkpoint saved)");
  }
}

MetricsReport cmd_eval(const fs::path& checkpoint_dir, const std::string& split_name,
                       const std::optional<fs::path>& data_dir,
                       const std::optional<fs::path>& out_file, std::ostream& log) {
  const auto run = load_run(checkpoint_dir, split_name, data_dir);
  const auto report = evaluate(run.ckpt.model, run.records, run.ckpt.binning);
  const auto j = to_json(report);
  if (out_file) {
    write_json(*out_file, j);
  }
  log << j.dump(2) << '\n';
  return report;
}

void cmd_analyze(const fs::path& checkpoint_dir, const std::string& split_name,
                 const std::optional<fs::path>& data_dir, const fs::path& out_dir,
                 const std::optional<fs::path>& compare_dir, std::ostream& log) {
  fs::create_directories(out_dir);
  auto analyze_one = [&](const fs::path& dir, const std::string& prefix) {
    const auto run = load_run(dir, split_name, data_dir);
    const auto d = diagnose(run.ckpt.model, run.records, run.ckpt.binning, run.cfg.metrics);
    write_file(out_dir / (prefix + "heatmap_truth.csv"), heatmap_csv(d.truth_heatmap));
    write_file(out_dir / (prefix + "heatmap_pred.csv"), heatmap_csv(d.pred_heatmap));
    write_file(out_dir / (prefix + "ctr_bias.csv"), bias_csv(d.bias));
    write_json(out_dir / (prefix + "analysis.json"), to_json(d));
    log << prefix << "moderate ratio " << std::setprecision(4) << d.moderate.ratio.value_or(0.0)
        << " (bins";
    for (int b : d.moderate_set) log << ' ' << b;
    log << "), bias slope " << d.bias.slope << '\n';
    return d;
  };
  const auto main = analyze_one(checkpoint_dir, "");
  if (compare_dir) {
    const auto other = analyze_one(*compare_dir, "compare_");
    const nlohmann::json j = {{"bias_slope", main.bias.slope},
                              {"compare_bias_slope", other.bias.slope},
                              {"mae_class", main.report.mae_class},
                              {"compare_mae_class", other.report.mae_class}};
    write_json(out_dir / "comparison.json", j);
  }
}

void cmd_ablate(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  const auto files = load_dataset_dir(resolve_data_dir(cfg));
  const auto data = prepare_data(files.raw, files.schema, cfg.data, cfg.model.backbone.bin_count);
  fs::create_directories(out_dir);
  const auto names = metric_names();

  std::map<Variant, std::vector<std::vector<double>>> values;  // variant -> seed -> metric
  std::ostringstream runs;
  runs.precision(10);
  runs << "variant,seed,best_epoch";
  for (const auto& n : names) runs << ',' << n;
  runs << '\n';
  for (auto seed : cfg.ablate.seeds) {
    for (auto variant : cfg.ablate.variants) {
      RunConfig rc = cfg;
      rc.train.seed = seed;
      rc.train.variant = variant;
      std::vector<std::string> warnings;
      const auto model_cfg = effective_model_config(rc, data.schema, &warnings);
      auto tc = rc.train;
      tc.variant = variant_of(model_cfg.orca);
      const auto result = train(data.schema, data.train, data.val, model_cfg, tc);
      if (result.diverged) log << "warning: " << result.divergence_message << '\n';
      const auto d = diagnose(result.model, data.test, data.binning, cfg.metrics);
      const auto v = metric_values(d);
      values[variant].push_back(v);
      runs << to_string(variant) << ',' << seed << ',' << result.best_epoch;
      for (double x : v) runs << ',' << x;
      runs << '\n';
      log << to_string(variant) << " seed " << seed << ": mae_class " << std::setprecision(4)
          << d.report.mae_class << ", auc " << d.report.auc << '\n';
    }
  }
  write_file(out_dir / "runs.csv", runs.str());

  const bool t_tests = cfg.ablate.seeds.size() >= 2 && values.count(Variant::kBase) > 0;
  if (!t_tests) log << "warning: paired t-tests need at least two seeds and the base variant\n";
  std::ostringstream summary;
  summary.precision(10);
  summary << "variant,n";
  for (const auto& n : names) summary << ",mean_" << n;
  if (t_tests) {
    for (const auto& n : names) summary << ",p_" << n;
  }
  summary << '\n';
  for (auto variant : cfg.ablate.variants) {
    const auto& rows = values[variant];
    summary << to_string(variant) << ',' << rows.size();
    for (std::size_t k = 0; k < names.size(); ++k) {
      double s = 0.0;
      for (const auto& r : rows) s += r[k];
      summary << ',' << s / static_cast<double>(rows.size());
    }
    if (t_tests) {
      const auto& base = values[Variant::kBase];
      for (std::size_t k = 0; k < names.size(); ++k) {
        std::vector<double> a, b;
        for (std::size_t i = 0; i < rows.size(); ++i) {
          a.push_back(rows[i][k]);
          b.push_back(base[i][k]);
        }
        summary << ',';
        if (variant != Variant::kBase) summary << paired_t_test(a, b).p_value;
      }
    }
    summary << '\n';
  }
  write_file(out_dir / "summary.csv", summary.str());
  log << summary.str();
}

}  // namespace orca
