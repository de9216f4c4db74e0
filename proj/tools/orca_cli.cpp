// orca: generate synthetic data, train, evaluate, analyze and ablate.
#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "orca/commands.hpp"
#include "orca/config.hpp"
#include "orca/errors.hpp"

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string variant;
  std::string data;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_variant, bool with_data) {
  cmd->add_option("--config", o.config, "JSON config file or run manifest");
  cmd->add_option("--set", o.overrides, "dotted override, e.g. train.learning_rate=0.01");
  cmd->add_option("--seed", o.seed, "seed for this command");
  if (with_variant) {
    cmd->add_option("--variant", o.variant, "base, fci, scd or full");
  }
  if (with_data) cmd->add_option("--data", o.data, "dataset directory");
  cmd->add_option("--out", o.out, "output directory")->required();
}

orca::RunConfig build_config(const CommonOptions& o, const std::string& seed_key) {
  auto overrides = o.overrides;
  if (o.seed) overrides.push_back(seed_key + "=" + std::to_string(*o.seed));
  if (!o.variant.empty()) overrides.push_back("train.variant=\"" + o.variant + "\"");
  if (!o.data.empty()) overrides.push_back("data.dir=\"" + o.data + "\"");
  return orca::load_run_config(o.config, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ORCA joint click and dwell-time modelling"};
  app.require_subcommand(1);

  CommonOptions gen_opts, train_opts, ablate_opts;
  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  add_common(gen, gen_opts, false, false);
  auto* trn = app.add_subcommand("train", "train one model");
  add_common(trn, train_opts, true, true);
  auto* abl = app.add_subcommand("ablate", "train every variant over several seeds");
  add_common(abl, ablate_opts, false, true);

  std::string ckpt, split = "test", data, out;
  auto* evl = app.add_subcommand("eval", "metrics report for a checkpoint");
  evl->add_option("--checkpoint", ckpt, "checkpoint directory")->required();
  evl->add_option("--split", split, "train, val, test or all");
  evl->add_option("--data", data, "dataset directory (default: the training one)");
  evl->add_option("--out", out, "write the report JSON here");

  std::string a_ckpt, a_split = "test", a_data, a_out, a_compare;
  auto* ana = app.add_subcommand("analyze", "heatmaps, moderate mass and CTR bias");
  ana->add_option("--checkpoint", a_ckpt, "checkpoint directory")->required();
  ana->add_option("--split", a_split, "train, val, test or all");
  ana->add_option("--data", a_data, "dataset directory (default: the training one)");
  ana->add_option("--out", a_out, "output directory")->required();
  ana->add_option("--compare", a_compare, "second checkpoint to compare against");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  auto opt_path = [](const std::string& s) -> std::optional<std::filesystem::path> {
    if (s.empty()) return std::nullopt;
    return std::filesystem::path(s);
  };

  try {
    if (*gen) {
      orca::cmd_generate(build_config(gen_opts, "scm.seed"), gen_opts.out, std::cout);
    } else if (*trn) {
      orca::cmd_train(build_config(train_opts, "train.seed"), train_opts.out, std::cout);
    } else if (*abl) {
      auto cfg = build_config(ablate_opts, "train.seed");
      if (ablate_opts.seed) cfg.ablate.seeds = {*ablate_opts.seed};
      orca::cmd_ablate(cfg, ablate_opts.out, std::cout);
    } else if (*evl) {
      orca::cmd_eval(ckpt, split, opt_path(data), opt_path(out), std::cout);
    } else if (*ana) {
      orca::cmd_analyze(a_ckpt, a_split, opt_path(a_data), a_out, opt_path(a_compare), std::cout);
    }
  } catch (const orca::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const orca::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const orca::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return 4;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
