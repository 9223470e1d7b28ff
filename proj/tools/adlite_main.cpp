#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "adlite/cli/commands.hpp"
#include "adlite/errors.hpp"

namespace {

using namespace adlite;
using namespace adlite::cli;

// Flags shared by train and kfold. Precedence: defaults < --config file <
// --regime < individual flags < --set.
struct RunFlags {
  std::string config_file;
  std::vector<std::string> data;
  std::optional<std::string> format, class_map, regime, loss, out, precision;
  std::optional<int> epochs;
  std::optional<std::size_t> batch_size, input_size, channels, k;
  std::optional<double> lr, test_fraction, val_fraction;
  std::optional<std::uint64_t> seed;
  bool no_pcb = false;
  std::vector<std::string> sets;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_file, "JSON run config (flat dotted keys)");
    app->add_option("-d,--data", data, "ADS1 file or image folder; repeat to merge datasets");
    app->add_option("--format", format, "auto | ads1 | folder");
    app->add_option("--class-map", class_map, "JSON class map used when merging");
    app->add_option("--regime", regime, "preset: ad | adni | oasis");
    app->add_option("--epochs", epochs);
    app->add_option("--batch-size", batch_size);
    app->add_option("--lr", lr, "base learning rate");
    app->add_option("--loss", loss, "cce | wcce");
    app->add_option("--seed", seed);
    app->add_option("-o,--out", out, "output directory");
    app->add_option("--precision", precision, "f32 | f64");
    app->add_option("--input-size", input_size);
    app->add_option("--channels", channels, "1 or 3");
    app->add_option("--test-fraction", test_fraction);
    app->add_option("--val-fraction", val_fraction);
    app->add_flag("--no-pcb", no_pcb, "disable the parallel branch");
    app->add_option("--set", sets, "override any config key: key=value");
  }

  RunConfig build() const {
    RunConfig cfg = config_file.empty() ? RunConfig{} : load_run_config(config_file);
    if (regime) apply_regime(cfg, *regime);
    if (!data.empty()) cfg.data_paths = data;
    if (format) cfg.data_format = parse_data_format(*format);
    if (class_map) cfg.class_map = *class_map;
    if (epochs) cfg.epochs = *epochs;
    if (batch_size) cfg.batch_size = *batch_size;
    if (lr) cfg.schedule.base_lr = *lr;
    if (loss) cfg.loss = parse_loss(*loss);
    if (seed) cfg.seed = *seed;
    if (out) cfg.output_dir = *out;
    if (precision) cfg.precision = parse_dtype(*precision);
    if (input_size) cfg.model.input_size = *input_size;
    if (channels) cfg.model.input_channels = *channels;
    if (test_fraction) cfg.test_fraction = *test_fraction;
    if (val_fraction) cfg.val_fraction = *val_fraction;
    if (k) cfg.kfold_k = *k;
    if (no_pcb) cfg.model.pcb_enabled = false;
    for (const auto& s : sets) apply_override(cfg, s);
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adlite: two-branch CNN classifier for brain MRI slices"};
  app.require_subcommand(1);

  // synth
  SynthOptions synth;
  std::string synth_counts;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic imbalanced ADS1 dataset");
  synth_cmd->add_option("--counts", synth_counts, "per-class sample counts, e.g. 700,50,2500,1800")
      ->required();
  synth_cmd->add_option("--size", synth.spec.image_size, "image side length")->capture_default_str();
  synth_cmd->add_option("--noise", synth.spec.noise, "Gaussian noise sigma on [0, 1]")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth.spec.seed)->capture_default_str();
  synth_cmd->add_option("-o,--out", synth.output, "output .ads1 file")->required();

  // train / kfold
  RunFlags train_flags, kfold_flags;
  auto* train_cmd = app.add_subcommand("train", "split, train, and write a run directory");
  train_flags.attach(train_cmd);
  auto* kfold_cmd = app.add_subcommand("kfold", "stratified k-fold cross validation");
  kfold_flags.attach(kfold_cmd);
  kfold_cmd->add_option("-k,--folds", kfold_flags.k, "number of folds");

  // eval
  EvalOptions eval;
  std::vector<std::string> eval_data;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--run", eval.run_dir, "run directory (model.adlt + test_manifest.json)");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "ADLT checkpoint file");
  eval_cmd->add_option("-d,--data", eval.data_paths, "data to evaluate on (all samples)");
  eval_cmd->add_option("-o,--out", eval.output_dir, "report directory");

  // audit
  std::string audit_config, audit_mode = "paper";
  std::optional<std::size_t> audit_size, audit_channels, audit_classes;
  bool audit_json = false, audit_no_pcb = false;
  std::vector<std::string> audit_sets;
  auto* audit_cmd = app.add_subcommand("audit", "parameter and shape audit");
  audit_cmd->add_option("-c,--config", audit_config, "JSON run config");
  audit_cmd->add_option("--mode", audit_mode, "paper | full")->capture_default_str();
  audit_cmd->add_option("--input-size", audit_size);
  audit_cmd->add_option("--channels", audit_channels);
  audit_cmd->add_option("--classes", audit_classes);
  audit_cmd->add_flag("--no-pcb", audit_no_pcb);
  audit_cmd->add_flag("--json", audit_json, "machine-readable output");
  audit_cmd->add_option("--set", audit_sets, "override any config key: key=value");

  // tx-preview
  TxPreviewOptions tx;
  auto* tx_cmd = app.add_subcommand("tx-preview", "apply m*(c-x) to images, write previews");
  tx_cmd->add_option("inputs", tx.inputs, "input images (png, jpg, pgm, ppm)")->required();
  tx_cmd->add_option("--m", tx.m)->capture_default_str();
  tx_cmd->add_option("--c", tx.c)->capture_default_str();
  tx_cmd->add_option("-o,--out", tx.output_dir)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code::kUsage;
  }

  try {
    if (*synth_cmd) {
      for (const auto& part : CLI::detail::split(synth_counts, ',')) {
        try {
          std::size_t used = 0;
          const long long v = std::stoll(part, &used);
          if (used != part.size() || v < 0) throw std::invalid_argument(part);
          synth.spec.counts.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
          throw ConfigError("--counts: '" + part + "' is not a non-negative integer");
        }
      }
      cmd_synth(synth, std::cout);
    } else if (*train_cmd) {
      cmd_train(train_flags.build(), std::cout);
    } else if (*kfold_cmd) {
      cmd_kfold(kfold_flags.build(), std::cout);
    } else if (*eval_cmd) {
      cmd_eval(eval, std::cout);
    } else if (*audit_cmd) {
      RunConfig cfg = audit_config.empty() ? RunConfig{} : load_run_config(audit_config);
      if (audit_size) cfg.model.input_size = *audit_size;
      if (audit_channels) cfg.model.input_channels = *audit_channels;
      if (audit_classes) cfg.model.num_classes = *audit_classes;
      if (audit_no_pcb) cfg.model.pcb_enabled = false;
      for (const auto& s : audit_sets) apply_override(cfg, s);
      AuditMode mode;
      if (audit_mode == "paper") mode = AuditMode::paper;
      else if (audit_mode == "full") mode = AuditMode::full;
      else throw ConfigError("--mode must be paper or full");
      cmd_audit(cfg.model, mode, audit_json, std::cout);
    } else if (*tx_cmd) {
      cmd_txpreview(tx, std::cout);
    }
  } catch (const adlite::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code::kUsage;
  }
  return 0;
}
