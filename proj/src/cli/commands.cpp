#include "adlite/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "adlite/cli/checkpoint.hpp"
#include "adlite/errors.hpp"
#include "adlite/image_io.hpp"

namespace adlite::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Data

LoadedData load_data(const std::vector<std::string>& paths, DataFormat format,
                     const std::string& class_map, std::ostream& log) {
  if (paths.empty()) throw ConfigError("data.paths is empty");
  LoadedData out;
  std::vector<NamedIndex> parts;
  for (const auto& p : paths) {
    const fs::path path(p);
    std::error_code ec;
    if (!fs::exists(path, ec)) throw DatasetError("dataset not found: " + p);
    const bool is_dir = fs::is_directory(path, ec);
    DataFormat f = format;
    if (f == DataFormat::automatic) f = is_dir ? DataFormat::folder : DataFormat::ads1;
    NamedIndex part;
    if (f == DataFormat::ads1) {
      part.dataset = path.stem().string();
      part.index = load_raw_ads1(path).index;
    } else {
      if (!is_dir) throw DatasetError("not a directory: " + p);
      part.dataset = fs::absolute(path).lexically_normal().filename().string();
      if (part.dataset.empty()) part.dataset = fs::absolute(path).parent_path().filename().string();
      auto loaded = load_image_folder(path);
      for (const auto& w : loaded.warnings) log << "warning: " << w << '\n';
      part.index = std::move(loaded.index);
    }
    out.sources.push_back(fs::absolute(path).lexically_normal());
    parts.push_back(std::move(part));
  }
  if (parts.size() == 1) {
    out.index = std::move(parts.front().index);
  } else {
    const ClassMap map = class_map.empty() ? default_class_map() : load_class_map(class_map);
    out.index = merge_datasets(parts, map);
  }
  out.index.validate();
  if (out.index.size() == 0) throw DatasetError("dataset is empty");
  return out;
}

// ---------------------------------------------------------------------------
// synth

void cmd_synth(const SynthOptions& opts, std::ostream& log) {
  synth_generate(opts.spec, opts.output);
  const auto names = synth_class_names(opts.spec.counts.size());
  log << "wrote " << opts.output.string() << " (" << opts.spec.image_size << "x"
      << opts.spec.image_size << ")\n";
  for (std::size_t k = 0; k < names.size(); ++k) {
    log << "  " << names[k] << ": " << opts.spec.counts[k] << '\n';
  }
}

// ---------------------------------------------------------------------------
// Training shared by train and kfold

namespace {

template <typename T>
struct Trained {
  AdliteNet<T> model;
  AdamState<T> adam;
  TrainRun run;
};

TrainOptions train_options(const RunConfig& cfg) {
  TrainOptions o;
  o.batch_size = cfg.batch_size;
  o.preprocess = {cfg.model.input_size, cfg.model.input_channels};
  o.loss = cfg.loss;
  return o;
}

std::string epoch_json(const EpochRecord& r) {
  ordered_json j;
  j["epoch"] = r.epoch;
  j["lr"] = r.lr;
  j["train_loss"] = r.train_loss;
  j["train_acc"] = r.train_acc;
  j["val_loss"] = r.val_loss;
  j["val_acc"] = r.val_acc;
  j["seconds"] = r.seconds;
  return j.dump();
}

/// Carves the validation part out of `train_pos`, builds a fresh model and
/// fits it. Streams derived from `stream_root`: 2 validation split, 3 weight
/// init, 4 epoch shuffles.
template <typename T>
Trained<T> run_training(const RunConfig& cfg, const DatasetIndex& index, const LabeledImages& data,
                        const std::vector<std::size_t>& train_pos, const Rng& stream_root,
                        const fs::path& log_path, std::ostream& log) {
  std::vector<std::size_t> fit_pos = train_pos, val_pos;
  if (cfg.val_fraction > 0.0) {
    Rng split_rng = stream_root.derive(2);
    const Partition p = stratified_partition(index.subset(train_pos), cfg.val_fraction, split_rng);
    fit_pos.clear();
    for (auto i : p.train) fit_pos.push_back(train_pos[i]);
    for (auto i : p.test) val_pos.push_back(train_pos[i]);
  }
  TrainOptions opts = train_options(cfg);
  if (cfg.loss == LossKind::wcce) {
    std::vector<std::size_t> counts(cfg.model.num_classes, 0);
    for (auto i : fit_pos) ++counts.at(data.labels[i]);
    opts.class_weights = inverse_frequency_weights(counts);
  }
  Rng init_rng = stream_root.derive(3);
  Trained<T> t{AdliteNet<T>(cfg.model, init_rng), AdamState<T>{}, TrainRun{}};

  std::ofstream jsonl(log_path, std::ios::trunc);
  if (!jsonl) throw IoError("cannot write " + log_path.string());
  const std::uint64_t shuffle_seed = stream_root.derive(4).next_u64();
  t.run = fit(t.model, t.adam, data, fit_pos, val_pos, cfg.schedule, cfg.epochs, opts, shuffle_seed,
              [&](const EpochRecord& r) {
                jsonl << epoch_json(r) << '\n' << std::flush;
                log << "epoch " << r.epoch << "/" << cfg.epochs << "  lr " << r.lr << "  loss "
                    << format_metric(r.train_loss, 4) << "  acc " << format_metric(r.train_acc)
                    << "  val_loss " << format_metric(r.val_loss, 4) << "  val_acc "
                    << format_metric(r.val_acc) << "  " << format_metric(r.seconds, 1) << "s" << std::endl;
              });
  if (!jsonl) throw IoError("write failed: " + log_path.string());
  return t;
}

struct Scored {
  ConfusionMatrix confusion;
  ClassificationReport report;
};

Scored score(const Evaluation& ev, std::size_t num_classes) {
  Scored s{ConfusionMatrix(num_classes), {}};
  s.confusion.accumulate(ev.labels, ev.predictions);
  s.report = classification_report(s.confusion, ev.labels, ev.probabilities);
  return s;
}

void write_report(const fs::path& dir, const std::string& stem, const Scored& s,
                  const std::vector<std::string>& names) {
  write_text(dir / (stem + ".txt"), s.report.to_text(names));
  write_text(dir / (stem + ".json"), s.report.to_json(names) + "\n");
  write_text(dir / "confusion.csv", s.confusion.to_csv(names));
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

LoadedData load_for(RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  LoadedData d = load_data(cfg.data_paths, cfg.data_format, cfg.class_map, log);
  if (cfg.model.num_classes != d.index.num_classes()) {
    log << "model.num_classes set to " << d.index.num_classes() << " from the dataset\n";
    cfg.model.num_classes = d.index.num_classes();
  }
  cfg.validate();
  return d;
}

template <typename T>
TrainResult train_impl(const RunConfig& cfg, const LoadedData& loaded, std::ostream& log) {
  const fs::path dir(cfg.output_dir);
  const Rng root(cfg.seed);
  Rng split_rng = root.derive(1);
  const Partition split = stratified_partition(loaded.index, cfg.test_fraction, split_rng);
  log << "samples " << loaded.index.size() << "  train " << split.train.size() << "  test "
      << split.test.size() << '\n';

  const LabeledImages data = materialize(loaded.index);
  prepare_dir(dir);
  write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");

  Trained<T> t = run_training<T>(cfg, loaded.index, data, split.train, root, dir / "epochs.jsonl", log);
  save_checkpoint(dir / "model.adlt", cfg, t.model, &t.adam);

  const Evaluation ev = evaluate(t.model, data, split.test, train_options(cfg));
  Scored s = score(ev, cfg.model.num_classes);
  write_report(dir, "test_report", s, loaded.index.class_names);

  ordered_json manifest;
  std::vector<std::string> sources;
  for (const auto& p : loaded.sources) sources.push_back(p.string());
  manifest["data.paths"] = sources;
  manifest["data.format"] = data_format_name(cfg.data_format);
  manifest["data.class_map"] = cfg.class_map;
  manifest["class_names"] = loaded.index.class_names;
  manifest["positions"] = split.test;
  std::vector<std::uint32_t> labels;
  for (auto i : split.test) labels.push_back(data.labels[i]);
  manifest["labels"] = labels;
  write_text(dir / "test_manifest.json", manifest.dump() + "\n");

  log << s.report.to_text(loaded.index.class_names);
  return {dir, loaded.index.class_names, std::move(t.run), std::move(s.confusion),
          std::move(s.report)};
}

}  // namespace

TrainResult cmd_train(RunConfig cfg, std::ostream& log) {
  const LoadedData loaded = load_for(cfg, log);
  if (cfg.precision == DType::f64) return train_impl<double>(cfg, loaded, log);
  return train_impl<float>(cfg, loaded, log);
}

// ---------------------------------------------------------------------------
// eval

namespace {

template <typename T>
EvalResult eval_impl(const EvalOptions& opts, std::ostream& log) {
  const bool from_run = !opts.run_dir.empty();
  const fs::path ckpt = from_run ? opts.run_dir / "model.adlt" : opts.checkpoint;
  LoadedCheckpoint<T> loaded = load_checkpoint<T>(ckpt);
  const RunConfig& cfg = loaded.config;

  std::vector<std::string> paths = opts.data_paths;
  DataFormat format = cfg.data_format;
  std::string class_map = cfg.class_map;
  json manifest;
  if (from_run) {
    std::ifstream in(opts.run_dir / "test_manifest.json");
    if (!in) throw IoError("cannot read " + (opts.run_dir / "test_manifest.json").string());
    manifest = json::parse(in, nullptr, false);
    if (manifest.is_discarded() || !manifest.is_object()) {
      throw FormatError("test_manifest.json is not a JSON object");
    }
    try {
      if (paths.empty()) paths = manifest.at("data.paths").get<std::vector<std::string>>();
      format = parse_data_format(manifest.at("data.format").get<std::string>());
      class_map = manifest.at("data.class_map").get<std::string>();
    } catch (const json::exception& e) {
      throw FormatError(std::string("test_manifest.json: ") + e.what());
    }
  }
  const LoadedData data = load_data(paths, format, class_map, log);
  if (data.index.num_classes() != cfg.model.num_classes) {
    throw ConfigError("checkpoint has " + std::to_string(cfg.model.num_classes) +
                      " classes but the data has " + std::to_string(data.index.num_classes()));
  }

  std::vector<std::size_t> positions;
  if (from_run) {
    try {
      if (manifest.at("class_names").get<std::vector<std::string>>() != data.index.class_names) {
        throw DatasetError("class names differ from the run's test manifest");
      }
      positions = manifest.at("positions").get<std::vector<std::size_t>>();
      const auto labels = manifest.at("labels").get<std::vector<std::uint32_t>>();
      if (labels.size() != positions.size()) throw FormatError("test_manifest.json: length mismatch");
      for (std::size_t i = 0; i < positions.size(); ++i) {
        if (positions[i] >= data.index.size() ||
            data.index.samples[positions[i]].class_id != labels[i]) {
          throw DatasetError("data no longer matches the run's test manifest at entry " +
                             std::to_string(i));
        }
      }
    } catch (const json::exception& e) {
      throw FormatError(std::string("test_manifest.json: ") + e.what());
    }
  }
  const DatasetIndex subset = from_run ? data.index.subset(positions) : data.index;
  const LabeledImages images = materialize(subset);
  const Evaluation ev = evaluate(loaded.model, images, {}, train_options(cfg));

  EvalResult out;
  out.output_dir = !opts.output_dir.empty() ? opts.output_dir
                   : from_run              ? opts.run_dir / "eval"
                                           : fs::path("eval");
  Scored s = score(ev, cfg.model.num_classes);
  prepare_dir(out.output_dir);
  write_report(out.output_dir, "report", s, data.index.class_names);
  log << s.report.to_text(data.index.class_names);
  out.confusion = std::move(s.confusion);
  out.report = std::move(s.report);
  return out;
}

}  // namespace

EvalResult cmd_eval(const EvalOptions& opts, std::ostream& log) {
  if (opts.run_dir.empty() && opts.checkpoint.empty()) {
    throw ConfigError("eval needs a run directory or a checkpoint");
  }
  if (opts.run_dir.empty() && opts.data_paths.empty()) {
    throw ConfigError("eval with a checkpoint needs data paths");
  }
  const fs::path ckpt = opts.run_dir.empty() ? opts.checkpoint : opts.run_dir / "model.adlt";
  const RunConfig cfg = peek_checkpoint_config(ckpt);
  if (cfg.precision == DType::f64) return eval_impl<double>(opts, log);
  return eval_impl<float>(opts, log);
}

// ---------------------------------------------------------------------------
// kfold

FoldMetrics fold_metrics(const ClassificationReport& r) {
  FoldMetrics m{r.accuracy, r.weighted.precision, r.weighted.recall, r.weighted.f1, std::nullopt};
  if (r.auc && r.auc->macro) m.auc = *r.auc->macro;
  return m;
}

KfoldSummary summarize_folds(std::span<const FoldMetrics> folds) {
  auto column = [&](auto get) {
    std::vector<double> v;
    for (const auto& f : folds) v.push_back(get(f));
    return mean_std(v);
  };
  KfoldSummary s;
  s.accuracy = column([](const FoldMetrics& f) { return f.accuracy; });
  s.precision = column([](const FoldMetrics& f) { return f.precision; });
  s.recall = column([](const FoldMetrics& f) { return f.recall; });
  s.f1 = column([](const FoldMetrics& f) { return f.f1; });
  if (!folds.empty() && std::all_of(folds.begin(), folds.end(), [](const auto& f) { return f.auc.has_value(); })) {
    s.auc = column([](const FoldMetrics& f) { return *f.auc; });
  }
  return s;
}

std::string render_kfold_table(std::span<const FoldMetrics> folds, const KfoldSummary& s) {
  std::ostringstream os;
  auto cell = [&](const std::string& text) { os << std::left << std::setw(14) << text; };
  cell("fold");
  for (const char* h : {"accuracy", "precision", "recall", "f1", "auc (macro)"}) cell(h);
  os << '\n';
  for (std::size_t i = 0; i < folds.size(); ++i) {
    const auto& f = folds[i];
    cell("fold" + std::to_string(i + 1));
    for (double v : {f.accuracy, f.precision, f.recall, f.f1}) cell(format_metric(v));
    cell(f.auc ? format_metric(*f.auc) : "n/a");
    os << '\n';
  }
  auto ms = [](const MeanStd& m) { return format_metric(m.mean) + "±" + format_metric(m.stddev); };
  cell("mean±std");
  for (const auto* m : {&s.accuracy, &s.precision, &s.recall, &s.f1}) cell(ms(*m));
  cell(s.auc ? ms(*s.auc) : "n/a");
  os << '\n';
  return os.str();
}

namespace {

ordered_json mean_std_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.stddev}}; }

template <typename T>
KfoldResult kfold_impl(const RunConfig& cfg, const LoadedData& loaded, std::ostream& log) {
  const fs::path dir(cfg.output_dir);
  const Rng root(cfg.seed);
  Rng fold_rng = root.derive(5);
  const auto partitions = kfold_partition(loaded.index, cfg.kfold_k, fold_rng);
  const LabeledImages data = materialize(loaded.index);
  prepare_dir(dir);
  write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");

  KfoldResult out;
  ordered_json folds_json = ordered_json::array();
  for (std::size_t f = 0; f < partitions.size(); ++f) {
    char name[32];
    std::snprintf(name, sizeof name, "fold%02zu", f + 1);
    const fs::path fold_dir = dir / name;
    prepare_dir(fold_dir);
    log << "== " << name << "  train " << partitions[f].train.size() << "  test "
        << partitions[f].test.size() << '\n';
    Trained<T> t = run_training<T>(cfg, loaded.index, data, partitions[f].train,
                                   root.derive(100 + f), fold_dir / "epochs.jsonl", log);
    const Evaluation ev = evaluate(t.model, data, partitions[f].test, train_options(cfg));
    const Scored s = score(ev, cfg.model.num_classes);
    write_report(fold_dir, "report", s, loaded.index.class_names);
    out.folds.push_back(fold_metrics(s.report));
    const auto& m = out.folds.back();
    ordered_json fj{{"fold", f + 1}, {"accuracy", m.accuracy}, {"precision", m.precision},
                    {"recall", m.recall}, {"f1", m.f1}};
    fj["auc"] = m.auc ? ordered_json(*m.auc) : ordered_json(nullptr);
    folds_json.push_back(std::move(fj));
  }
  out.summary = summarize_folds(out.folds);
  const std::string table = render_kfold_table(out.folds, out.summary);
  write_text(dir / "kfold_summary.txt", table);
  ordered_json summary;
  summary["folds"] = std::move(folds_json);
  summary["mean_std"] = {{"accuracy", mean_std_json(out.summary.accuracy)},
                         {"precision", mean_std_json(out.summary.precision)},
                         {"recall", mean_std_json(out.summary.recall)},
                         {"f1", mean_std_json(out.summary.f1)},
                         {"auc", out.summary.auc ? mean_std_json(*out.summary.auc)
                                                 : ordered_json(nullptr)}};
  summary["averaging"] = "precision/recall/f1 weighted; auc macro one-vs-rest";
  write_text(dir / "kfold_summary.json", summary.dump(2) + "\n");
  log << table;
  return out;
}

}  // namespace

KfoldResult cmd_kfold(RunConfig cfg, std::ostream& log) {
  const LoadedData loaded = load_for(cfg, log);
  if (cfg.precision == DType::f64) return kfold_impl<double>(cfg, loaded, log);
  return kfold_impl<float>(cfg, loaded, log);
}

// ---------------------------------------------------------------------------
// audit

std::string format_lakhs(std::size_t count) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << static_cast<double>(count) / 100000.0;
  return os.str();
}

std::string render_param_audit(const ParamAudit& a) {
  std::ostringstream os;
  os << "parameter audit (" << (a.mode == AuditMode::paper ? "paper" : "full") << " accounting)\n";
  os << std::left << std::setw(24) << "layer" << std::setw(40) << "formula" << std::right
     << std::setw(10) << "count" << std::setw(12) << "allocated" << '\n';
  for (const auto& e : a.entries) {
    os << std::left << std::setw(24) << e.name << std::setw(40) << e.formula << std::right
       << std::setw(10) << e.formula_count << std::setw(12) << e.actual_count << '\n';
  }
  os << std::left << std::setw(64) << "total" << std::right << std::setw(10) << a.total
     << std::setw(12) << a.allocated_total << '\n';
  os << "total: " << a.total << " (" << format_lakhs(a.total) << " lakhs)\n";
  os << "allocated scalars: " << a.allocated_total << " (" << format_lakhs(a.allocated_total)
     << " lakhs)\n";
  return os.str();
}

std::string render_shape_audit(const AdliteConfig& cfg) {
  const auto shapes = shape_audit(cfg);
  std::ostringstream os;
  os << "shape audit (input " << shape_str({cfg.input_channels, cfg.input_size, cfg.input_size})
     << ")\n";
  for (const auto& e : shapes) os << std::left << std::setw(16) << e.name << shape_str(e.shape) << '\n';
  Shape pre_gap, gap, dense;
  for (const auto& e : shapes) {
    if (e.name == "gap") gap = e.shape;
    else if (e.name == "dense") dense = e.shape;
    else pre_gap = e.shape;
  }
  os << shape_str(pre_gap) << " → GAP " << shape_str(gap) << " → dense " << shape_str(dense)
     << '\n';
  return os.str();
}

void cmd_audit(const AdliteConfig& cfg, AuditMode mode, bool as_json, std::ostream& out) {
  cfg.validate();
  const ParamAudit a = param_audit(cfg, mode);
  if (!as_json) {
    out << render_param_audit(a) << '\n' << render_shape_audit(cfg);
    return;
  }
  ordered_json j;
  j["mode"] = mode == AuditMode::paper ? "paper" : "full";
  ordered_json entries = ordered_json::array();
  for (const auto& e : a.entries) {
    entries.push_back({{"name", e.name}, {"formula", e.formula}, {"count", e.formula_count},
                       {"allocated", e.actual_count}});
  }
  j["layers"] = std::move(entries);
  j["total"] = a.total;
  j["total_lakhs"] = format_lakhs(a.total);
  j["allocated_total"] = a.allocated_total;
  ordered_json shapes = ordered_json::array();
  for (const auto& e : shape_audit(cfg)) shapes.push_back({{"name", e.name}, {"shape", e.shape}});
  j["shapes"] = std::move(shapes);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// tx-preview

Image tx_image(const Image& img, double m, double c) {
  Image out = img;
  for (auto& p : out.pixels) {
    const double v = std::clamp(m * (c - static_cast<double>(p)), 0.0, 255.0);
    p = static_cast<std::uint8_t>(std::lround(v));
  }
  return out;
}

std::vector<fs::path> cmd_txpreview(const TxPreviewOptions& opts, std::ostream& log) {
  if (opts.inputs.empty()) throw ConfigError("tx-preview needs at least one input image");
  if (!std::isfinite(opts.m) || !std::isfinite(opts.c)) throw ConfigError("m and c must be finite");
  std::vector<std::pair<fs::path, Image>> decoded;
  for (const auto& p : opts.inputs) {
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) throw IoError("cannot read " + p.string());
    decoded.emplace_back(p, decode_image(p));
  }
  prepare_dir(opts.output_dir);
  std::vector<fs::path> written;
  for (const auto& [path, img] : decoded) {
    const Image tx = tx_image(img, opts.m, opts.c);
    std::string ext = ".png";
    if (!png_supported()) ext = img.channels == 1 ? ".pgm" : ".ppm";
    const std::string stem = path.stem().string();

    Image pair(img.width * 2, img.height, img.channels);
    for (std::size_t c = 0; c < img.channels; ++c) {
      for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
          pair.at(c, y, x) = img.at(c, y, x);
          pair.at(c, y, img.width + x) = tx.at(c, y, x);
        }
      }
    }
    const fs::path tx_path = opts.output_dir / (stem + "_tx" + ext);
    const fs::path pair_path = opts.output_dir / (stem + "_pair" + ext);
    write_image(tx_path, tx);
    write_image(pair_path, pair);
    log << path.string() << " -> " << tx_path.string() << ", " << pair_path.string() << '\n';
    written.push_back(tx_path);
    written.push_back(pair_path);
  }
  return written;
}

}  // namespace adlite::cli
