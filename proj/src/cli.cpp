#include "cfpn/cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "cfpn/checkpoint.hpp"
#include "cfpn/dataset.hpp"
#include "cfpn/error.hpp"
#include "cfpn/gradcheck_suite.hpp"
#include "cfpn/metrics.hpp"
#include "cfpn/netpbm.hpp"

namespace cfpn {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}

template <typename T>
T field(const json& doc, const std::string& key, const char* expected) {
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config field '" + key + "': expected " + expected);
  }
}

std::size_t count_field(const json& doc, const std::string& key) {
  const auto& v = doc.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw ConfigError("config field '" + key + "': expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

fs::path resolve(const fs::path& p, const fs::path& base_dir) {
  return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
}

// Field-level wrapper: prefixes module validation errors with the key.
template <typename Fn>
auto with_field(const std::string& key, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError("config field '" + key + "': " + e.what());
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_json(const fs::path& path, const json& doc) { write_text_file(path, doc.dump(2) + "\n"); }

// Flags common to every subcommand that builds a model.
struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> cfa_variant;
  std::optional<std::string> cfd_levels;
  std::optional<std::string> out;

  void attach(CLI::App* app, bool model_flags) {
    app->add_option("--config", config, "JSON run configuration")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "Seed for all randomness");
    app->add_option("--out", out, "Output directory");
    if (model_flags) {
      app->add_option("--cfa-variant", cfa_variant, "Cross-layer aggregation variant: A, B, C or D");
      app->add_option("--cfd-levels", cfd_levels, "Active distribution levels, e.g. 0,1,2,3,4, or none");
    }
  }

  RunConfig resolve(RunConfig base = {}) const {
    RunConfig cfg = config.empty() ? base : load_config_file(config, base);
    if (seed) cfg.seed = *seed;
    if (cfa_variant) cfg.cfa = with_field("cfa_variant", [&] { return parse_cfa_variant(*cfa_variant); });
    if (cfd_levels) cfg.cfd = with_field("cfd_levels", [&] { return parse_cfd_levels(*cfd_levels); });
    if (out) cfg.out = *out;
    return cfg;
  }
};

// ---------------------------------------------------------------------------
// train

struct TrainFlags {
  CommonFlags common;
  std::optional<std::string> manifest;
  std::optional<std::size_t> steps, epochs, batch_size, input_size;
  std::optional<double> lr;
  bool no_augment = false;
};

std::string loss_csv_row(const StepRecord& r) {
  return std::to_string(r.step) + "," + fmt17(r.joint) + "," + fmt17(r.global) + "," + fmt17(r.local) + "\n";
}

int cmd_train(const TrainFlags& flags, std::ostream& out) {
  RunConfig cfg = flags.common.resolve();
  if (flags.manifest) cfg.manifest = *flags.manifest;
  if (flags.steps) cfg.steps = *flags.steps;
  if (flags.epochs) cfg.epochs = *flags.epochs;
  if (flags.batch_size) cfg.batch_size = *flags.batch_size;
  if (flags.input_size) cfg.input_size = *flags.input_size;
  if (flags.lr) cfg.adam.lr = *flags.lr;
  if (flags.no_augment) cfg.augment = false;
  if (cfg.manifest.empty()) throw ConfigError("train: no manifest given (--manifest or config field 'manifest')");

  const ModelConfig model_cfg = cfg.model_config();
  const TrainConfig train_cfg = cfg.train_config();
  with_field("input_size", [&] { check_input_size(cfg.input_size, cfg.input_size); return 0; });
  const auto samples = load_samples(read_manifest(cfg.manifest));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& img = samples[i].image;
    if (img.dim(1) != cfg.input_size || img.dim(2) != cfg.input_size) {
      throw InputSizeError("training sample " + std::to_string(i) + " is " + std::to_string(img.dim(1)) + "x" +
                           std::to_string(img.dim(2)) + ", expected input_size " + std::to_string(cfg.input_size));
    }
  }

  ensure_dir(cfg.out);
  CfpnModel model(model_cfg, cfg.seed);
  std::ofstream csv(cfg.out / "loss.csv", std::ios::binary | std::ios::trunc);
  if (!csv) throw ConfigError("cannot write " + (cfg.out / "loss.csv").string());
  csv << "step,joint_loss,global_loss,local_loss\n";

  const auto start = std::chrono::steady_clock::now();
  const TrainResult result = train(model, samples, train_cfg, {}, [&](const StepRecord& r) {
    csv << loss_csv_row(r);
    csv.flush();
  });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  save_checkpoint(cfg.out / "checkpoint.bin", model);

  json summary = {{"config", to_json(cfg)},
                  {"model", model_cfg.describe()},
                  {"num_samples", samples.size()},
                  {"num_parameters", model.params().parameter_count()},
                  {"steps", result.trace.size()},
                  {"epochs_completed", result.epochs_completed}};
  if (!result.trace.empty()) {
    summary["initial_joint_loss"] = result.trace.front().joint;
    summary["final_joint_loss"] = result.trace.back().joint;
  }
  write_json(cfg.out / "summary.json", summary);
  out << "trained " << model_cfg.describe() << " for " << result.trace.size() << " steps in " << seconds << " s";
  if (!result.trace.empty()) out << "; joint loss " << result.trace.front().joint << " -> " << result.trace.back().joint;
  out << "\nwrote " << (cfg.out / "checkpoint.bin").string() << ", loss.csv, summary.json\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// infer

struct InferFlags {
  CommonFlags common;
  std::string checkpoint;
  std::vector<std::string> images;
  std::optional<std::string> manifest;
  bool emit_global = false;
};

int cmd_infer(const InferFlags& flags, std::ostream& out) {
  RunConfig cfg = flags.common.resolve();
  std::vector<fs::path> images(flags.images.begin(), flags.images.end());
  if (flags.manifest) {
    for (const auto& e : read_manifest(*flags.manifest).entries) images.push_back(e.image);
  }
  if (images.empty()) throw ConfigError("infer: no input images (positional paths or --manifest)");
  std::set<std::string> stems;
  for (const auto& p : images) {
    if (!stems.insert(p.stem().string()).second) throw ConfigError("infer: duplicate output name " + p.stem().string());
  }

  CfpnModel model = load_checkpoint(flags.checkpoint);
  ensure_dir(cfg.out);
  for (const auto& path : images) {
    const Tensor image = read_image(path);
    check_input_size(image.dim(1), image.dim(2));
    const SaliencyMaps maps = model.predict(image);
    if (!maps.local.all_finite() || !maps.global.all_finite()) {
      throw NumericError("infer: non-finite saliency for " + path.string());
    }
    const std::string stem = path.stem().string();
    write_saliency(cfg.out / (stem + ".pgm"), maps.local);
    if (flags.emit_global) write_saliency(cfg.out / (stem + "_global.pgm"), maps.global);
  }
  out << "wrote " << images.size() * (flags.emit_global ? 2 : 1) << " saliency maps to " << cfg.out.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalFlags {
  std::string pred_dir, gt_dir;
  std::string out = ".";
  std::string aggregation = "per-image";
  double beta2 = kDefaultFBeta2;
};

std::map<std::string, fs::path> pgm_files(const fs::path& dir, bool skip_global) {
  if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir.string());
  std::map<std::string, fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".pgm") continue;
    const std::string stem = entry.path().stem().string();
    if (skip_global && stem.size() > 7 && stem.ends_with("_global")) continue;
    files.emplace(stem, entry.path());
  }
  return files;
}

Tensor read_gray(const fs::path& path) {
  const Raster r = read_raster(path);
  if (r.channels != 1) throw DecodeError(path.string() + ": prediction must be a PGM (P5)", 0);
  Tensor t({1, r.height, r.width});
  for (std::size_t i = 0; i < r.pixels.size(); ++i) t[i] = r.pixels[i] / 255.0;
  return t;
}

int cmd_eval(const EvalFlags& flags, std::ostream& out) {
  const Aggregation aggregation = parse_aggregation(flags.aggregation);
  const auto preds = pgm_files(flags.pred_dir, true);
  const auto gts = pgm_files(flags.gt_dir, false);
  std::vector<std::string> only_pred, only_gt;
  for (const auto& [k, _] : preds) {
    if (!gts.count(k)) only_pred.push_back(k);
  }
  for (const auto& [k, _] : gts) {
    if (!preds.count(k)) only_gt.push_back(k);
  }
  if (!only_pred.empty() || !only_gt.empty()) {
    std::string msg = "eval: prediction and ground-truth file names differ";
    auto list = [&](const char* label, const std::vector<std::string>& names) {
      if (names.empty()) return;
      msg += std::string("; only in ") + label + ":";
      for (const auto& n : names) msg += " " + n + ".pgm";
    };
    list(flags.pred_dir.c_str(), only_pred);
    list(flags.gt_dir.c_str(), only_gt);
    throw ConfigError(msg);
  }
  if (preds.empty()) throw ConfigError("eval: no .pgm files in " + flags.pred_dir);

  std::vector<EvalItem> items;
  for (const auto& [stem, path] : preds) {
    EvalItem item{stem, read_gray(path), read_mask(gts.at(stem))};
    if (item.saliency.shape() != item.mask.shape()) {
      throw DimensionError("eval: " + stem + " prediction is " + to_string(item.saliency.shape()) +
                           " but ground truth is " + to_string(item.mask.shape()));
    }
    items.push_back(std::move(item));
  }
  const EvalReport report = evaluate(items, flags.beta2, aggregation);
  const fs::path dir = flags.out;
  ensure_dir(dir);
  write_json(dir / "report.json", to_json(report));
  write_text_file(dir / "pr.csv", pr_csv(report.curve));
  out << "images " << items.size() << "  MaxF " << fmt17(report.max_f) << "  MAE " << fmt17(report.mae) << "  ("
      << aggregation_name(aggregation) << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckFlags {
  CommonFlags common;
  std::size_t input_size = 32;
  std::size_t coords = 6;
  double tolerance = 1e-4;
  bool skip_model = false;
};

json case_json(const GradcheckCase& c) {
  json entries = json::array();
  for (const auto& e : c.report.entries) {
    entries.push_back({{"name", e.name},
                       {"group", e.group},
                       {"checked", e.checked},
                       {"skipped_kinks", e.skipped_kinks},
                       {"max_rel_error", e.max_rel_error},
                       {"worst_index", e.worst_index},
                       {"analytic", e.analytic},
                       {"numeric", e.numeric}});
  }
  return {{"name", c.name},
          {"max_rel_error", c.report.max_rel_error},
          {"skipped_kinks", c.report.skipped_kinks},
          {"unchecked", c.report.unchecked},
          {"entries", entries}};
}

int cmd_gradcheck(const GradcheckFlags& flags, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = flags.common.resolve();
  FdOptions fd;
  fd.tolerance = flags.tolerance;
  fd.seed = cfg.seed;

  const auto start = std::chrono::steady_clock::now();
  std::vector<GradcheckCase> cases = run_op_gradchecks(cfg.seed, fd);
  if (!flags.skip_model) {
    ModelGradcheckOptions mo;
    mo.input_size = flags.input_size;
    mo.coords_per_param = flags.coords;
    mo.seed = cfg.seed;
    cases.push_back(run_model_gradcheck(cfg.model_config(), mo, fd));
  }
  const GradcheckSummary summary = summarize(cases, flags.tolerance);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  for (const auto& c : summary.cases) {
    std::size_t probes = 0;
    for (const auto& e : c.report.entries) probes += e.checked;
    out << (c.report.max_rel_error < flags.tolerance ? "ok   " : "FAIL ") << c.name << "  probes " << probes
        << "  max rel " << fmt_sci(c.report.max_rel_error);
    if (c.report.skipped_kinks) out << "  (skipped " << c.report.skipped_kinks << " kink-straddling probes)";
    for (const auto& name : c.report.unchecked) out << "\n     no valid probe for " << name;
    out << "\n";
  }
  out << "groups:\n";
  for (const auto& [group, e] : summary.group_errors) out << "  " << group << "  max rel " << fmt_sci(e) << "\n";

  const GradcheckCase* worst_case = nullptr;
  const FdEntry* worst_entry = nullptr;
  for (const auto& c : summary.cases) {
    for (const auto& e : c.report.entries) {
      if (c.name + "/" + e.name == summary.worst) {
        worst_case = &c;
        worst_entry = &e;
      }
    }
  }
  if (worst_entry) {
    out << "worst: " << worst_case->name << " / " << worst_entry->name << "[" << worst_entry->worst_index
        << "]  rel " << fmt_sci(worst_entry->max_rel_error) << "  analytic " << fmt17(worst_entry->analytic)
        << "  numeric " << fmt17(worst_entry->numeric) << "\n";
    out << "       |analytic - numeric| " << fmt_sci(std::abs(worst_entry->analytic - worst_entry->numeric))
        << ", central-difference resolution at this loss " << fmt_sci(fd_resolution(worst_case->report.loss, fd.step))
        << "\n";
  }
  out << (summary.passed ? "PASS" : "FAIL") << "  max rel " << fmt_sci(summary.max_rel_error) << " (tol "
      << fmt_sci(flags.tolerance) << ", " << seconds << " s)\n";

  if (flags.common.out) {
    const fs::path dir = *flags.common.out;
    ensure_dir(dir);
    json cases_json = json::array();
    for (const auto& c : summary.cases) cases_json.push_back(case_json(c));
    write_json(dir / "gradcheck.json", {{"passed", summary.passed},
                                        {"tolerance", flags.tolerance},
                                        {"max_rel_error", summary.max_rel_error},
                                        {"worst", summary.worst},
                                        {"groups", summary.group_errors},
                                        {"cases", cases_json}});
  }
  if (!summary.passed) {
    err << "gradcheck failed: worst offender " << summary.worst << " with relative error "
        << fmt_sci(summary.max_rel_error) << "\n";
    return kExitCheckFailed;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// synth

struct SynthFlags {
  CommonFlags common;
  std::size_t count = 16;
  std::optional<std::size_t> size;
  std::string split = "train";
};

int cmd_synth(const SynthFlags& flags, std::ostream& out) {
  const RunConfig cfg = flags.common.resolve();
  const std::size_t size = flags.size.value_or(cfg.input_size);
  const DatasetManifest m = synth_dataset(cfg.out, flags.count, size, cfg.seed, flags.split);
  out << "wrote " << m.entries.size() << " samples of " << size << "x" << size << " to "
      << (cfg.out / (flags.split + ".json")).string() << "\n";
  return kExitOk;
}

}  // namespace

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.backbone.input_height = input_size;
  m.backbone.input_width = input_size;
  m.cfa = cfa;
  m.cfd = cfd;
  with_field("cfd_levels", [&] { m.validate(); return 0; });
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.adam = adam;
  t.batch_size = batch_size;
  t.steps = steps;
  t.epochs = epochs;
  t.seed = seed;
  t.augment = augment;
  t.beta_mode = beta_mode;
  if (steps == 0 && epochs == 0) throw ConfigError("config: one of 'steps' or 'epochs' must be positive");
  t.validate();
  return t;
}

std::optional<CfdConfig> parse_cfd_levels(const std::string& text) {
  if (text == "none") return std::nullopt;
  CfdConfig c;
  c.active_levels = parse_level_list(text);
  c.validate();
  return c;
}

RunConfig apply_config_json(const json& doc, RunConfig cfg, const fs::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (key == "seed") {
      if (!value.is_number_unsigned()) throw ConfigError("config field 'seed': expected a non-negative integer");
      cfg.seed = value.get<std::uint64_t>();
    } else if (key == "input_size") {
      cfg.input_size = count_field(doc, key);
    } else if (key == "cfa_variant") {
      const auto s = field<std::string>(doc, key, "a string");
      cfg.cfa = with_field(key, [&] { return parse_cfa_variant(s); });
    } else if (key == "cfd_levels") {
      const auto s = field<std::string>(doc, key, "a string such as \"0,1,2,3,4\" or \"none\"");
      cfg.cfd = with_field(key, [&] { return parse_cfd_levels(s); });
    } else if (key == "lr") {
      cfg.adam.lr = field<double>(doc, key, "a number");
    } else if (key == "beta1") {
      cfg.adam.beta1 = field<double>(doc, key, "a number");
    } else if (key == "beta2") {
      cfg.adam.beta2 = field<double>(doc, key, "a number");
    } else if (key == "eps") {
      cfg.adam.eps = field<double>(doc, key, "a number");
    } else if (key == "weight_decay") {
      cfg.adam.weight_decay = field<double>(doc, key, "a number");
    } else if (key == "batch_size") {
      cfg.batch_size = count_field(doc, key);
    } else if (key == "steps") {
      cfg.steps = count_field(doc, key);
    } else if (key == "epochs") {
      cfg.epochs = count_field(doc, key);
    } else if (key == "augment") {
      cfg.augment = field<bool>(doc, key, "a boolean");
    } else if (key == "beta_mode") {
      const auto s = field<std::string>(doc, key, "a string");
      cfg.beta_mode = with_field(key, [&] { return parse_beta_mode(s); });
    } else if (key == "manifest") {
      cfg.manifest = resolve(field<std::string>(doc, key, "a path string"), base_dir);
    } else if (key == "out") {
      cfg.out = resolve(field<std::string>(doc, key, "a path string"), base_dir);
    } else {
      throw ConfigError("config has unknown field '" + key + "'");
    }
  }
  with_field("optimizer", [&] { cfg.adam.validate(); return 0; });
  return cfg;
}

RunConfig load_config_file(const fs::path& path, RunConfig base) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return apply_config_json(doc, std::move(base), path.parent_path());
}

json to_json(const RunConfig& c) {
  std::string levels = "none";
  if (c.cfd) {
    levels.clear();
    for (std::size_t i = 0; i < c.cfd->active_levels.size(); ++i) {
      levels += (i ? "," : "") + std::to_string(c.cfd->active_levels[i]);
    }
  }
  return {{"seed", c.seed},
          {"input_size", c.input_size},
          {"cfa_variant", std::string(1, cfa_variant_letter(c.cfa))},
          {"cfd_levels", levels},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"eps", c.adam.eps},
          {"weight_decay", c.adam.weight_decay},
          {"batch_size", c.batch_size},
          {"steps", c.steps},
          {"epochs", c.epochs},
          {"augment", c.augment},
          {"beta_mode", beta_mode_name(c.beta_mode)},
          {"manifest", c.manifest.generic_string()},
          {"out", c.out.generic_string()}};
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-layer feature pyramid network for salient object detection"};
  app.name(args.empty() ? "cfpn" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);

  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a manifest");
  train_flags.common.attach(train_cmd, true);
  train_cmd->add_option("--manifest", train_flags.manifest, "JSON manifest of image/mask pairs");
  train_cmd->add_option("--steps", train_flags.steps, "Optimizer steps (default 2000)");
  train_cmd->add_option("--epochs", train_flags.epochs, "Epochs, used when steps is 0");
  train_cmd->add_option("--batch-size", train_flags.batch_size, "Images per step (default 2)");
  train_cmd->add_option("--input-size", train_flags.input_size, "Expected image side (default 96)");
  train_cmd->add_option("--lr", train_flags.lr, "Adam learning rate (default 1e-3)");
  train_cmd->add_flag("--no-augment", train_flags.no_augment, "Disable flip/rotation augmentation");

  InferFlags infer_flags;
  auto* infer_cmd = app.add_subcommand("infer", "Write saliency maps for images");
  infer_flags.common.attach(infer_cmd, false);
  infer_cmd->add_option("--checkpoint", infer_flags.checkpoint, "Trained checkpoint")->required();
  infer_cmd->add_option("--manifest", infer_flags.manifest, "Take images from a manifest");
  infer_cmd->add_flag("--emit-global", infer_flags.emit_global, "Also write the global map as <name>_global.pgm");
  infer_cmd->add_option("images", infer_flags.images, "PPM/PGM images");

  EvalFlags eval_flags;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against ground-truth masks");
  eval_cmd->add_option("--pred-dir", eval_flags.pred_dir, "Directory of predicted PGMs")->required();
  eval_cmd->add_option("--gt-dir", eval_flags.gt_dir, "Directory of ground-truth PGMs")->required();
  eval_cmd->add_option("--out", eval_flags.out, "Directory for report.json and pr.csv");
  eval_cmd->add_option("--aggregation", eval_flags.aggregation, "per-image or dataset");
  eval_cmd->add_option("--beta2", eval_flags.beta2, "F-measure beta^2 (default 0.3)");

  GradcheckFlags gc_flags;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every op and the full model");
  gc_flags.common.attach(gc_cmd, true);
  gc_cmd->add_option("--input-size", gc_flags.input_size, "Image side of the model check (default 32)");
  gc_cmd->add_option("--coords", gc_flags.coords, "Coordinates probed per model parameter tensor (default 6)");
  gc_cmd->add_option("--tolerance", gc_flags.tolerance, "Maximum relative error (default 1e-4)");
  gc_cmd->add_flag("--ops-only", gc_flags.skip_model, "Skip the whole-model check");

  SynthFlags synth_flags;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_flags.common.attach(synth_cmd, false);
  synth_cmd->add_option("--count", synth_flags.count, "Number of samples (default 16)");
  synth_cmd->add_option("--size", synth_flags.size, "Image side, a multiple of 32 (default input_size)");
  synth_cmd->add_option("--split", synth_flags.split, "Split name used for file names and the manifest");

  std::vector<std::string> rest(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_flags, out);
    if (*infer_cmd) return cmd_infer(infer_flags, out);
    if (*eval_cmd) return cmd_eval(eval_flags, out);
    if (*gc_cmd) return cmd_gradcheck(gc_flags, out, err);
    if (*synth_cmd) return cmd_synth(synth_flags, out);
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const InputSizeError& e) {
    err << "input size error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DecodeError& e) {
    err << "decode error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "filesystem error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace cfpn
