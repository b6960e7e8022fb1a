// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if a gated criterion fails. Criterion 7 compares two trained
// models and is reported without affecting the exit code.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cfpn/checkpoint.hpp"
#include "cfpn/cli.hpp"
#include "cfpn/dataset.hpp"
#include "cfpn/loss.hpp"
#include "cfpn/metrics.hpp"
#include "cfpn/model.hpp"
#include "cfpn/runtime.hpp"
#include "cfpn/trainer.hpp"
#include "test_util.hpp"

using namespace cfpn;
using cfpn::testing::random_mask;
using cfpn::testing::random_tensor;
using cfpn::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool passed = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  double budget_seconds;
  bool gated;
  std::function<Verdict()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

int cli(std::vector<std::string> args, std::string* err_text = nullptr) {
  args.insert(args.begin(), "cfpn");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (err_text) *err_text = err.str();
  return code;
}

ModelConfig model_config(std::size_t size, CfaVariant cfa, std::optional<CfdConfig> cfd) {
  ModelConfig m;
  m.backbone.input_height = size;
  m.backbone.input_width = size;
  m.cfa = cfa;
  m.cfd = std::move(cfd);
  return m;
}

// ---------------------------------------------------------------------------

Verdict gradient_fidelity() {
  TempDir dir("accept_gc");
  std::string err;
  const int code = cli({"gradcheck", "--input-size", "32", "--tolerance", "1e-4", "--out", dir.path().string()}, &err);
  const auto report = nlohmann::json::parse(slurp(dir / "gradcheck.json"));
  const double worst = report.at("max_rel_error").get<double>();
  const std::size_t cases = report.at("cases").size();
  std::string detail = std::to_string(cases) + " cases (ops + full model), max rel error " + fmt("%.3e", worst) +
                       ", worst " + report.at("worst").get<std::string>();
  if (code != kExitOk) detail += "; " + err;
  return {code == kExitOk && worst < 1e-4, detail};
}

Verdict shape_contract() {
  std::vector<std::string> problems;
  for (std::size_t size : {96, 384}) {
    CfpnModel model(model_config(size, CfaVariant::kCollaborative, CfdConfig{}), 1);
    Tape tape;
    const auto out = model.forward(tape, random_tensor({3, size, size}, size, 0, 1), ForwardOptions::train());
    const std::string at = " at " + std::to_string(size) + ": ";
    if (out.cfa.aggregated.shape() != Shape{kAggregateChannels, size / 4, size / 4}) {
      problems.push_back("F" + at + to_string(out.cfa.aggregated.shape()));
    }
    if (out.decoder_inputs.size() != kNumLevels) problems.push_back("CFD level count" + at);
    for (const auto& [level, fm] : out.decoder_inputs) {
      const auto n = static_cast<std::size_t>(level);
      const Shape want{kLevelChannels[n], size / kLevelStrides[n], size / kLevelStrides[n]};
      if (fm.tensor.shape() != want || fm.stride != kLevelStrides[n]) {
        problems.push_back("CFD level " + std::to_string(level) + at + to_string(fm.tensor.shape()));
      }
    }
    if (out.global_map.shape() != Shape{1, size, size}) problems.push_back("S_g" + at);
    if (out.local_map.shape() != Shape{1, size, size}) problems.push_back("S_l" + at);
  }
  std::string detail = "F [960,H/4,W/4], CFD {64,128,256,256,256} at strides {4,4,8,16,32}, maps HxW for 96 and 384";
  for (const auto& p : problems) detail += "; mismatch " + p;
  return {problems.empty(), detail};
}

Verdict ablation_reductions() {
  CfpnModel model(model_config(64, CfaVariant::kCollaborative, CfdConfig{}), 2);
  Tape tape;
  const auto out = model.forward(tape, random_tensor({3, 64, 64}, 3, 0, 1), ForwardOptions::train());
  ParamStore none;
  const Tensor plain = run_cfa(out.backbone, none, CfaVariant::kNoReweighting).aggregated.value();
  const Tensor ones =
      aggregate(reweight(out.backbone, FusionWeights{tape.constant(Tensor({kNumLevels}, 1.0))})).value();
  const double diff = cfpn::testing::max_abs_diff(plain, ones);

  CfpnModel single(model_config(64, CfaVariant::kCollaborative, CfdConfig{{0}}), 4);
  Tape t2;
  const auto o2 = single.forward(t2, random_tensor({3, 64, 64}, 5, 0, 1), ForwardOptions::train());
  const std::size_t merges =
      t2.count_since(OpKind::kUpsample, o2.decoder_first_node) - t2.count_since(OpKind::kUpsample, o2.decoder_end_node);
  const bool ok = plain.shape() == ones.shape() && diff <= 1e-12 && merges == 0 && o2.decoder_inputs.size() == 1;
  return {ok, "max |A - D(psi=1)| " + fmt("%.1e", diff) + ", decoder upsampling merges with levels {0}: " +
                  std::to_string(merges)};
}

Verdict metric_oracles() {
  std::size_t mismatches = 0, points = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Tensor s = random_tensor({1, 8, 8}, 100 + seed, 0, 1);
    Rng rng(200 + seed);
    for (auto& v : s.values()) {
      if (rng() % 3 == 0) v = static_cast<double>(rng() % 256) / 255.0;  // exactly on a threshold
    }
    const Tensor y = random_mask({1, 8, 8}, 300 + seed, 0.1 + 0.04 * seed);
    const PrCurve curve = pr_curve(s, y);
    double best = 0.0, abs_sum = 0.0;
    for (std::size_t k = 0; k < kNumThresholds; ++k) {
      const double thr = static_cast<double>(k) / 255.0;
      std::size_t tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < s.numel(); ++i) {
        const bool pred = s[i] >= thr, fg = y[i] == 1.0;
        tp += pred && fg;
        fp += pred && !fg;
        fn += !pred && fg;
      }
      const double p = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
      const double r = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
      mismatches += (curve.precision[k] != p) + (curve.recall[k] != r);
      points += 2;
      best = std::max(best, p + r == 0 ? 0.0 : (1.0 + 0.3) * p * r / (0.3 * p + r));
    }
    for (std::size_t i = 0; i < s.numel(); ++i) abs_sum += std::abs(s[i] - y[i]);
    mismatches += (max_f(s, y) != best) + (mae(s, y) != abs_sum / static_cast<double>(s.numel()));
    points += 2;
  }
  return {mismatches == 0,
          "20 pairs, " + std::to_string(points) + " values compared exactly, " + std::to_string(mismatches) + " mismatches"};
}

Verdict loss_oracles() {
  const auto oracle = [](const Tensor& s, const Tensor& y) {
    double pos = 0, neg = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) (y[i] == 1.0 ? pos : neg) += 1;
    const double beta = neg == 0 ? 1.0 : std::min(1.0, pos / neg);
    double loss = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) {
      const double p = std::clamp(s[i], kProbClamp, 1 - kProbClamp);
      loss -= y[i] == 1.0 ? beta * std::log(p) : (1 - beta) * std::log(1 - p);
    }
    return loss;
  };
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor s = random_tensor({1, 4, 4}, 400 + seed, 0, 1);
    Tensor y = random_mask({1, 4, 4}, 500 + seed, 0.15 + 0.07 * seed);
    if (seed == 8) y = Tensor({1, 4, 4}, 1.0);
    if (seed == 9) y = Tensor({1, 4, 4}, 0.0);
    worst = std::max(worst, std::abs(balanced_bce_value(s, y) - oracle(s, y)));
  }
  return {worst < 1e-10, "10 cases incl. all-foreground and all-background masks, max |diff| " + fmt("%.1e", worst)};
}

Verdict overfit() {
  Rng rng(6);
  const SaliencySample sample = synth_sample(96, rng);
  CfpnModel model(model_config(96, CfaVariant::kCollaborative, CfdConfig{}), 6);
  TrainConfig cfg;
  cfg.adam.lr = 1e-3;
  cfg.batch_size = 1;
  cfg.steps = 500;
  cfg.augment = false;
  cfg.seed = 6;
  const TrainResult r = train(model, std::span<const SaliencySample>(&sample, 1), cfg);
  const double first = r.trace.front().joint, last = r.trace.back().joint;
  const double err = mae(model.predict(sample.image).local, sample.mask);
  return {last < 0.02 * first && err < 0.02, "joint loss " + fmt("%.4g", first) + " -> " + fmt("%.4g", last) + " (" +
                                                 fmt("%.2f", 100 * last / first) + "% of initial), S_l MAE " +
                                                 fmt("%.4f", err)};
}

struct AblationSettings {
  // Batch 8: with two images per batch, BN statistics are too noisy for the
  // running averages to stand in for them at inference.
  std::size_t steps = 440;
  std::size_t batch_size = 8;
};

Verdict ablation(const AblationSettings& settings) {
  TempDir dir("accept_ablation");
  synth_dataset(dir.path(), 200, 96, 70, "train");
  synth_dataset(dir.path(), 50, 96, 71, "test");
  const auto train_set = load_samples(read_manifest(dir / "train.json"));
  const auto test_set = load_samples(read_manifest(dir / "test.json"));

  const auto test_mae = [&](const ModelConfig& mc) {
    CfpnModel model(mc, 7);
    TrainConfig cfg;
    cfg.adam.lr = 1e-3;
    cfg.batch_size = settings.batch_size;
    cfg.steps = settings.steps;
    cfg.seed = 7;
    const auto start = std::chrono::steady_clock::now();
    const TrainResult r = train(model, train_set, cfg);
    std::vector<EvalItem> items;
    for (std::size_t i = 0; i < test_set.size(); ++i) {
      items.push_back({std::to_string(i), model.predict(test_set[i].image).local, test_set[i].mask});
    }
    const EvalReport rep = evaluate(items);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "    " << mc.describe() << ": final train loss " << fmt("%.4g", r.trace.back().joint)
              << ", test MAE " << fmt("%.4f", rep.mae) << ", test MaxF " << fmt("%.4f", rep.max_f) << " ("
              << fmt("%.0f", secs) << " s)\n"
              << std::flush;
    return rep.mae;
  };
  const double full = test_mae(model_config(96, CfaVariant::kCollaborative, CfdConfig{}));
  const double plain = test_mae(model_config(96, CfaVariant::kNoReweighting, std::nullopt));
  return {full <= plain, "test MAE full " + fmt("%.4f", full) + " vs plain FPN " + fmt("%.4f", plain) + " after " +
                             std::to_string(settings.steps) + " steps of batch " +
                             std::to_string(settings.batch_size)};
}

Verdict determinism() {
  TempDir dir("accept_determinism");
  std::vector<std::string> problems;
  const auto run = [&](const std::string& tag) {
    const fs::path root = dir / tag;
    cli({"synth", "--count", "4", "--size", "64", "--seed", "8", "--out", (root / "data").string()});
    const int t = cli({"train", "--manifest", (root / "data/train.json").string(), "--input-size", "64", "--steps", "6",
                       "--batch-size", "2", "--seed", "9", "--out", (root / "run").string()});
    const int i = cli({"infer", "--checkpoint", (root / "run/checkpoint.bin").string(), "--manifest",
                       (root / "data/train.json").string(), "--emit-global", "--out", (root / "pred").string()});
    if (t != kExitOk || i != kExitOk) problems.push_back(tag + " run failed");
    return root;
  };
  const fs::path a = run("a"), b = run("b");
  std::size_t compared = 0;
  for (const std::string rel : {"run/loss.csv", "run/checkpoint.bin", "pred/train_0000.pgm", "pred/train_0001.pgm",
                                "pred/train_0002.pgm", "pred/train_0003_global.pgm", "data/images/train_0003.ppm"}) {
    ++compared;
    const std::string x = slurp(a / rel), y = slurp(b / rel);
    if (x.empty() || x != y) problems.push_back(rel);
  }
  std::string detail = std::to_string(compared) + " artefacts compared byte for byte (loss trace, checkpoint, PGMs)";
  for (const auto& p : problems) detail += "; differs: " + p;
  return {problems.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Acceptance checks"};
  std::vector<int> selected;
  AblationSettings ablation_settings;
  app.add_option("--criteria", selected, "Criteria to run (default 1-6 and 8)")->delimiter(',');
  app.add_option("--ablation-steps", ablation_settings.steps, "Training steps per model for criterion 7");
  app.add_option("--ablation-batch", ablation_settings.batch_size, "Batch size for criterion 7");
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 8};

  const std::vector<Criterion> criteria{
      {1, "gradient fidelity", 300, true, gradient_fidelity},
      {2, "shape contract", 60, true, shape_contract},
      {3, "ablation reductions", 60, true, ablation_reductions},
      {4, "metric oracles", 60, true, metric_oracles},
      {5, "loss oracles", 60, true, loss_oracles},
      {6, "overfit one sample", 600, true, overfit},
      {7, "full model vs plain FPN (reported)", 3600, false, [&] { return ablation(ablation_settings); }},
      {8, "determinism", 600, true, determinism},
  };

  bool all_gated_pass = true;
  for (const auto& c : criteria) {
    if (std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_seconds;
    const bool passed = v.passed && in_time;
    if (c.gated && !passed) all_gated_pass = false;
    std::cout << (passed ? "PASS" : "FAIL") << "  criterion " << c.id << " " << c.title << ": " << v.detail << " ["
              << fmt("%.1f", secs) << " s of " << fmt("%.0f", c.budget_seconds) << " s"
              << (in_time ? "" : ", over budget") << "]" << (c.gated ? "" : " (not gated)") << "\n"
              << std::flush;
  }
  return all_gated_pass ? 0 : 1;
}
