#include "cfpn/gradcheck_suite.hpp"

#include <functional>
#include <random>

#include "cfpn/layers.hpp"
#include "cfpn/loss.hpp"

namespace cfpn {
namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(shape);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

Tensor random_mask(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = (i % 3 == 0) ? 1.0 : static_cast<double>(rng() % 2);
  return t;
}

// Weighted sum with fixed random weights so every output element gets a
// distinct cotangent.
Var readout(const Var& y, std::uint64_t seed) {
  Rng rng(seed);
  Var w = y.tape().constant(random_tensor(y.shape(), rng, 0.5, 1.5));
  return sum(mul(y, w));
}

// Train-mode batch norm projects out the mean and the output direction of
// the cotangent, so a linear readout leaves input gradients close to zero
// where finite differences are all roundoff. A quadratic term avoids that.
Var quadratic_readout(const Var& y, std::uint64_t seed) { return add(readout(y, seed), sum(mul(y, mul(y, y)))); }

struct OpCase {
  std::string name;
  std::function<void(ParamStore&, Rng&)> init;
  std::function<Var(Tape&, ParamStore&)> loss;
};

std::vector<OpCase> op_cases(std::uint64_t seed) {
  std::vector<OpCase> cases;
  auto p = [](Tape& t, ParamStore& s, const char* n) { return t.param(s, n); };
  auto input = [](const Shape& shape) {
    return [shape](ParamStore& s, Rng& r) { s.add("x", random_tensor(shape, r)); };
  };

  cases.push_back({"conv2d_3x3_bias",
                   [](ParamStore& s, Rng& r) {
                     s.add("x", random_tensor({2, 5, 6}, r));
                     s.add("w", random_tensor({3, 2, 3, 3}, r));
                     s.add("b", random_tensor({3}, r));
                   },
                   [=](Tape& t, ParamStore& s) {
                     return readout(conv2d(p(t, s, "x"), p(t, s, "w"), p(t, s, "b"), 1, 1), seed);
                   }});
  cases.push_back({"conv2d_3x3_stride2",
                   [](ParamStore& s, Rng& r) {
                     s.add("x", random_tensor({2, 6, 7}, r));
                     s.add("w", random_tensor({3, 2, 3, 3}, r));
                   },
                   [=](Tape& t, ParamStore& s) {
                     return readout(conv2d(p(t, s, "x"), p(t, s, "w"), std::nullopt, 2, 1), seed);
                   }});
  cases.push_back({"conv2d_1x1",
                   [](ParamStore& s, Rng& r) {
                     s.add("x", random_tensor({4, 3, 3}, r));
                     s.add("w", random_tensor({2, 4, 1, 1}, r));
                     s.add("b", random_tensor({2}, r));
                   },
                   [=](Tape& t, ParamStore& s) {
                     return readout(conv2d(p(t, s, "x"), p(t, s, "w"), p(t, s, "b"), 1, 0), seed);
                   }});
  cases.push_back({"relu",
                   [](ParamStore& s, Rng& r) {
                     Tensor x = random_tensor({2, 3, 3}, r);
                     nudge_from_kinks(x, 1e-5);
                     s.add("x", x);
                   },
                   [=](Tape& t, ParamStore& s) { return readout(relu(p(t, s, "x")), seed); }});
  cases.push_back({"sigmoid", input({2, 3, 3}),
                   [=](Tape& t, ParamStore& s) { return readout(sigmoid(scale(p(t, s, "x"), 4.0)), seed); }});
  for (BnMode mode : {BnMode::kTrain, BnMode::kEval}) {
    cases.push_back({mode == BnMode::kTrain ? "batch_norm_train" : "batch_norm_eval",
                     [](ParamStore& s, Rng& r) {
                       s.add("x", random_tensor({3, 3, 4}, r));
                       s.add("gamma", random_tensor({3}, r, 0.5, 1.5));
                       s.add("beta", random_tensor({3}, r));
                       s.add_buffer("running_mean", random_tensor({3}, r));
                       s.add_buffer("running_var", random_tensor({3}, r, 0.5, 2.0));
                     },
                     [=](Tape& t, ParamStore& s) {
                       BnRunningStats stats{&s.at("running_mean"), &s.at("running_var")};
                       return quadratic_readout(
                           batch_norm(p(t, s, "x"), p(t, s, "gamma"), p(t, s, "beta"), stats, mode, false), seed);
                     }});
  }
  cases.push_back({"batch_norm_batched",
                   [](ParamStore& s, Rng& r) {
                     s.add("x", random_tensor({3, 3, 4}, r));
                     s.add("y", random_tensor({3, 2, 4}, r));
                     s.add("bn.gamma", random_tensor({3}, r, 0.5, 1.5));
                     s.add("bn.beta", random_tensor({3}, r));
                     s.add_buffer("bn.running_mean", Tensor({3}, 0.0));
                     s.add_buffer("bn.running_var", Tensor({3}, 1.0));
                   },
                   [=](Tape& t, ParamStore& s) {
                     const Batch out = apply_bn(Batch{p(t, s, "x"), p(t, s, "y")}, s, "bn", ForwardOptions::frozen_train());
                     return add(quadratic_readout(out[0], seed), quadratic_readout(out[1], seed + 1));
                   }});
  cases.push_back({"stack_slice_rows",
                   [](ParamStore& s, Rng& r) {
                     s.add("x", random_tensor({2, 3, 4}, r));
                     s.add("y", random_tensor({2, 1, 4}, r));
                   },
                   [=](Tape& t, ParamStore& s) {
                     std::vector<Var> xs{p(t, s, "x"), p(t, s, "y")};
                     return readout(slice_rows(stack_rows(xs), 1, 4), seed);
                   }});
  cases.push_back({"avg_pool2d", input({2, 4, 6}),
                   [=](Tape& t, ParamStore& s) { return readout(avg_pool2d(p(t, s, "x"), 2), seed); }});
  cases.push_back({"global_avg_pool", input({3, 2, 3}),
                   [=](Tape& t, ParamStore& s) { return readout(global_avg_pool(p(t, s, "x")), seed); }});
  cases.push_back({"bilinear_upsample", input({2, 3, 2}),
                   [=](Tape& t, ParamStore& s) { return readout(bilinear_upsample(p(t, s, "x"), 7, 8), seed); }});
  cases.push_back({"concat_channels",
                   [](ParamStore& s, Rng& r) {
                     s.add("x", random_tensor({2, 3, 3}, r));
                     s.add("y", random_tensor({1, 3, 3}, r));
                   },
                   [=](Tape& t, ParamStore& s) {
                     std::vector<Var> xs{p(t, s, "x"), p(t, s, "y")};
                     return readout(concat_channels(xs), seed);
                   }});
  cases.push_back({"slice_channels", input({4, 2, 2}),
                   [=](Tape& t, ParamStore& s) { return readout(slice_channels(p(t, s, "x"), 1, 3), seed); }});
  cases.push_back({"fully_connected",
                   [](ParamStore& s, Rng& r) {
                     s.add("x", random_tensor({5}, r));
                     s.add("w", random_tensor({5, 3}, r));
                     s.add("b", random_tensor({3}, r));
                   },
                   [=](Tape& t, ParamStore& s) {
                     return readout(fully_connected(p(t, s, "x"), p(t, s, "w"), p(t, s, "b")), seed);
                   }});
  cases.push_back({"pick_scale_by_scalar",
                   [](ParamStore& s, Rng& r) {
                     s.add("x", random_tensor({2, 3, 3}, r));
                     s.add("psi", random_tensor({4}, r));
                   },
                   [=](Tape& t, ParamStore& s) {
                     return readout(scale_by_scalar(p(t, s, "x"), pick(p(t, s, "psi"), 2)), seed);
                   }});
  cases.push_back({"add_mul_scale",
                   [](ParamStore& s, Rng& r) {
                     s.add("x", random_tensor({2, 2, 3}, r));
                     s.add("y", random_tensor({2, 2, 3}, r));
                   },
                   [=](Tape& t, ParamStore& s) {
                     Var x = p(t, s, "x"), y = p(t, s, "y");
                     return readout(add(mul(x, y), scale(x, -0.7)), seed);
                   }});
  cases.push_back({"mean", input({3, 4}), [=](Tape& t, ParamStore& s) { return mean(mul(p(t, s, "x"), p(t, s, "x"))); }});
  for (BetaMode mode : {BetaMode::kRatio, BetaMode::kHed}) {
    cases.push_back({std::string("balanced_bce_") + beta_mode_name(mode), input({1, 4, 4}),
                     [=](Tape& t, ParamStore& s) {
                       Rng rng(seed + 17);
                       const Tensor mask = random_mask({1, 4, 4}, rng);
                       return balanced_bce(sigmoid(p(t, s, "x")), mask, mode);
                     }});
  }
  return cases;
}

}  // namespace

std::vector<GradcheckCase> run_op_gradchecks(std::uint64_t seed, const FdOptions& options) {
  std::vector<GradcheckCase> results;
  for (const auto& c : op_cases(seed)) {
    Rng rng(seed);
    ParamStore store;
    c.init(store, rng);
    LossFn loss = [&](Tape& t) { return c.loss(t, store); };
    results.push_back({c.name, finite_diff_check(loss, store, options)});
  }
  return results;
}

GradcheckCase run_model_gradcheck(const ModelConfig& config, const ModelGradcheckOptions& model_options,
                                  const FdOptions& options) {
  ModelConfig cfg = config;
  cfg.backbone.input_height = model_options.input_size;
  cfg.backbone.input_width = model_options.input_size;
  CfpnModel model(cfg, model_options.seed);
  for (const auto& name : model.params().names()) nudge_from_kinks(model.params().at(name), options.step);

  Rng rng(model_options.seed + 1);
  const std::size_t n = model_options.input_size;
  const Tensor image = random_tensor({3, n, n}, rng, 0.0, 1.0);
  const Tensor mask = random_mask({1, n, n}, rng);

  LossFn loss = [&](Tape& tape) {
    ForwardOutputs out = model.forward(tape, image, ForwardOptions::frozen_train());
    return joint_loss(out.global_map, out.local_map, mask).total;
  };
  FdOptions opts = options;
  opts.max_coords_per_param = model_options.coords_per_param;
  opts.seed = model_options.seed;
  opts.order = ProbeOrder::kLargestGradient;
  return {"model " + cfg.describe(), finite_diff_check(loss, model.params(), opts)};
}

GradcheckSummary summarize(std::vector<GradcheckCase> cases, double tolerance) {
  GradcheckSummary s;
  s.cases = std::move(cases);
  bool first = true;
  for (const auto& c : s.cases) {
    for (const auto& e : c.report.entries) {
      // Model parameters report by network group, op checks by op.
      const bool model_case = c.name.rfind("model ", 0) == 0;
      double& g = s.group_errors[model_case ? e.group : "op." + c.name];
      g = std::max(g, e.max_rel_error);
      if (first || e.max_rel_error > s.max_rel_error) {
        s.max_rel_error = e.max_rel_error;
        s.worst = c.name + "/" + e.name;
        first = false;
      }
    }
  }
  bool all_checked = true;
  for (const auto& c : s.cases) all_checked = all_checked && c.report.unchecked.empty();
  s.passed = !first && all_checked && s.max_rel_error < tolerance;
  return s;
}

}  // namespace cfpn
