#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"

#include "cfpn/error.hpp"
#include "cfpn/loss.hpp"
#include "cfpn/model.hpp"
#include "test_util.hpp"

using namespace cfpn;
using cfpn::testing::random_mask;
using cfpn::testing::random_tensor;

namespace {

ModelConfig config_for(std::size_t size, CfaVariant variant = CfaVariant::kCollaborative,
                       std::optional<CfdConfig> cfd = CfdConfig{}) {
  ModelConfig c;
  c.backbone.input_height = size;
  c.backbone.input_width = size;
  c.cfa = variant;
  c.cfd = std::move(cfd);
  return c;
}

FeaturePyramid random_pyramid(Tape& tape, std::size_t size, std::uint64_t seed) {
  FeaturePyramid p;
  p.image_height = p.image_width = size;
  for (std::size_t n = 0; n < kNumLevels; ++n) {
    const std::size_t s = size / kLevelStrides[n];
    p.levels[n] = FeatureMap{static_cast<int>(n), kLevelStrides[n],
                             tape.constant(random_tensor({kLevelChannels[n], s, s}, seed + n))};
  }
  return p;
}

bool all_zero(const GradTable& grads, const std::string& group) {
  for (const auto& [name, g] : grads) {
    if (param_group(name) == group && g.max_abs() != 0.0) return false;
  }
  return true;
}

bool any_nonzero_per_tensor(const GradTable& grads, const std::string& group) {
  bool seen = false;
  for (const auto& [name, g] : grads) {
    if (param_group(name) != group) continue;
    seen = true;
    if (g.max_abs() == 0.0) {
      MESSAGE("zero gradient for " << name);
      return false;
    }
  }
  return seen;
}

}  // namespace

TEST_SUITE("network") {
  TEST_CASE("input size contract") {
    CHECK_NOTHROW(check_input_size(32, 64));
    CHECK_THROWS_AS(check_input_size(33, 32), InputSizeError);
    CHECK_THROWS_AS(check_input_size(0, 32), InputSizeError);
    CHECK_THROWS_AS(check_input_size(96, 100), InputSizeError);
  }

  TEST_CASE("backbone levels carry the documented channels and strides") {
    for (std::size_t size : {32, 64, 96}) {
      CAPTURE(size);
      ModelConfig cfg = config_for(size);
      CfpnModel model(cfg, 1);
      Tape tape;
      const FeaturePyramid p =
          extract_features(tape, random_tensor({3, size, size}, 2, 0, 1), model.params(), ForwardOptions::eval());
      for (std::size_t n = 0; n < kNumLevels; ++n) {
        CHECK(p.levels[n].level == static_cast<int>(n));
        CHECK(p.levels[n].stride == kLevelStrides[n]);
        CHECK(p.levels[n].tensor.shape() == Shape{kLevelChannels[n], size / kLevelStrides[n], size / kLevelStrides[n]});
      }
    }
  }

  TEST_CASE("full forward shapes") {
    for (std::size_t size : {32, 64}) {
      CAPTURE(size);
      CfpnModel model(config_for(size), 3);
      Tape tape;
      const auto out = model.forward(tape, random_tensor({3, size, size}, 4, 0, 1), ForwardOptions::train());
      CHECK(out.cfa.aggregated.shape() == Shape{kAggregateChannels, size / 4, size / 4});
      REQUIRE(out.cfa.psi.has_value());
      CHECK(out.cfa.psi->shape() == Shape{kNumLevels});
      CHECK(out.decoder_inputs.size() == kNumLevels);
      for (const auto& [level, fm] : out.decoder_inputs) {
        const std::size_t s = size / kLevelStrides[static_cast<std::size_t>(level)];
        CHECK(fm.stride == kLevelStrides[static_cast<std::size_t>(level)]);
        CHECK(fm.tensor.shape() == Shape{kLevelChannels[static_cast<std::size_t>(level)], s, s});
      }
      CHECK(out.global_map.shape() == Shape{1, size, size});
      CHECK(out.local_map.shape() == Shape{1, size, size});
      for (double v : out.local_map.value().values()) CHECK((v > 0.0 && v < 1.0));
    }
  }

  TEST_CASE("non-square inputs keep their aspect") {
    ModelConfig cfg = config_for(32);
    cfg.backbone.input_width = 64;
    CfpnModel model(cfg, 5);
    const SaliencyMaps m = model.predict(random_tensor({3, 32, 64}, 6, 0, 1));
    CHECK(m.local.shape() == Shape{1, 32, 64});
    CHECK(m.global.shape() == Shape{1, 32, 64});
  }

  TEST_CASE("variant A equals variant D with unit fusion weights") {
    Tape tape;
    const FeaturePyramid p = random_pyramid(tape, 64, 10);
    ParamStore store;
    const Tensor plain = run_cfa(p, store, CfaVariant::kNoReweighting).aggregated.value();
    const FeaturePyramid ones = reweight(p, FusionWeights{tape.constant(Tensor({kNumLevels}, 1.0))});
    const Tensor gated = aggregate(ones).value();
    CHECK(plain.shape() == Shape{kAggregateChannels, 16, 16});
    CHECK(cfpn::testing::max_abs_diff(plain, gated) <= 1e-12);
  }

  TEST_CASE("squeeze produces the concatenated channel means") {
    Tape tape;
    const FeaturePyramid p = random_pyramid(tape, 32, 20);
    const GlobalDescriptor d = squeeze_global(p);
    CHECK(d.z.shape() == Shape{kAggregateChannels});
    CHECK(d.offsets[kNumLevels] == kAggregateChannels);
    for (std::size_t n = 0; n < kNumLevels; ++n) {
      const Tensor& level = p.levels[n].tensor.value();
      const std::size_t plane = level.dim(1) * level.dim(2);
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += level[i];
      CHECK(std::abs(d.z.value()[d.offsets[n]] - s / plane) < 1e-12);
    }
  }

  TEST_CASE("the collaborative gate is FC2(ReLU(FC1(z)))") {
    Rng rng(7);
    ParamStore store;
    init_cfa(store, CfaVariant::kCollaborative, rng);
    CHECK(store.at("cfa.gate.fc1.weight").shape() == Shape{kAggregateChannels, kGateHidden});
    CHECK(store.at("cfa.gate.fc2.weight").shape() == Shape{kGateHidden, kNumLevels});
    Tape tape;
    const Tensor z = random_tensor({kAggregateChannels}, 8);
    const Tensor psi = gate_weights(GlobalDescriptor{tape.constant(z), {}}, store).psi.value();
    const Tensor& w1 = store.at("cfa.gate.fc1.weight");
    const Tensor& w2 = store.at("cfa.gate.fc2.weight");
    std::vector<double> hidden(kGateHidden);
    for (std::size_t m = 0; m < kGateHidden; ++m) {
      double s = store.at("cfa.gate.fc1.bias")[m];
      for (std::size_t i = 0; i < kAggregateChannels; ++i) s += z[i] * w1[i * kGateHidden + m];
      hidden[m] = std::max(0.0, s);
    }
    for (std::size_t n = 0; n < kNumLevels; ++n) {
      double s = store.at("cfa.gate.fc2.bias")[n];
      for (std::size_t m = 0; m < kGateHidden; ++m) s += hidden[m] * w2[m * kNumLevels + n];
      CHECK(std::abs(psi[n] - s) < 1e-12);
    }
  }

  TEST_CASE("variant B weights are the level means") {
    Tape tape;
    FeaturePyramid p;
    const double fill[kNumLevels] = {0.5, -1.0, 2.0, 0.25, 3.0};
    for (std::size_t n = 0; n < kNumLevels; ++n) {
      const std::size_t s = 32 / kLevelStrides[n];
      p.levels[n] = FeatureMap{static_cast<int>(n), kLevelStrides[n], tape.constant(Tensor({kLevelChannels[n], s, s}, fill[n]))};
    }
    ParamStore store;
    const CfaResult r = run_cfa(p, store, CfaVariant::kNonLearnable);
    REQUIRE(r.psi.has_value());
    for (std::size_t n = 0; n < kNumLevels; ++n) CHECK(std::abs(r.psi->value()[n] - fill[n]) < 1e-12);
    // Reweighted constants: fill^2 everywhere in level n's channel block.
    const Tensor& f = r.aggregated.value();
    std::size_t offset = 0;
    for (std::size_t n = 0; n < kNumLevels; ++n) {
      CHECK(std::abs(f.at(offset, 3, 5) - fill[n] * fill[n]) < 1e-12);
      offset += kLevelChannels[n];
    }
  }

  TEST_CASE("variant C has an independent gate per level") {
    Rng rng(9);
    ParamStore store;
    init_cfa(store, CfaVariant::kIndependent, rng);
    for (std::size_t n = 0; n < kNumLevels; ++n) {
      const std::string prefix = "cfa.level" + std::to_string(n) + ".gate";
      CHECK(store.at(prefix + ".fc1.weight").shape() ==
            Shape{kLevelChannels[n], independent_gate_hidden(kLevelChannels[n])});
      CHECK(store.at(prefix + ".fc2.weight").shape() == Shape{independent_gate_hidden(kLevelChannels[n]), 1});
    }
    Tape tape;
    const CfaResult r = run_cfa(random_pyramid(tape, 32, 30), store, CfaVariant::kIndependent);
    REQUIRE(r.psi.has_value());
    CHECK(r.psi->shape() == Shape{kNumLevels});
  }

  TEST_CASE("cfa rejects a wrong channel layout") {
    Tape tape;
    FeaturePyramid p = random_pyramid(tape, 32, 40);
    p.levels[2].tensor = tape.constant(Tensor({128, 4, 4}));
    ParamStore store;
    CHECK_THROWS_AS(run_cfa(p, store, CfaVariant::kNoReweighting), DimensionError);
  }

  TEST_CASE("cfd level configuration") {
    CHECK(parse_level_list("0,1,2,3,4") == std::vector<int>{0, 1, 2, 3, 4});
    CHECK(parse_level_list("2, 4") == std::vector<int>{2, 4});
    CHECK_THROWS_AS(parse_level_list("1,x"), ConfigError);
    auto validate = [](std::vector<int> levels) { CfdConfig{std::move(levels)}.validate(); };
    CHECK_THROWS_AS(validate({}), ConfigError);
    CHECK_THROWS_AS(validate({2, 1}), ConfigError);
    CHECK_THROWS_AS(validate({0, 5}), ConfigError);
    CHECK_THROWS_AS(validate({1, 1}), ConfigError);
    CHECK_NOTHROW(validate({1, 3}));
  }

  TEST_CASE("cfd outputs match the backbone layout") {
    Rng rng(11);
    ParamStore store;
    CfdConfig cfg;
    init_cfd(store, cfg, rng);
    Tape tape;
    const Var f = tape.constant(random_tensor({kAggregateChannels, 8, 8}, 12));
    const LevelMap levels = distribute(f, store, cfg, ForwardOptions::train());
    REQUIRE(levels.size() == kNumLevels);
    for (std::size_t n = 0; n < kNumLevels; ++n) {
      const FeatureMap& fm = levels.at(static_cast<int>(n));
      CHECK(fm.stride == kLevelStrides[n]);
      CHECK(fm.tensor.shape() == Shape{kLevelChannels[n], 8 / kCfdRates[n], 8 / kCfdRates[n]});
    }
    CHECK_THROWS_AS(distribute(tape.constant(Tensor({64, 8, 8})), store, cfg, ForwardOptions::train()),
                    DimensionError);
  }

  TEST_CASE("decoder upsampling merges follow the active levels") {
    struct Expect {
      std::vector<int> levels;
      std::size_t upsamples;
    };
    for (const Expect& e : {Expect{{0}, 0}, Expect{{0, 1}, 0}, Expect{{0, 1, 2, 3, 4}, 3}, Expect{{2, 4}, 1}}) {
      CAPTURE(e.levels.size());
      CfpnModel model(config_for(32, CfaVariant::kCollaborative, CfdConfig{e.levels}), 13);
      Tape tape;
      const auto out = model.forward(tape, random_tensor({3, 32, 32}, 14, 0, 1), ForwardOptions::train());
      CHECK(tape.count_since(OpKind::kUpsample, out.decoder_first_node) -
                (tape.count_since(OpKind::kUpsample, out.decoder_end_node)) ==
            e.upsamples);
      CHECK(out.decoder_inputs.size() == e.levels.size());
      CHECK(out.local_feature.shape()[0] == kLevelChannels[static_cast<std::size_t>(e.levels.front())]);
      CHECK(out.local_map.shape() == Shape{1, 32, 32});
    }
  }

  TEST_CASE("without CFD the decoder consumes the backbone levels") {
    CfpnModel model(config_for(32, CfaVariant::kNoReweighting, std::nullopt), 15);
    CHECK(model.config().describe() == "A/none");
    for (const auto& name : model.params().names()) CHECK(param_group(name) != "cfd");
    Tape tape;
    const auto out = model.forward(tape, random_tensor({3, 32, 32}, 16, 0, 1), ForwardOptions::train());
    for (std::size_t n = 0; n < kNumLevels; ++n) {
      CHECK(out.decoder_inputs.at(static_cast<int>(n)).tensor.id() == out.backbone.levels[n].tensor.id());
    }
    CHECK_FALSE(out.cfa.psi.has_value());
  }

  TEST_CASE("the global pathway does not reach the CFD, decoder or local head") {
    CfpnModel model(config_for(32), 17);
    Tape tape;
    const auto out = model.forward(tape, random_tensor({3, 32, 32}, 18, 0, 1), ForwardOptions::frozen_train());
    tape.backward(balanced_bce(out.global_map, random_mask({1, 32, 32}, 19)));
    const GradTable g = tape.param_grads(model.params());
    CHECK(all_zero(g, "cfd"));
    CHECK(all_zero(g, "decoder"));
    CHECK(all_zero(g, "head.local"));
    CHECK_FALSE(all_zero(g, "backbone"));
    CHECK_FALSE(all_zero(g, "cfa"));
    CHECK_FALSE(all_zero(g, "head.global"));
  }

  TEST_CASE("the joint loss reaches every parameter group") {
    for (CfaVariant v : {CfaVariant::kCollaborative, CfaVariant::kIndependent}) {
      // At 32x32 the deepest level is 1x1 and per-image BN zeroes it, so use 64x64.
      CfpnModel model(config_for(64, v), 20);
      Tape tape;
      const auto out = model.forward(tape, random_tensor({3, 64, 64}, 21, 0, 1), ForwardOptions::frozen_train());
      tape.backward(joint_loss(out.global_map, out.local_map, random_mask({1, 64, 64}, 22)).total);
      const GradTable g = tape.param_grads(model.params());
      for (const char* group : {"backbone", "cfa", "cfd", "decoder", "head.global", "head.local"}) {
        CAPTURE(group);
        CHECK_FALSE(all_zero(g, group));
      }
      CHECK(any_nonzero_per_tensor(g, "cfa"));
    }
  }

  TEST_CASE("zeroed readout heads predict 0.5 everywhere") {
    CfpnModel model(config_for(32), 23);
    model.params().at("head.local.conv.weight").fill(0.0);
    model.params().at("head.local.conv.bias").fill(0.0);
    model.params().at("head.global.conv2.weight").fill(0.0);
    model.params().at("head.global.conv2.bias").fill(0.0);
    const SaliencyMaps m = model.predict(random_tensor({3, 32, 32}, 24, 0, 1));
    CHECK(m.local == Tensor({1, 32, 32}, 0.5));
    CHECK(m.global == Tensor({1, 32, 32}, 0.5));
  }

  TEST_CASE("initialisation is seeded") {
    CHECK(init_model_params(config_for(32), 5) == init_model_params(config_for(32), 5));
    CHECK_FALSE(init_model_params(config_for(32), 5) == init_model_params(config_for(32), 6));
  }

  TEST_CASE("adopting parameters validates them against the config") {
    ParamStore d = init_model_params(config_for(32), 1);
    CHECK_NOTHROW(CfpnModel(config_for(32), d));
    CHECK_THROWS_AS(CfpnModel(config_for(32, CfaVariant::kNoReweighting), d), ConfigError);
    CHECK_THROWS_AS(CfpnModel(config_for(32, CfaVariant::kIndependent), d), ConfigError);
  }

  TEST_CASE("eval-mode prediction is deterministic and leaves buffers alone") {
    CfpnModel model(config_for(32), 25);
    const ParamStore before = model.params();
    const Tensor image = random_tensor({3, 32, 32}, 26, 0, 1);
    const SaliencyMaps a = model.predict(image), b = model.predict(image);
    CHECK(a.local == b.local);
    CHECK(a.global == b.global);
    CHECK(model.params() == before);
  }
}
