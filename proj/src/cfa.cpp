#include "cfpn/cfa.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "cfpn/error.hpp"

namespace cfpn {
namespace {

std::string level_gate_prefix(std::size_t n) { return "cfa.level" + std::to_string(n) + ".gate"; }

Var fc(const Var& x, ParamStore& store, const std::string& prefix) {
  Tape& tape = x.tape();
  return fully_connected(x, tape.param(store, prefix + ".weight"), tape.param(store, prefix + ".bias"));
}

}  // namespace

CfaVariant parse_cfa_variant(std::string_view text) {
  if (text == "A" || text == "a") return CfaVariant::kNoReweighting;
  if (text == "B" || text == "b") return CfaVariant::kNonLearnable;
  if (text == "C" || text == "c") return CfaVariant::kIndependent;
  if (text == "D" || text == "d") return CfaVariant::kCollaborative;
  throw ConfigError("unknown CFA variant '" + std::string(text) + "' (expected A, B, C or D)");
}

char cfa_variant_letter(CfaVariant variant) {
  switch (variant) {
    case CfaVariant::kNoReweighting: return 'A';
    case CfaVariant::kNonLearnable: return 'B';
    case CfaVariant::kIndependent: return 'C';
    case CfaVariant::kCollaborative: return 'D';
  }
  return '?';
}

std::size_t independent_gate_hidden(std::size_t channels) { return std::min<std::size_t>(channels / 4, 128); }

void init_cfa(ParamStore& store, CfaVariant variant, Rng& rng) {
  if (variant == CfaVariant::kCollaborative) {
    add_fc_params(store, "cfa.gate.fc1", kAggregateChannels, kGateHidden, rng);
    add_fc_params(store, "cfa.gate.fc2", kGateHidden, kNumLevels, rng);
  } else if (variant == CfaVariant::kIndependent) {
    for (std::size_t n = 0; n < kNumLevels; ++n) {
      const std::size_t hidden = independent_gate_hidden(kLevelChannels[n]);
      add_fc_params(store, level_gate_prefix(n) + ".fc1", kLevelChannels[n], hidden, rng);
      add_fc_params(store, level_gate_prefix(n) + ".fc2", hidden, 1, rng);
    }
  }
}

void check_channel_layout(const FeaturePyramid& pyramid) {
  for (std::size_t n = 0; n < kNumLevels; ++n) {
    const Var& t = pyramid.levels[n].tensor;
    if (!t.valid() || t.value().rank() != 3 || t.value().dim(0) != kLevelChannels[n]) {
      throw DimensionError("level " + std::to_string(n) + " has shape " +
                           (t.valid() ? to_string(t.value().shape()) : std::string("<unset>")) + ", expected " +
                           std::to_string(kLevelChannels[n]) + " channels");
    }
  }
}

GlobalDescriptor squeeze_global(const FeaturePyramid& pyramid) {
  check_channel_layout(pyramid);
  GlobalDescriptor d;
  std::vector<Var> pooled;
  for (std::size_t n = 0; n < kNumLevels; ++n) {
    pooled.push_back(global_avg_pool(pyramid.levels[n].tensor));
    d.offsets[n + 1] = d.offsets[n] + kLevelChannels[n];
  }
  d.z = concat_channels(pooled);
  return d;
}

FusionWeights gate_weights(const GlobalDescriptor& descriptor, ParamStore& store) {
  if (descriptor.z.value().shape() != Shape{kAggregateChannels}) {
    throw DimensionError("gate_weights: descriptor " + to_string(descriptor.z.value().shape()) +
                         ", expected [960]");
  }
  Var hidden = relu(fc(descriptor.z, store, "cfa.gate.fc1"));
  return FusionWeights{fc(hidden, store, "cfa.gate.fc2")};
}

FeaturePyramid reweight(const FeaturePyramid& pyramid, const FusionWeights& weights) {
  if (weights.psi.value().numel() != kNumLevels) {
    throw DimensionError("reweight: expected 5 fusion weights, got " + to_string(weights.psi.value().shape()));
  }
  FeaturePyramid out = pyramid;
  for (std::size_t n = 0; n < kNumLevels; ++n) {
    out.levels[n].tensor = scale_by_scalar(pyramid.levels[n].tensor, pick(weights.psi, n));
  }
  return out;
}

Var aggregate(const FeaturePyramid& pyramid) {
  check_channel_layout(pyramid);
  const Shape& base = pyramid.levels[0].tensor.value().shape();
  std::vector<Var> parts;
  for (std::size_t n = 0; n < kNumLevels; ++n) {
    Var level = pyramid.levels[n].tensor;
    const Shape& s = level.value().shape();
    if (s[1] != base[1] || s[2] != base[2]) level = bilinear_upsample(level, base[1], base[2]);
    parts.push_back(level);
  }
  return concat_channels(parts);
}

CfaResult run_cfa(const FeaturePyramid& pyramid, ParamStore& store, CfaVariant variant) {
  check_channel_layout(pyramid);
  CfaResult result;
  switch (variant) {
    case CfaVariant::kNoReweighting:
      result.reweighted = pyramid;
      break;
    case CfaVariant::kNonLearnable: {
      std::vector<Var> w;
      for (const auto& level : pyramid.levels) w.push_back(mean(global_avg_pool(level.tensor)));
      result.psi = concat_channels(w);
      break;
    }
    case CfaVariant::kIndependent: {
      std::vector<Var> w;
      for (std::size_t n = 0; n < kNumLevels; ++n) {
        Var z = global_avg_pool(pyramid.levels[n].tensor);
        Var hidden = relu(fc(z, store, level_gate_prefix(n) + ".fc1"));
        w.push_back(fc(hidden, store, level_gate_prefix(n) + ".fc2"));
      }
      result.psi = concat_channels(w);
      break;
    }
    case CfaVariant::kCollaborative:
      result.psi = gate_weights(squeeze_global(pyramid), store).psi;
      break;
  }
  if (result.psi) result.reweighted = reweight(pyramid, FusionWeights{*result.psi});
  result.aggregated = aggregate(result.reweighted);
  return result;
}

}  // namespace cfpn
