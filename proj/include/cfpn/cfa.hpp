#pragma once

#include <array>
#include <optional>
#include <string_view>

#include "cfpn/backbone.hpp"

namespace cfpn {

/// Hidden width M of the collaborative gate.
inline constexpr std::size_t kGateHidden = 128;

/// Ablation settings for cross-layer aggregation.
enum class CfaVariant {
  kNoReweighting,   // (A) plain concatenation
  kNonLearnable,    // (B) mean of each level's GAP vector as its weight
  kIndependent,     // (C) per-level GAP -> FC -> ReLU -> FC
  kCollaborative,   // (D) joint gate over all levels
};

CfaVariant parse_cfa_variant(std::string_view text);
char cfa_variant_letter(CfaVariant variant);

/// Concatenated channel-wise means of all levels.
struct GlobalDescriptor {
  Var z;
  /// offsets[n] is where level n starts in z; offsets[5] == 960.
  std::array<std::size_t, kNumLevels + 1> offsets{};
};

/// One scalar per level.
struct FusionWeights {
  Var psi;
};

struct CfaResult {
  Var aggregated;
  std::optional<Var> psi;
  FeaturePyramid reweighted;
};

/// Hidden width of the per-level gate of variant (C): min(d/4, 128).
std::size_t independent_gate_hidden(std::size_t channels);

void init_cfa(ParamStore& store, CfaVariant variant, Rng& rng);

/// Throws DimensionError unless levels carry {64,128,256,256,256} channels.
void check_channel_layout(const FeaturePyramid& pyramid);

GlobalDescriptor squeeze_global(const FeaturePyramid& pyramid);
/// psi = FC2(ReLU(FC1(z))) with parameters cfa.gate.fc1 / cfa.gate.fc2.
FusionWeights gate_weights(const GlobalDescriptor& descriptor, ParamStore& store);
/// Level n scaled by psi[n].
FeaturePyramid reweight(const FeaturePyramid& pyramid, const FusionWeights& weights);
/// Levels 2-4 upsampled to the level-0 size, then all five concatenated: [960, H/4, W/4].
Var aggregate(const FeaturePyramid& pyramid);

CfaResult run_cfa(const FeaturePyramid& pyramid, ParamStore& store, CfaVariant variant);

}  // namespace cfpn
