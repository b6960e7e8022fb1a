#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "cfpn/autodiff.hpp"
#include "cfpn/layers.hpp"
#include "cfpn/params.hpp"

namespace cfpn {

inline constexpr std::size_t kNumLevels = 5;
/// Channel count d_n of each pyramid level after the 1x1 reduction.
inline constexpr std::array<std::size_t, kNumLevels> kLevelChannels{64, 128, 256, 256, 256};
inline constexpr std::array<std::size_t, kNumLevels> kLevelStrides{4, 4, 8, 16, 32};
/// Sum of kLevelChannels.
inline constexpr std::size_t kAggregateChannels = 960;
inline constexpr std::size_t kInputMultiple = 32;

struct FeatureMap {
  int level = 0;
  std::size_t stride = 0;
  Var tensor;
};

struct FeaturePyramid {
  std::array<FeatureMap, kNumLevels> levels;
  std::size_t image_height = 0;
  std::size_t image_width = 0;
};

/// Small trainable stand-in for a ResNet-style backbone.
struct BackboneConfig {
  std::size_t stem_channels = 16;
  std::array<std::size_t, 4> block_channels{32, 64, 64, 128};
  std::size_t input_height = 96;
  std::size_t input_width = 96;

  void validate() const;
};

/// Throws InputSizeError unless both extents are positive multiples of 32.
void check_input_size(std::size_t height, std::size_t width);

void init_backbone(ParamStore& store, const BackboneConfig& config, Rng& rng);

/// image [3,H,W] -> five levels with strides {4,4,8,16,32} and channels
/// {64,128,256,256,256}.
FeaturePyramid extract_features(Tape& tape, const Tensor& image, ParamStore& store,
                                const ForwardOptions& options);
/// Batched form; images must share one shape. Train-mode BN pools the batch.
std::vector<FeaturePyramid> extract_features(Tape& tape, std::span<const Tensor> images, ParamStore& store,
                                             const ForwardOptions& options);

}  // namespace cfpn
