#pragma once

#include "cfpn/params.hpp"
#include "cfpn/tensor.hpp"

namespace cfpn {

/// Image [3,H,W] in [0,1] with its binary mask [1,H,W].
struct SaliencySample {
  Tensor image;
  Tensor mask;

  void validate() const;
};

/// Mirrors image and mask left-right.
SaliencySample hflip(const SaliencySample& sample);
/// Rotates image and mask counter-clockwise by quarter_turns * 90 degrees.
SaliencySample rotate90(const SaliencySample& sample, int quarter_turns);

/// With p = 0.5 flips horizontally; with p = 0.5 rotates by a uniformly drawn
/// 90, 180 or 270 degrees. Only pixel permutations, so masks stay binary.
SaliencySample augment(const SaliencySample& sample, Rng& rng);

}  // namespace cfpn
