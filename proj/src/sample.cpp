#include "cfpn/sample.hpp"

#include "cfpn/error.hpp"
#include "cfpn/loss.hpp"

namespace cfpn {
namespace {

Tensor flip_planes(const Tensor& t) {
  const std::size_t c_n = t.dim(0), h = t.dim(1), w = t.dim(2);
  Tensor out(t.shape());
  for (std::size_t c = 0; c < c_n; ++c) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) out.at(c, i, j) = t.at(c, i, w - 1 - j);
    }
  }
  return out;
}

// One counter-clockwise quarter turn: out[i][j] = in[j][w-1-i], output is [C,W,H].
Tensor rotate_planes(const Tensor& t) {
  const std::size_t c_n = t.dim(0), h = t.dim(1), w = t.dim(2);
  Tensor out({c_n, w, h});
  for (std::size_t c = 0; c < c_n; ++c) {
    for (std::size_t i = 0; i < w; ++i) {
      for (std::size_t j = 0; j < h; ++j) out.at(c, i, j) = t.at(c, j, w - 1 - i);
    }
  }
  return out;
}

}  // namespace

void SaliencySample::validate() const {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("sample image must be [3,H,W], got " + to_string(image.shape()));
  }
  if (mask.shape() != Shape{1, image.dim(1), image.dim(2)}) {
    throw DimensionError("sample mask " + to_string(mask.shape()) + " does not match image " +
                         to_string(image.shape()));
  }
  require_binary_mask(mask);
}

SaliencySample hflip(const SaliencySample& sample) {
  return {flip_planes(sample.image), flip_planes(sample.mask)};
}

SaliencySample rotate90(const SaliencySample& sample, int quarter_turns) {
  SaliencySample out = sample;
  const int turns = ((quarter_turns % 4) + 4) % 4;
  for (int k = 0; k < turns; ++k) {
    out.image = rotate_planes(out.image);
    out.mask = rotate_planes(out.mask);
  }
  return out;
}

SaliencySample augment(const SaliencySample& sample, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<int> turns(1, 3);
  const bool flip = coin(rng);
  const bool rotate = coin(rng);
  const int k = turns(rng);
  SaliencySample out = flip ? hflip(sample) : sample;
  if (rotate) out = rotate90(out, k);
  return out;
}

}  // namespace cfpn
