#include "cfpn/backbone.hpp"

#include <string>

#include "cfpn/error.hpp"

namespace cfpn {
namespace {

std::string block_prefix(std::size_t b) { return "backbone.block" + std::to_string(b + 1); }

}  // namespace

void BackboneConfig::validate() const {
  if (stem_channels == 0) throw ConfigError("backbone: stem_channels must be positive");
  for (auto c : block_channels) {
    if (c == 0) throw ConfigError("backbone: block channels must be positive");
  }
  check_input_size(input_height, input_width);
}

void check_input_size(std::size_t height, std::size_t width) {
  if (height == 0 || width == 0 || height % kInputMultiple != 0 || width % kInputMultiple != 0) {
    throw InputSizeError("input size " + std::to_string(height) + "x" + std::to_string(width) +
                         " is not a multiple of " + std::to_string(kInputMultiple) +
                         " (the backbone downsamples by up to 32)");
  }
}

void init_backbone(ParamStore& store, const BackboneConfig& config, Rng& rng) {
  config.validate();
  add_conv_bn_params(store, "backbone.stem.conv1", 3, config.stem_channels, 3, rng);
  add_conv_bn_params(store, "backbone.stem.conv2", config.stem_channels, config.stem_channels, 3, rng);
  std::size_t in = config.stem_channels;
  for (std::size_t b = 0; b < 4; ++b) {
    const std::size_t out = config.block_channels[b];
    add_conv_bn_params(store, block_prefix(b) + ".conv1", in, out, 3, rng);
    add_conv_bn_params(store, block_prefix(b) + ".conv2", out, out, 3, rng);
    in = out;
  }
  std::array<std::size_t, kNumLevels> raw{config.stem_channels, config.block_channels[0],
                                          config.block_channels[1], config.block_channels[2],
                                          config.block_channels[3]};
  for (std::size_t n = 0; n < kNumLevels; ++n) {
    add_conv_params(store, "backbone.reduce" + std::to_string(n), raw[n], kLevelChannels[n], 1, true, rng);
  }
}

std::vector<FeaturePyramid> extract_features(Tape& tape, std::span<const Tensor> images, ParamStore& store,
                                             const ForwardOptions& options) {
  if (images.empty()) throw DimensionError("extract_features: empty batch");
  Batch x;
  for (const Tensor& image : images) {
    if (image.rank() != 3 || image.dim(0) != 3) {
      throw DimensionError("extract_features: expected image [3,H,W], got " + to_string(image.shape()));
    }
    check_input_size(image.dim(1), image.dim(2));
    if (image.shape() != images.front().shape()) {
      throw DimensionError("extract_features: batch mixes image shapes " + to_string(images.front().shape()) +
                           " and " + to_string(image.shape()));
    }
    x.push_back(tape.constant(image));
  }
  const std::size_t h = images.front().dim(1), w = images.front().dim(2);

  // stem: stride 2 conv, stride 1 conv, 2x2 mean pool -> stride 4
  x = conv_bn_relu(x, store, "backbone.stem.conv1", 2, options);
  x = conv_bn_relu(x, store, "backbone.stem.conv2", 1, options);
  for (Var& v : x) v = avg_pool2d(v, 2);

  std::array<Batch, kNumLevels> raw;
  raw[0] = x;
  for (std::size_t b = 0; b < 4; ++b) {
    x = conv_bn_relu(x, store, block_prefix(b) + ".conv1", b == 0 ? 1 : 2, options);
    x = conv_bn_relu(x, store, block_prefix(b) + ".conv2", 1, options);
    raw[b + 1] = x;
  }

  std::vector<FeaturePyramid> pyramids(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    pyramids[i].image_height = h;
    pyramids[i].image_width = w;
    for (std::size_t n = 0; n < kNumLevels; ++n) {
      Var reduced = apply_conv(raw[n][i], store, "backbone.reduce" + std::to_string(n));
      pyramids[i].levels[n] = FeatureMap{static_cast<int>(n), h / reduced.value().dim(1), reduced};
    }
  }
  return pyramids;
}

FeaturePyramid extract_features(Tape& tape, const Tensor& image, ParamStore& store,
                                const ForwardOptions& options) {
  return extract_features(tape, std::span<const Tensor>(&image, 1), store, options).front();
}

}  // namespace cfpn
