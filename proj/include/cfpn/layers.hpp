#pragma once

#include <string>
#include <vector>

#include "cfpn/autodiff.hpp"
#include "cfpn/params.hpp"

namespace cfpn {

/// One Var per image of a minibatch, all on the same tape.
using Batch = std::vector<Var>;

struct ForwardOptions {
  BnMode mode = BnMode::kTrain;
  /// Fold train-mode batch statistics into the running buffers.
  bool update_running_stats = true;

  static ForwardOptions train() { return {BnMode::kTrain, true}; }
  static ForwardOptions eval() { return {BnMode::kEval, false}; }
  /// Train-mode normalisation without touching the buffers (gradient checks).
  static ForwardOptions frozen_train() { return {BnMode::kTrain, false}; }
};

/// Applies prefix.weight (and prefix.bias when registered) as a convolution.
/// Padding is k/2, so stride 1 preserves the spatial size.
Var apply_conv(const Var& x, ParamStore& store, const std::string& prefix, std::size_t stride = 1);

Batch apply_conv(const Batch& xs, ParamStore& store, const std::string& prefix, std::size_t stride = 1);

/// Batch norm over prefix.{gamma,beta,running_mean,running_var}. In train mode
/// the statistics pool every image of the batch (the maps must agree in
/// channels and width); eval mode normalises each image with the running stats.
Batch apply_bn(const Batch& xs, ParamStore& store, const std::string& prefix, const ForwardOptions& options);
Var apply_bn(const Var& x, ParamStore& store, const std::string& prefix, const ForwardOptions& options);

/// prefix.conv -> prefix.bn -> ReLU.
Batch conv_bn_relu(const Batch& xs, ParamStore& store, const std::string& prefix, std::size_t stride,
                   const ForwardOptions& options);
Var conv_bn_relu(const Var& x, ParamStore& store, const std::string& prefix, std::size_t stride,
                 const ForwardOptions& options);

/// Registers the parameters used by conv_bn_relu (bias-free conv).
void add_conv_bn_params(ParamStore& store, const std::string& prefix, std::size_t in_channels,
                        std::size_t out_channels, std::size_t kernel, Rng& rng);

}  // namespace cfpn
