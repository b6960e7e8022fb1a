#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "cfpn/params.hpp"

namespace cfpn {

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Added to the gradient as weight_decay * param before the moment updates.
  double weight_decay = 5e-4;

  void validate() const;
};

struct AdamState {
  std::uint64_t step = 0;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
};

/// One bias-corrected Adam update of every learnable parameter. Parameters
/// missing from grads are treated as having zero gradient.
void adam_step(ParamStore& params, const GradTable& grads, AdamState& state, const AdamConfig& config);

}  // namespace cfpn
