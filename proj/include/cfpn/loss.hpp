#pragma once

#include <cstddef>
#include <string_view>

#include "cfpn/autodiff.hpp"

namespace cfpn {

/// How the class-balance weight beta is derived from the mask.
enum class BetaMode {
  kRatio,  // beta = |Y+| / |Y-|, clamped to [0, 1]
  kHed,    // beta = |Y-| / |Y|
};

BetaMode parse_beta_mode(std::string_view text);
const char* beta_mode_name(BetaMode mode);

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] inside the loss.
inline constexpr double kProbClamp = 1e-7;

struct BalanceWeights {
  double beta = 0.0;  // weight of the foreground term; background uses 1 - beta
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// Throws DimensionError unless mask holds only 0 and 1.
void require_binary_mask(const Tensor& mask);

/// All-foreground masks give beta = 1, all-background masks beta = 0.
BalanceWeights balance_weights(const Tensor& mask, BetaMode mode);

/// -beta * sum_{Y+} log S - (1 - beta) * sum_{Y-} log(1 - S)
double balanced_bce_value(const Tensor& prediction, const Tensor& mask, BetaMode mode = BetaMode::kRatio);

/// Differentiable form of balanced_bce_value; prediction is already a probability map.
Var balanced_bce(const Var& prediction, const Tensor& mask, BetaMode mode = BetaMode::kRatio);

struct JointLoss {
  Var total;
  Var global;
  Var local;
};

/// Unweighted sum of the global and local balanced BCE terms.
JointLoss joint_loss(const Var& global_map, const Var& local_map, const Tensor& mask,
                     BetaMode mode = BetaMode::kRatio);

}  // namespace cfpn
