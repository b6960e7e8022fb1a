#include "cfpn/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cfpn/error.hpp"

namespace cfpn {

BetaMode parse_beta_mode(std::string_view text) {
  if (text == "ratio") return BetaMode::kRatio;
  if (text == "hed") return BetaMode::kHed;
  throw ConfigError("unknown beta mode '" + std::string(text) + "' (expected ratio or hed)");
}

const char* beta_mode_name(BetaMode mode) { return mode == BetaMode::kRatio ? "ratio" : "hed"; }

void require_binary_mask(const Tensor& mask) {
  for (std::size_t i = 0; i < mask.numel(); ++i) {
    if (mask[i] != 0.0 && mask[i] != 1.0) {
      throw DimensionError("mask value " + std::to_string(mask[i]) + " at index " + std::to_string(i) +
                           " is not binary");
    }
  }
}

BalanceWeights balance_weights(const Tensor& mask, BetaMode mode) {
  BalanceWeights w;
  for (double v : mask.values()) (v == 1.0 ? w.positives : w.negatives) += 1;
  if (w.negatives == 0) {
    w.beta = 1.0;
  } else if (w.positives == 0) {
    w.beta = 0.0;
  } else if (mode == BetaMode::kRatio) {
    w.beta = std::clamp(static_cast<double>(w.positives) / static_cast<double>(w.negatives), 0.0, 1.0);
  } else {
    w.beta = static_cast<double>(w.negatives) / static_cast<double>(mask.numel());
  }
  return w;
}

double balanced_bce_value(const Tensor& prediction, const Tensor& mask, BetaMode mode) {
  require_same_shape(prediction.shape(), mask.shape(), "balanced_bce");
  require_binary_mask(mask);
  const BalanceWeights w = balance_weights(mask, mode);
  double pos = 0.0;
  double neg = 0.0;
  for (std::size_t j = 0; j < mask.numel(); ++j) {
    const double s = std::clamp(prediction[j], kProbClamp, 1.0 - kProbClamp);
    if (mask[j] == 1.0) {
      pos += std::log(s);
    } else {
      neg += std::log(1.0 - s);
    }
  }
  return -w.beta * pos - (1.0 - w.beta) * neg;
}

Var balanced_bce(const Var& prediction, const Tensor& mask, BetaMode mode) {
  const double value = balanced_bce_value(prediction.value(), mask, mode);
  const double beta = balance_weights(mask, mode).beta;
  return prediction.tape().record(
      OpKind::kLoss, Tensor::scalar(value), {prediction}, [prediction, mask, beta](Tape& t, const Tensor& dy) {
        const Tensor& s = prediction.value();
        Tensor& ds = t.grad_buffer(prediction);
        for (std::size_t j = 0; j < s.numel(); ++j) {
          const double p = s[j];
          // clamped region has zero slope
          if (p < kProbClamp || p > 1.0 - kProbClamp) continue;
          ds[j] += dy[0] * (mask[j] == 1.0 ? -beta / p : (1.0 - beta) / (1.0 - p));
        }
      });
}

JointLoss joint_loss(const Var& global_map, const Var& local_map, const Tensor& mask, BetaMode mode) {
  JointLoss l;
  l.global = balanced_bce(global_map, mask, mode);
  l.local = balanced_bce(local_map, mask, mode);
  l.total = add(l.global, l.local);
  return l;
}

}  // namespace cfpn
