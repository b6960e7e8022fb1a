#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cfpn/loss.hpp"
#include "cfpn/model.hpp"
#include "cfpn/optimizer.hpp"
#include "cfpn/sample.hpp"

namespace cfpn {

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 2;
  /// Full passes over the data; ignored when steps > 0.
  std::size_t epochs = 0;
  /// Exact number of optimizer steps, cycling epochs as needed.
  std::size_t steps = 0;
  std::uint64_t seed = 0;
  bool augment = true;
  BetaMode beta_mode = BetaMode::kRatio;

  void validate() const;
};

/// Batch-mean losses of one optimizer step (steps count from 1).
struct StepRecord {
  std::size_t step = 0;
  double joint = 0.0;
  double global = 0.0;
  double local = 0.0;
};

struct TrainResult {
  std::vector<StepRecord> trace;
  std::size_t epochs_completed = 0;
};

using EpochCallback = std::function<void(std::size_t epoch, const CfpnModel& model)>;
using StepCallback = std::function<void(const StepRecord& record)>;

/// Gradient of the batch-mean joint loss for one minibatch. The whole batch
/// runs on one tape, so train-mode BN normalises with batch statistics.
struct BatchGradient {
  GradTable grads;
  StepRecord losses;
};
BatchGradient batch_gradient(CfpnModel& model, std::span<const SaliencySample> batch, BetaMode mode,
                             const ForwardOptions& options = ForwardOptions::train());

/// Shuffled minibatch Adam training. Deterministic for a fixed config.seed.
/// Throws NumericError (with the step number) if a loss turns non-finite.
TrainResult train(CfpnModel& model, std::span<const SaliencySample> dataset, const TrainConfig& config,
                  const EpochCallback& on_epoch = {}, const StepCallback& on_step = {});

}  // namespace cfpn
