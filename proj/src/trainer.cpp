#include "cfpn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cfpn/error.hpp"

namespace cfpn {

void TrainConfig::validate() const {
  adam.validate();
  if (batch_size == 0) throw ConfigError("train: batch_size must be at least 1");
}

BatchGradient batch_gradient(CfpnModel& model, std::span<const SaliencySample> batch, BetaMode mode,
                             const ForwardOptions& options) {
  BatchGradient out;
  if (batch.empty()) throw ConfigError("batch_gradient: empty batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  std::vector<Tensor> images;
  for (const auto& sample : batch) images.push_back(sample.image);
  Tape tape;
  const auto fwd = model.forward_batch(tape, images, options);
  std::vector<Var> totals;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const JointLoss loss = joint_loss(fwd[i].global_map, fwd[i].local_map, batch[i].mask, mode);
    out.losses.joint += loss.total.value()[0] * inv;
    out.losses.global += loss.global.value()[0] * inv;
    out.losses.local += loss.local.value()[0] * inv;
    totals.push_back(loss.total);
  }
  if (!std::isfinite(out.losses.joint)) return out;
  Var objective = totals.front();
  for (std::size_t i = 1; i < totals.size(); ++i) objective = add(objective, totals[i]);
  tape.backward(scale(objective, inv));
  tape.accumulate_param_grads(model.params(), out.grads, 1.0);
  return out;
}

TrainResult train(CfpnModel& model, std::span<const SaliencySample> dataset, const TrainConfig& config,
                  const EpochCallback& on_epoch, const StepCallback& on_step) {
  config.validate();
  if (dataset.empty()) throw ConfigError("train: dataset is empty");
  for (const auto& s : dataset) s.validate();

  Rng rng(config.seed);
  AdamState state;
  TrainResult result;
  const std::size_t batches_per_epoch = (dataset.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = config.steps > 0 ? config.steps : config.epochs * batches_per_epoch;

  std::vector<std::size_t> order(dataset.size());
  std::size_t step = 0;
  while (step < total_steps) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < batches_per_epoch && step < total_steps; ++b) {
      std::vector<SaliencySample> batch;
      const std::size_t end = std::min(dataset.size(), (b + 1) * config.batch_size);
      for (std::size_t i = b * config.batch_size; i < end; ++i) {
        const SaliencySample& s = dataset[order[i]];
        batch.push_back(config.augment ? augment(s, rng) : s);
      }
      BatchGradient bg = batch_gradient(model, batch, config.beta_mode);
      ++step;
      bg.losses.step = step;
      if (!std::isfinite(bg.losses.joint)) {
        std::ostringstream os;
        os << "non-finite joint loss at step " << step << " (global " << bg.losses.global << ", local "
           << bg.losses.local << ")";
        throw NumericError(os.str());
      }
      adam_step(model.params(), bg.grads, state, config.adam);
      result.trace.push_back(bg.losses);
      if (on_step) on_step(bg.losses);
    }
    ++result.epochs_completed;
    if (on_epoch) on_epoch(result.epochs_completed, model);
  }
  return result;
}

}  // namespace cfpn
