#include "cfpn/layers.hpp"

#include "cfpn/error.hpp"

namespace cfpn {

Var apply_conv(const Var& x, ParamStore& store, const std::string& prefix, std::size_t stride) {
  Tape& tape = x.tape();
  Var weight = tape.param(store, prefix + ".weight");
  std::optional<Var> bias;
  if (store.contains(prefix + ".bias")) bias = tape.param(store, prefix + ".bias");
  const std::size_t k = weight.value().dim(2);
  return conv2d(x, weight, bias, stride, k / 2);
}

Batch apply_conv(const Batch& xs, ParamStore& store, const std::string& prefix, std::size_t stride) {
  Batch out;
  out.reserve(xs.size());
  for (const Var& x : xs) out.push_back(apply_conv(x, store, prefix, stride));
  return out;
}

Batch apply_bn(const Batch& xs, ParamStore& store, const std::string& prefix, const ForwardOptions& options) {
  if (xs.empty()) throw DimensionError("apply_bn: empty batch");
  Tape& tape = xs.front().tape();
  Var gamma = tape.param(store, prefix + ".gamma");
  Var beta = tape.param(store, prefix + ".beta");
  BnRunningStats stats{&store.at(prefix + ".running_mean"), &store.at(prefix + ".running_var")};
  if (xs.size() == 1 || options.mode == BnMode::kEval) {
    Batch out;
    for (const Var& x : xs) out.push_back(batch_norm(x, gamma, beta, stats, options.mode, options.update_running_stats));
    return out;
  }
  // Per-channel statistics of the row-stacked batch are the batch statistics;
  // only the normalisation sees the stacked map, never a convolution.
  const Var normalised =
      batch_norm(stack_rows(xs), gamma, beta, stats, options.mode, options.update_running_stats);
  Batch out;
  std::size_t row = 0;
  for (const Var& x : xs) {
    const std::size_t h = x.value().dim(1);
    out.push_back(slice_rows(normalised, row, row + h));
    row += h;
  }
  return out;
}

Var apply_bn(const Var& x, ParamStore& store, const std::string& prefix, const ForwardOptions& options) {
  return apply_bn(Batch{x}, store, prefix, options).front();
}

Batch conv_bn_relu(const Batch& xs, ParamStore& store, const std::string& prefix, std::size_t stride,
                   const ForwardOptions& options) {
  Batch out = apply_bn(apply_conv(xs, store, prefix + ".conv", stride), store, prefix + ".bn", options);
  for (Var& v : out) v = relu(v);
  return out;
}

Var conv_bn_relu(const Var& x, ParamStore& store, const std::string& prefix, std::size_t stride,
                 const ForwardOptions& options) {
  return conv_bn_relu(Batch{x}, store, prefix, stride, options).front();
}

void add_conv_bn_params(ParamStore& store, const std::string& prefix, std::size_t in_channels,
                        std::size_t out_channels, std::size_t kernel, Rng& rng) {
  add_conv_params(store, prefix + ".conv", in_channels, out_channels, kernel, false, rng);
  add_bn_params(store, prefix + ".bn", out_channels);
}

}  // namespace cfpn
