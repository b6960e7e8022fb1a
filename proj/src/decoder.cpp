#include "cfpn/decoder.hpp"

#include <string>

#include "cfpn/error.hpp"

namespace cfpn {
namespace {

std::string stage_prefix(int level) { return "decoder.level" + std::to_string(level); }

}  // namespace

void init_decoder(ParamStore& store, const std::vector<int>& levels, Rng& rng) {
  CfdConfig{levels}.validate();
  // registered deepest first, matching evaluation order
  std::size_t incoming = kLevelChannels[levels.back()];
  for (auto it = levels.rbegin(); it != levels.rend(); ++it) {
    const std::size_t d = kLevelChannels[*it];
    add_conv_params(store, stage_prefix(*it) + ".lateral", incoming, d, 1, true, rng);
    add_conv_bn_params(store, stage_prefix(*it) + ".smooth", d, d, 3, rng);
    incoming = d;
  }
}

void init_heads(ParamStore& store, std::size_t local_channels, Rng& rng) {
  add_conv_bn_params(store, "head.global.conv1", kAggregateChannels, kGlobalHeadChannels, 3, rng);
  add_conv_params(store, "head.global.conv2", kGlobalHeadChannels, 1, 1, true, rng);
  add_conv_params(store, "head.local.conv", local_channels, 1, 1, true, rng);
}

Batch fuse_topdown(const std::vector<LevelMap>& levels, ParamStore& store, const ForwardOptions& options) {
  if (levels.empty()) throw DimensionError("fuse_topdown: empty batch");
  for (const LevelMap& m : levels) {
    if (m.empty()) throw DimensionError("fuse_topdown: no levels to fuse");
    if (m.size() != levels.front().size()) throw DimensionError("fuse_topdown: batch mixes level sets");
  }
  const auto level_batch = [&](int level) {
    Batch b;
    for (const LevelMap& m : levels) b.push_back(m.at(level).tensor);
    return b;
  };
  auto it = levels.front().rbegin();
  Batch running = conv_bn_relu(apply_conv(level_batch(it->first), store, stage_prefix(it->first) + ".lateral"),
                               store, stage_prefix(it->first) + ".smooth", 1, options);
  for (++it; it != levels.front().rend(); ++it) {
    const Batch skip = level_batch(it->first);
    Batch merged;
    for (std::size_t i = 0; i < skip.size(); ++i) {
      const Shape& target = skip[i].value().shape();
      Var lateral = apply_conv(running[i], store, stage_prefix(it->first) + ".lateral");
      if (lateral.value().dim(1) != target[1] || lateral.value().dim(2) != target[2]) {
        lateral = bilinear_upsample(lateral, target[1], target[2]);
      }
      merged.push_back(add(skip[i], lateral));
    }
    running = conv_bn_relu(merged, store, stage_prefix(it->first) + ".smooth", 1, options);
  }
  return running;
}

Var fuse_topdown(const LevelMap& levels, ParamStore& store, const ForwardOptions& options) {
  return fuse_topdown(std::vector<LevelMap>{levels}, store, options).front();
}

Batch predict_global(const Batch& aggregated, ParamStore& store, std::size_t out_h, std::size_t out_w,
                     const ForwardOptions& options) {
  Batch x = conv_bn_relu(aggregated, store, "head.global.conv1", 1, options);
  for (Var& v : x) v = sigmoid(bilinear_upsample(apply_conv(v, store, "head.global.conv2"), out_h, out_w));
  return x;
}

Var predict_global(const Var& aggregated, ParamStore& store, std::size_t out_h, std::size_t out_w,
                   const ForwardOptions& options) {
  return predict_global(Batch{aggregated}, store, out_h, out_w, options).front();
}

Var predict_local(const Var& local, ParamStore& store, std::size_t out_h, std::size_t out_w) {
  Var x = apply_conv(local, store, "head.local.conv");
  return sigmoid(bilinear_upsample(x, out_h, out_w));
}

}  // namespace cfpn
