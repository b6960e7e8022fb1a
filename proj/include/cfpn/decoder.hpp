#pragma once

#include <vector>

#include "cfpn/cfd.hpp"

namespace cfpn {

/// Hidden width of the global readout's 3x3 conv.
inline constexpr std::size_t kGlobalHeadChannels = 128;

/// Registers lateral/smooth parameters for an FPN chain over the given
/// ascending levels. The deepest level's lateral maps d_n -> d_n; every other
/// lateral maps the deeper stage's channels to d_n.
void init_decoder(ParamStore& store, const std::vector<int>& levels, Rng& rng);

/// Registers head.global (960 -> 128 -> 1) and head.local (local_channels -> 1).
void init_heads(ParamStore& store, std::size_t local_channels, Rng& rng);

/// Top-down fusion from the deepest level present: lateral 1x1 conv on the
/// running map, upsample to the next shallower level, add, 3x3 conv+BN+ReLU.
/// Returns the shallowest stage's output.
Var fuse_topdown(const LevelMap& levels, ParamStore& store, const ForwardOptions& options);
/// Batched form; every map must hold the same levels.
Batch fuse_topdown(const std::vector<LevelMap>& levels, ParamStore& store, const ForwardOptions& options);

/// Conv3x3(128) -> BN -> ReLU -> Conv1x1(1) -> upsample(H,W) -> sigmoid.
Var predict_global(const Var& aggregated, ParamStore& store, std::size_t out_h, std::size_t out_w,
                   const ForwardOptions& options);
Batch predict_global(const Batch& aggregated, ParamStore& store, std::size_t out_h, std::size_t out_w,
                     const ForwardOptions& options);

/// Conv1x1(1) -> upsample(H,W) -> sigmoid.
Var predict_local(const Var& local, ParamStore& store, std::size_t out_h, std::size_t out_w);

}  // namespace cfpn
