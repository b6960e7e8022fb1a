#pragma once

#include <array>
#include <map>
#include <string_view>
#include <vector>

#include "cfpn/backbone.hpp"

namespace cfpn {

/// Average-pooling rate applied to the aggregated map for each level.
inline constexpr std::array<std::size_t, kNumLevels> kCfdRates{1, 1, 2, 4, 8};

using LevelMap = std::map<int, FeatureMap>;

struct CfdConfig {
  /// Non-empty, strictly ascending subset of {0..4}.
  std::vector<int> active_levels{0, 1, 2, 3, 4};

  void validate() const;
};

/// Parses "0,1,2" into an ascending level list. Throws ConfigError.
std::vector<int> parse_level_list(std::string_view csv);

void init_cfd(ParamStore& store, const CfdConfig& config, Rng& rng);

/// For each active level: avg_pool(F, rate) -> 3x3 conv -> BN -> ReLU,
/// producing that level's channel count at the backbone stride.
/// F is [960, H/4, W/4].
LevelMap distribute(const Var& aggregated, ParamStore& store, const CfdConfig& config,
                    const ForwardOptions& options);
/// Batched form: one LevelMap per aggregated map.
std::vector<LevelMap> distribute(const Batch& aggregated, ParamStore& store, const CfdConfig& config,
                                 const ForwardOptions& options);

}  // namespace cfpn
