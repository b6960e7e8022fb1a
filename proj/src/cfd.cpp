#include "cfpn/cfd.hpp"

#include <charconv>
#include <string>

#include "cfpn/error.hpp"

namespace cfpn {
namespace {

std::string cfd_prefix(int level) { return "cfd.level" + std::to_string(level); }

}  // namespace

void CfdConfig::validate() const {
  if (active_levels.empty()) throw ConfigError("cfd: active levels must be non-empty");
  for (std::size_t i = 0; i < active_levels.size(); ++i) {
    const int n = active_levels[i];
    if (n < 0 || n >= static_cast<int>(kNumLevels)) {
      throw ConfigError("cfd: level " + std::to_string(n) + " outside 0-4");
    }
    if (i > 0 && active_levels[i - 1] >= n) throw ConfigError("cfd: active levels must be strictly ascending");
  }
}

std::vector<int> parse_level_list(std::string_view csv) {
  std::vector<int> levels;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    const std::size_t comma = std::min(csv.find(',', pos), csv.size());
    std::string_view item = csv.substr(pos, comma - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    int value = 0;
    auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
    if (item.empty() || ec != std::errc() || end != item.data() + item.size()) {
      throw ConfigError("invalid level list '" + std::string(csv) + "'");
    }
    levels.push_back(value);
    pos = comma + 1;
  }
  CfdConfig{levels}.validate();
  return levels;
}

void init_cfd(ParamStore& store, const CfdConfig& config, Rng& rng) {
  config.validate();
  for (int n : config.active_levels) {
    add_conv_bn_params(store, cfd_prefix(n), kAggregateChannels, kLevelChannels[n], 3, rng);
  }
}

std::vector<LevelMap> distribute(const Batch& aggregated, ParamStore& store, const CfdConfig& config,
                                 const ForwardOptions& options) {
  config.validate();
  for (const Var& f : aggregated) {
    const Shape& s = f.value().shape();
    if (s.size() != 3 || s[0] != kAggregateChannels) {
      throw DimensionError("distribute: expected aggregated map [960,h,w], got " + to_string(s));
    }
  }
  std::vector<LevelMap> out(aggregated.size());
  for (int n : config.active_levels) {
    const std::size_t rate = kCfdRates[n];
    Batch pooled;
    for (const Var& f : aggregated) pooled.push_back(avg_pool2d(f, rate));
    const Batch level = conv_bn_relu(pooled, store, cfd_prefix(n), 1, options);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].emplace(n, FeatureMap{n, kLevelStrides[0] * rate, level[i]});
  }
  return out;
}

LevelMap distribute(const Var& aggregated, ParamStore& store, const CfdConfig& config,
                    const ForwardOptions& options) {
  return distribute(Batch{aggregated}, store, config, options).front();
}

}  // namespace cfpn
