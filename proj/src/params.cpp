#include "cfpn/params.hpp"

#include <algorithm>
#include <cmath>

#include "cfpn/error.hpp"

namespace cfpn {

Tensor& ParamStore::add(const std::string& name, Tensor init) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  names_.push_back(name);
  return values_.emplace(name, std::move(init)).first->second;
}

Tensor& ParamStore::add_buffer(const std::string& name, Tensor init) {
  if (contains(name)) throw ConfigError("duplicate buffer name '" + name + "'");
  buffers_.push_back(name);
  return values_.emplace(name, std::move(init)).first->second;
}

bool ParamStore::is_buffer(const std::string& name) const {
  return std::find(buffers_.begin(), buffers_.end(), name) != buffers_.end();
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& name : names_) n += at(name).numel();
  return n;
}

bool ParamStore::operator==(const ParamStore& other) const {
  return names_ == other.names_ && buffers_ == other.buffers_ && values_ == other.values_;
}

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

void add_conv_params(ParamStore& store, const std::string& prefix, std::size_t in_channels,
                     std::size_t out_channels, std::size_t kernel, bool with_bias, Rng& rng) {
  store.add(prefix + ".weight", kaiming_uniform({out_channels, in_channels, kernel, kernel},
                                                in_channels * kernel * kernel, rng));
  if (with_bias) store.add(prefix + ".bias", Tensor({out_channels}, 0.0));
}

void add_fc_params(ParamStore& store, const std::string& prefix, std::size_t in_features,
                   std::size_t out_features, Rng& rng) {
  store.add(prefix + ".weight", kaiming_uniform({in_features, out_features}, in_features, rng));
  store.add(prefix + ".bias", Tensor({out_features}, 0.0));
}

void add_bn_params(ParamStore& store, const std::string& prefix, std::size_t channels) {
  store.add(prefix + ".gamma", Tensor({channels}, 1.0));
  store.add(prefix + ".beta", Tensor({channels}, 0.0));
  store.add_buffer(prefix + ".running_mean", Tensor({channels}, 0.0));
  store.add_buffer(prefix + ".running_var", Tensor({channels}, 1.0));
}

std::string param_group(const std::string& name) {
  auto dot = name.find('.');
  std::string top = name.substr(0, dot);
  if (top == "head" && dot != std::string::npos) {
    auto second = name.find('.', dot + 1);
    return name.substr(0, second);
  }
  return top;
}

}  // namespace cfpn
