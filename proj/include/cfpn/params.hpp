#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "cfpn/tensor.hpp"

namespace cfpn {

using Rng = std::mt19937_64;

/// Gradient per parameter name.
using GradTable = std::map<std::string, Tensor>;

/// Named learnable parameters plus non-learnable buffers (BN running stats).
/// Element references stay valid for the store's lifetime.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor init);
  Tensor& add_buffer(const std::string& name, Tensor init);

  bool contains(const std::string& name) const { return values_.count(name) != 0; }
  bool is_buffer(const std::string& name) const;
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  /// Learnable parameters, in registration order.
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<std::string>& buffer_names() const noexcept { return buffers_; }

  std::size_t parameter_count() const;

  bool operator==(const ParamStore& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<std::string> buffers_;
  std::unordered_map<std::string, Tensor> values_;
};

/// Uniform(-b, b) with b = sqrt(6 / fan_in).
Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng);

/// Registers weight [out,in,k,k] (Kaiming) and optionally bias [out] (zeros).
void add_conv_params(ParamStore& store, const std::string& prefix, std::size_t in_channels,
                     std::size_t out_channels, std::size_t kernel, bool with_bias, Rng& rng);
/// Registers weight [in,out] (Kaiming) and bias [out] (zeros).
void add_fc_params(ParamStore& store, const std::string& prefix, std::size_t in_features,
                   std::size_t out_features, Rng& rng);
/// Registers gamma (ones), beta (zeros) and running_mean/running_var buffers.
void add_bn_params(ParamStore& store, const std::string& prefix, std::size_t channels);

/// Top-level group of a hierarchical name ("backbone.stem.conv1.weight" -> "backbone").
/// Readout heads are split into "head.global" / "head.local".
std::string param_group(const std::string& name);

}  // namespace cfpn
