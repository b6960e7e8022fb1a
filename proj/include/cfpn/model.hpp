#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfpn/backbone.hpp"
#include "cfpn/cfa.hpp"
#include "cfpn/cfd.hpp"
#include "cfpn/decoder.hpp"

namespace cfpn {

struct ModelConfig {
  BackboneConfig backbone;
  CfaVariant cfa = CfaVariant::kCollaborative;
  /// Unset: no distribution; the decoder fuses the backbone levels (plain FPN).
  std::optional<CfdConfig> cfd = CfdConfig{};

  void validate() const;
  /// Levels consumed by the top-down decoder.
  std::vector<int> decoder_levels() const;
  /// e.g. "D/0,1,2,3,4" or "A/none".
  std::string describe() const;
};

struct ForwardOutputs {
  FeaturePyramid backbone;
  CfaResult cfa;
  LevelMap decoder_inputs;
  Var local_feature;
  Var global_map;  // S_g [1,H,W]
  Var local_map;   // S_l [1,H,W], the final prediction
  /// Tape size before the decoder ran; lets callers inspect decoder ops.
  std::size_t decoder_first_node = 0;
  std::size_t decoder_end_node = 0;
};

struct SaliencyMaps {
  Tensor local;
  Tensor global;
};

class CfpnModel {
 public:
  CfpnModel(ModelConfig config, std::uint64_t seed);
  /// Adopts existing parameters; throws ConfigError if names/shapes disagree with config.
  CfpnModel(ModelConfig config, ParamStore params);

  const ModelConfig& config() const noexcept { return config_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

  ForwardOutputs forward(Tape& tape, const Tensor& image, const ForwardOptions& options);
  /// One pass over a minibatch of equally sized images on a shared tape.
  /// Train-mode BN normalises with statistics pooled over the whole batch.
  std::vector<ForwardOutputs> forward_batch(Tape& tape, std::span<const Tensor> images,
                                            const ForwardOptions& options);

  /// Eval-mode prediction.
  SaliencyMaps predict(const Tensor& image);

 private:
  ModelConfig config_;
  ParamStore params_;
};

/// Registers every parameter of the configured network.
ParamStore init_model_params(const ModelConfig& config, std::uint64_t seed);

}  // namespace cfpn
