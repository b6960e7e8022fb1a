#include "cfpn/model.hpp"

#include "cfpn/error.hpp"

namespace cfpn {

void ModelConfig::validate() const {
  backbone.validate();
  if (cfd) cfd->validate();
}

std::vector<int> ModelConfig::decoder_levels() const {
  if (cfd) return cfd->active_levels;
  return {0, 1, 2, 3, 4};
}

std::string ModelConfig::describe() const {
  std::string s(1, cfa_variant_letter(cfa));
  s += '/';
  if (!cfd) return s + "none";
  for (std::size_t i = 0; i < cfd->active_levels.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(cfd->active_levels[i]);
  }
  return s;
}

ParamStore init_model_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ParamStore store;
  init_backbone(store, config.backbone, rng);
  init_cfa(store, config.cfa, rng);
  if (config.cfd) init_cfd(store, *config.cfd, rng);
  const auto levels = config.decoder_levels();
  init_decoder(store, levels, rng);
  init_heads(store, kLevelChannels[levels.front()], rng);
  return store;
}

CfpnModel::CfpnModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), params_(init_model_params(config_, seed)) {}

CfpnModel::CfpnModel(ModelConfig config, ParamStore params) : config_(std::move(config)), params_(std::move(params)) {
  const ParamStore reference = init_model_params(config_, 0);
  auto check = [&](const std::vector<std::string>& names) {
    for (const auto& name : names) {
      if (!params_.contains(name)) throw ConfigError("parameters lack '" + name + "' required by " + config_.describe());
      if (params_.at(name).shape() != reference.at(name).shape()) {
        throw ConfigError("parameter '" + name + "' has shape " + to_string(params_.at(name).shape()) +
                          ", expected " + to_string(reference.at(name).shape()));
      }
    }
  };
  check(reference.names());
  check(reference.buffer_names());
  if (params_.names().size() != reference.names().size()) {
    throw ConfigError("parameter set has entries not used by " + config_.describe());
  }
}

std::vector<ForwardOutputs> CfpnModel::forward_batch(Tape& tape, std::span<const Tensor> images,
                                                     const ForwardOptions& options) {
  std::vector<FeaturePyramid> pyramids = extract_features(tape, images, params_, options);
  std::vector<ForwardOutputs> out(images.size());
  Batch aggregated;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].backbone = std::move(pyramids[i]);
    out[i].cfa = run_cfa(out[i].backbone, params_, config_.cfa);
    aggregated.push_back(out[i].cfa.aggregated);
  }
  const std::size_t h = images.front().dim(1), w = images.front().dim(2);
  const Batch global = predict_global(aggregated, params_, h, w, options);

  std::vector<LevelMap> decoder_inputs;
  if (config_.cfd) {
    decoder_inputs = distribute(aggregated, params_, *config_.cfd, options);
  } else {
    for (const auto& o : out) {
      LevelMap m;
      for (const auto& level : o.backbone.levels) m.emplace(level.level, level);
      decoder_inputs.push_back(std::move(m));
    }
  }
  const std::size_t decoder_first = tape.size();
  const Batch local = fuse_topdown(decoder_inputs, params_, options);
  const std::size_t decoder_end = tape.size();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].global_map = global[i];
    out[i].decoder_inputs = std::move(decoder_inputs[i]);
    out[i].local_feature = local[i];
    out[i].decoder_first_node = decoder_first;
    out[i].decoder_end_node = decoder_end;
    out[i].local_map = predict_local(local[i], params_, h, w);
  }
  return out;
}

ForwardOutputs CfpnModel::forward(Tape& tape, const Tensor& image, const ForwardOptions& options) {
  return std::move(forward_batch(tape, std::span<const Tensor>(&image, 1), options).front());
}

SaliencyMaps CfpnModel::predict(const Tensor& image) {
  Tape tape;
  auto out = forward(tape, image, ForwardOptions::eval());
  return {out.local_map.value(), out.global_map.value()};
}

}  // namespace cfpn
