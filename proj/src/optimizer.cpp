#include "cfpn/optimizer.hpp"

#include <cmath>

#include "cfpn/error.hpp"

namespace cfpn {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("adam: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam: beta1 must lie in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam: beta2 must lie in [0,1)");
  if (!(eps > 0.0)) throw ConfigError("adam: eps must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("adam: weight_decay must be non-negative");
}

void adam_step(ParamStore& params, const GradTable& grads, AdamState& state, const AdamConfig& config) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (const auto& name : params.names()) {
    Tensor& p = params.at(name);
    auto g_it = grads.find(name);
    const Tensor* g = g_it == grads.end() ? nullptr : &g_it->second;
    if (g && g->shape() != p.shape()) {
      throw DimensionError("adam_step: gradient for '" + name + "' has shape " + to_string(g->shape()) +
                           ", parameter has " + to_string(p.shape()));
    }
    auto moment = [&](std::map<std::string, Tensor>& table) -> Tensor& {
      auto it = table.find(name);
      if (it == table.end()) it = table.emplace(name, Tensor::zeros_like(p)).first;
      return it->second;
    };
    Tensor& m = moment(state.first_moment);
    Tensor& v = moment(state.second_moment);
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double grad = (g ? (*g)[i] : 0.0) + config.weight_decay * p[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad * grad;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

}  // namespace cfpn
