#include "ratlesnet/adam.h"

#include <cmath>
#include <string>

namespace ratlesnet {

AdamState::AdamState(const AdamConfig& cfg, std::span<Tensor<float>* const> params)
    : config(cfg) {
  for (const Tensor<float>* p : params) {
    m.emplace_back(p->numel(), 0.0f);
    v.emplace_back(p->numel(), 0.0f);
  }
}

void adam_step(std::span<Tensor<float>* const> params, AdamState& state) {
  if (params.size() != state.m.size() || params.size() != state.v.size()) {
    throw StateError("adam_step: " + std::to_string(params.size()) + " parameters, state holds " +
                     std::to_string(state.m.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->numel() != state.m[i].size() || params[i]->numel() != state.v[i].size()) {
      throw StateError("adam_step: parameter " + std::to_string(i) + " does not match its moments");
    }
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<float>& p = *params[i];
    auto g = p.grad();  // allocates zeros when no gradient was recorded
    auto data = p.data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double gk = g[k];
      m[k] = static_cast<float>(c.beta1 * m[k] + (1.0 - c.beta1) * gk);
      v[k] = static_cast<float>(c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk);
      const double m_hat = static_cast<double>(m[k]) / correction1;
      const double v_hat = static_cast<double>(v[k]) / correction2;
      data[k] -= static_cast<float>(c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon));
    }
  }
}

}  // namespace ratlesnet
