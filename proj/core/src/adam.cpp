#include "msdc/adam.hpp"

#include <cmath>

namespace msdc {

AdamState AdamState::for_params(const ParamSet<float>& params) {
  AdamState s;
  for (const auto& p : params.params()) {
    s.m.push_back(Tensor<float>::zeros(p.value().shape()));
    s.v.push_back(Tensor<float>::zeros(p.value().shape()));
  }
  return s;
}

bool AdamState::operator==(const AdamState& o) const {
  if (t != o.t || lr != o.lr || beta1 != o.beta1 || beta2 != o.beta2 || eps != o.eps) return false;
  if (m.size() != o.m.size() || v.size() != o.v.size()) return false;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m[i].identical(o.m[i]) || !v[i].identical(o.v[i])) return false;
  }
  return true;
}

std::size_t adam_step(ParamSet<float>& params, AdamState& state) {
  auto& ps = params.params();
  if (state.m.size() != ps.size() || state.v.size() != ps.size()) {
    throw std::invalid_argument("optimizer state tracks " + std::to_string(state.m.size()) + " tensors, model has " +
                                std::to_string(ps.size()));
  }
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (state.m[i].shape() != ps[i].value().shape() || state.v[i].shape() != ps[i].value().shape()) {
      throw ShapeError("optimizer moments do not match '" + ps[i].name + "'");
    }
    if (!ps[i].grad().all_finite()) throw NonFiniteGradient(ps[i].name);
  }

  const std::int64_t t = state.t + 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Tensor<float>& w = ps[i].mutable_value();
    Tensor<float>& g = ps[i].mutable_grad();
    Tensor<float>& m = state.m[i];
    Tensor<float>& v = state.v[i];
    for (std::int64_t k = 0; k < w.size(); ++k) {
      const double gk = g[k];
      const double mk = state.beta1 * m[k] + (1.0 - state.beta1) * gk;
      const double vk = state.beta2 * v[k] + (1.0 - state.beta2) * gk * gk;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double update = state.lr * (mk / c1) / (std::sqrt(vk / c2) + state.eps);
      w[k] = static_cast<float>(w[k] - update);
    }
    g.fill(0.0f);
  }
  state.t = t;
  return ps.size();
}

}  // namespace msdc
