#include "densitydist/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace densitydist {

void optimizer_step(ParameterSet& params, AdamState& state, const AdamSettings& s) {
  auto& items = params.items();
  if (state.m.empty()) {
    for (const auto& p : items) {
      state.m.emplace_back(p.value.shape());
      state.v.emplace_back(p.value.shape());
    }
  }
  if (state.m.size() != items.size()) throw std::invalid_argument("optimizer_step: state does not match parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  for (std::size_t k = 0; k < items.size(); ++k) {
    auto& p = items[k];
    if (!p.grad.same_shape(p.value)) {
      throw std::invalid_argument("optimizer_step: gradient shape mismatch for '" + p.name + "'");
    }
    auto m = state.m[k].values();
    auto v = state.v[k].values();
    auto w = p.value.values();
    auto g = p.grad.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
      v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
      w[i] -= s.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + s.eps);
    }
  }
}

}  // namespace densitydist
