#pragma once

#include <cstddef>
#include <vector>

#include "densitydist/autodiff.hpp"

namespace densitydist {

struct AdamSettings {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment estimates, one pair per parameter.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;
};

/// One bias-corrected Adam update of every parameter in place, using
/// Parameter::grad. State is allocated on first use.
void optimizer_step(ParameterSet& params, AdamState& state, const AdamSettings& settings);

}  // namespace densitydist
