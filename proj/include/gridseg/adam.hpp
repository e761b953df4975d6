#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gridseg/tensor.hpp"

namespace gridseg {

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment buffers shaped like `params`, zero-initialized.
AdamState make_adam_state(std::span<const Tensor> params, double lr = 1e-4);

/// One bias-corrected Adam update of every parameter from its accumulated
/// gradient. Moment buffers are created on the first call if missing.
void adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace gridseg
