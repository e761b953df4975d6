#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gridseg/rng.hpp"
#include "gridseg/tensor.hpp"

namespace gridseg::testing {

/// Tensor of N(0, 1) * scale values.
Tensor random_tensor(const Shape& shape, RngStream& rng, double scale = 1.0, bool requires_grad = false);

/// Central finite differences of `objective` w.r.t. every element of
/// `inputs`, compared to the autodiff gradient. Returns
/// ||analytic - numeric|| / max(||analytic||, ||numeric||) over the
/// concatenated gradient (0 when both vanish).
double gradient_error(const std::function<Tensor()>& objective, const std::vector<Tensor>& inputs,
                      double step = 1e-5);

/// Same check restricted to `indices` of one tensor.
double gradient_error_subset(const std::function<Tensor()>& objective, const Tensor& input,
                             const std::vector<std::size_t>& indices, double step = 1e-5);

struct OpGradientCase {
  std::string name;
  /// Builds one random instance and returns its gradient error.
  std::function<double(RngStream&)> run;
};

/// One case per differentiable tensor op (and the end-to-end loss is
/// handled separately).
std::vector<OpGradientCase> op_gradient_cases();

/// Gradient error of the full four-term loss through a tiny GridNet, over
/// `param_samples` randomly chosen parameter elements plus the logits path.
double end_to_end_gradient_error(std::uint64_t seed, std::size_t param_samples = 20);

}  // namespace gridseg::testing
