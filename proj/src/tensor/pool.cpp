#include "gridseg/ops.hpp"

namespace gridseg {

namespace {

void require_poolable(const Tensor& input, const char* op) {
  if (!input.defined() || input.rank() != 4) throw ShapeError(std::string(op) + ": input must be NCHW");
  if (input.dim(2) % 2 != 0 || input.dim(3) % 2 != 0) {
    throw ShapeError(std::string(op) + ": spatial extents must be even, got " + shape_string(input.shape()));
  }
}

}  // namespace

Tensor maxpool2d(const Tensor& input) {
  require_poolable(input, "maxpool2d");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<double> out(planes * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  const auto x = input.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const std::size_t base = p * h * w + 2 * y * w + 2 * xx;
        const std::size_t window[4] = {base, base + 1, base + w, base + w + 1};
        std::size_t best = window[0];
        for (int i = 1; i < 4; ++i) {
          // Strict comparison keeps the first index on ties.
          if (x[window[i]] > x[best]) best = window[i];
        }
        const std::size_t o = p * oh * ow + y * ow + xx;
        out[o] = x[best];
        argmax[o] = best;
      }
    }
  }
  return detail::make_result({input.dim(0), input.dim(1), oh, ow}, std::move(out), {input},
                             [argmax = std::move(argmax)](detail::TensorNode& self) {
                               auto& g = self.parents[0]->grad;
                               for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += self.grad[i];
                             });
}

Tensor avgpool2d(const Tensor& input) {
  require_poolable(input, "avgpool2d");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<double> out(planes * oh * ow);
  const auto x = input.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const std::size_t base = p * h * w + 2 * y * w + 2 * xx;
        out[p * oh * ow + y * ow + xx] = 0.25 * (x[base] + x[base + 1] + x[base + w] + x[base + w + 1]);
      }
    }
  }
  return detail::make_result({input.dim(0), input.dim(1), oh, ow}, std::move(out), {input},
                             [=](detail::TensorNode& self) {
                               auto& g = self.parents[0]->grad;
                               for (std::size_t p = 0; p < planes; ++p) {
                                 for (std::size_t y = 0; y < oh; ++y) {
                                   for (std::size_t xx = 0; xx < ow; ++xx) {
                                     const double v = 0.25 * self.grad[p * oh * ow + y * ow + xx];
                                     const std::size_t base = p * h * w + 2 * y * w + 2 * xx;
                                     g[base] += v;
                                     g[base + 1] += v;
                                     g[base + w] += v;
                                     g[base + w + 1] += v;
                                   }
                                 }
                               }
                             });
}

}  // namespace gridseg
