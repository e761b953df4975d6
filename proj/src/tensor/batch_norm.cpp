#include <cmath>

#include "gridseg/ops.hpp"

namespace gridseg {

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormStats& running,
                  Mode mode) {
  if (!input.defined() || input.rank() != 4) throw ShapeError("batch_norm: input must be NCHW");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  for (const Tensor* t : {&gamma, &beta}) {
    if (!t->defined() || t->rank() != 1 || t->dim(0) != c) {
      throw ShapeError("batch_norm: affine parameters must be [" + std::to_string(c) + "]");
    }
  }
  if (running.mean.size() != c || running.var.size() != c) {
    throw ShapeError("batch_norm: running statistics sized for " + std::to_string(running.mean.size()) +
                     " channels, input has " + std::to_string(c));
  }
  const std::size_t m = n * hw;
  const bool batch_moments = mode != Mode::eval;
  if (batch_moments && m < 2) throw ShapeError("batch_norm: batch statistics need N*H*W >= 2");

  const auto x = input.data();
  const auto g = gamma.data();
  const auto b = beta.data();
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(c);

  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean = 0.0, var = 0.0;
    if (batch_moments) {
      for (std::size_t s = 0; s < n; ++s) {
        const double* p = x.data() + (s * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) mean += p[i];
      }
      mean /= static_cast<double>(m);
      for (std::size_t s = 0; s < n; ++s) {
        const double* p = x.data() + (s * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) var += (p[i] - mean) * (p[i] - mean);
      }
      var /= static_cast<double>(m);
      const double unbiased = var * static_cast<double>(m) / static_cast<double>(m - 1);
      if (mode == Mode::train) {
        running.mean[ch] = kBatchNormMomentum * running.mean[ch] + (1.0 - kBatchNormMomentum) * mean;
        running.var[ch] = kBatchNormMomentum * running.var[ch] + (1.0 - kBatchNormMomentum) * unbiased;
      } else if (running.pooled == 0) {
        running.mean[ch] = mean;
        running.var[ch] = unbiased;
      } else {
        // Pairwise merge of (count, mean, sum of squared deviations).
        const double na = static_cast<double>(running.pooled), nb = static_cast<double>(m);
        const double delta = mean - running.mean[ch];
        const double m2 = running.var[ch] * (na - 1.0) + var * nb + delta * delta * na * nb / (na + nb);
        running.mean[ch] += delta * nb / (na + nb);
        running.var[ch] = m2 / (na + nb - 1.0);
      }
    } else {
      mean = running.mean[ch];
      var = running.var[ch];
    }
    const double is = 1.0 / std::sqrt(var + kBatchNormEps);
    inv_std[ch] = is;
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t off = (s * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double xh = (x[off + i] - mean) * is;
        xhat[off + i] = xh;
        out[off + i] = g[ch] * xh + b[ch];
      }
    }
  }

  if (mode == Mode::calibrate) running.pooled += m;

  return detail::make_result(
      input.shape(), std::move(out), {input, gamma, beta},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::TensorNode& self) {
        auto* in = detail::grad_parent(self, 0);
        auto* gm = detail::grad_parent(self, 1);
        auto* bt = detail::grad_parent(self, 2);
        const auto& gval = self.parents[1]->data;
        const auto& dy = self.grad;
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t s = 0; s < n; ++s) {
            const std::size_t off = (s * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              sum_dy += dy[off + i];
              sum_dy_xhat += dy[off + i] * xhat[off + i];
            }
          }
          if (gm != nullptr) gm->grad[ch] += sum_dy_xhat;
          if (bt != nullptr) bt->grad[ch] += sum_dy;
          if (in == nullptr) continue;
          const double scale = gval[ch] * inv_std[ch];
          if (batch_moments) {
            const double inv_m = 1.0 / static_cast<double>(m);
            for (std::size_t s = 0; s < n; ++s) {
              const std::size_t off = (s * c + ch) * hw;
              for (std::size_t i = 0; i < hw; ++i) {
                in->grad[off + i] +=
                    scale * (dy[off + i] - inv_m * sum_dy - xhat[off + i] * inv_m * sum_dy_xhat);
              }
            }
          } else {
            for (std::size_t s = 0; s < n; ++s) {
              const std::size_t off = (s * c + ch) * hw;
              for (std::size_t i = 0; i < hw; ++i) in->grad[off + i] += scale * dy[off + i];
            }
          }
        }
      });
}

}  // namespace gridseg
