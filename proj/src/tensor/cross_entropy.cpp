#include <algorithm>
#include <cmath>

#include "gridseg/ops.hpp"

namespace gridseg {

namespace {

// Stable log-softmax of one pixel's class column (stride hw apart).
void log_softmax_column(const double* z, std::size_t classes, std::size_t stride, double* out) {
  double mx = z[0];
  for (std::size_t l = 1; l < classes; ++l) mx = std::max(mx, z[l * stride]);
  double s = 0.0;
  for (std::size_t l = 0; l < classes; ++l) s += std::exp(z[l * stride] - mx);
  const double lse = mx + std::log(s);
  for (std::size_t l = 0; l < classes; ++l) out[l] = z[l * stride] - lse;
}

}  // namespace

Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& target, const Tensor& pixel_weights) {
  if (!logits.defined() || logits.rank() != 4) throw ShapeError("softmax_cross_entropy: logits must be NCHW");
  if (!target.defined() || target.shape() != logits.shape()) {
    throw ShapeError("softmax_cross_entropy: target shape must equal logits shape " +
                     shape_string(logits.shape()));
  }
  const std::size_t n = logits.dim(0), classes = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  if (!pixel_weights.defined() || pixel_weights.shape() != Shape{n, h, w}) {
    throw ShapeError("softmax_cross_entropy: pixel weights must be [N,H,W]");
  }
  const std::size_t hw = h * w;
  const auto z = logits.data();
  const auto t = target.data();
  const auto pw = pixel_weights.data();
  std::vector<double> logp(classes);
  double loss = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t v = 0; v < hw; ++v) {
      const double wv = pw[s * hw + v];
      if (wv == 0.0) continue;
      const std::size_t base = s * classes * hw + v;
      log_softmax_column(z.data() + base, classes, hw, logp.data());
      double px = 0.0;
      for (std::size_t l = 0; l < classes; ++l) px -= t[base + l * hw] * logp[l];
      loss += wv * px;
    }
  }

  return detail::make_result({1}, {loss}, {logits, target, pixel_weights}, [=](detail::TensorNode& self) {
    auto* lg = detail::grad_parent(self, 0);
    if (lg == nullptr) return;
    const auto& zz = self.parents[0]->data;
    const auto& tt = self.parents[1]->data;
    const auto& ww = self.parents[2]->data;
    const double g = self.grad[0];
    std::vector<double> lp(classes);
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t v = 0; v < hw; ++v) {
        const double wv = ww[s * hw + v];
        if (wv == 0.0) continue;
        const std::size_t base = s * classes * hw + v;
        log_softmax_column(zz.data() + base, classes, hw, lp.data());
        double tsum = 0.0;
        for (std::size_t l = 0; l < classes; ++l) tsum += tt[base + l * hw];
        for (std::size_t l = 0; l < classes; ++l) {
          lg->grad[base + l * hw] += g * wv * (std::exp(lp[l]) * tsum - tt[base + l * hw]);
        }
      }
    }
  });
}

std::vector<double> softmax_channels(const Tensor& logits) {
  if (!logits.defined() || logits.rank() != 4) throw ShapeError("softmax_channels: logits must be NCHW");
  const std::size_t n = logits.dim(0), classes = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  std::vector<double> out(logits.numel());
  std::vector<double> lp(classes);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t v = 0; v < hw; ++v) {
      const std::size_t base = s * classes * hw + v;
      log_softmax_column(logits.data().data() + base, classes, hw, lp.data());
      for (std::size_t l = 0; l < classes; ++l) out[base + l * hw] = std::exp(lp[l]);
    }
  }
  return out;
}

}  // namespace gridseg
