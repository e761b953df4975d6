#include "gridseg/ops.hpp"

namespace gridseg {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.defined() || !b.defined() || a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": operand shapes differ (" +
                     (a.defined() ? shape_string(a.shape()) : "?") + " vs " +
                     (b.defined() ? shape_string(b.shape()) : "?") + ")");
  }
}

}  // namespace

Tensor relu(const Tensor& input) {
  const auto x = input.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return detail::make_result(input.shape(), std::move(out), {input}, [](detail::TensorNode& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (p.data[i] > 0.0) p.grad[i] += self.grad[i];
    }
  });
}

Tensor dropout(const Tensor& input, double p, RngStream& rng, Mode mode) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must lie in [0, 1)");
  if (mode != Mode::train || p == 0.0) return input;
  const double keep_scale = 1.0 / (1.0 - p);
  const auto x = input.data();
  std::vector<double> mask(x.size());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
    out[i] = x[i] * mask[i];
  }
  return detail::make_result(input.shape(), std::move(out), {input},
                             [mask = std::move(mask)](detail::TensorNode& self) {
                               auto& g = self.parents[0]->grad;
                               for (std::size_t i = 0; i < mask.size(); ++i) g[i] += self.grad[i] * mask[i];
                             });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (!a.defined() || !b.defined() || a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: incompatible shapes " + (a.defined() ? shape_string(a.shape()) : "?") +
                     " and " + (b.defined() ? shape_string(b.shape()) : "?"));
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  std::vector<double> out(n * (ca + cb) * hw);
  for (std::size_t s = 0; s < n; ++s) {
    std::copy_n(a.data().data() + s * ca * hw, ca * hw, out.data() + s * (ca + cb) * hw);
    std::copy_n(b.data().data() + s * cb * hw, cb * hw, out.data() + s * (ca + cb) * hw + ca * hw);
  }
  return detail::make_result({n, ca + cb, a.dim(2), a.dim(3)}, std::move(out), {a, b},
                             [=](detail::TensorNode& self) {
                               auto* pa = detail::grad_parent(self, 0);
                               auto* pb = detail::grad_parent(self, 1);
                               for (std::size_t s = 0; s < n; ++s) {
                                 const double* g = self.grad.data() + s * (ca + cb) * hw;
                                 if (pa != nullptr) {
                                   double* d = pa->grad.data() + s * ca * hw;
                                   for (std::size_t i = 0; i < ca * hw; ++i) d[i] += g[i];
                                 }
                                 if (pb != nullptr) {
                                   double* d = pb->grad.data() + s * cb * hw;
                                   for (std::size_t i = 0; i < cb * hw; ++i) d[i] += g[ca * hw + i];
                                 }
                               }
                             });
}

Tensor flatten(const Tensor& input) {
  if (input.rank() < 1) throw ShapeError("flatten: rank-0 input");
  return input.reshape({input.dim(0), input.numel() / input.dim(0)});
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, [](detail::TensorNode& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* p = detail::grad_parent(self, k)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, [](detail::TensorNode& self) {
    if (auto* p = detail::grad_parent(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
    if (auto* p = detail::grad_parent(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, [](detail::TensorNode& self) {
    const auto& da = self.parents[0]->data;
    const auto& db = self.parents[1]->data;
    if (auto* p = detail::grad_parent(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * db[i];
    }
    if (auto* p = detail::grad_parent(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * da[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  return detail::make_result(a.shape(), std::move(out), {a}, [factor](detail::TensorNode& self) {
    auto& g = self.parents[0]->grad;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (const double v : a.data()) acc += v;
  return detail::make_result({1}, {acc}, {a}, [](detail::TensorNode& self) {
    auto& g = self.parents[0]->grad;
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor sum_squares(const Tensor& a) {
  double acc = 0.0;
  for (const double v : a.data()) acc += v * v;
  return detail::make_result({1}, {acc}, {a}, [](detail::TensorNode& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += 2.0 * p.data[i] * self.grad[0];
  });
}

}  // namespace gridseg
