// Small products would otherwise take Eigen's coefficient-based path, whose
// scalar/packet split follows the heap alignment of each buffer and so
// changes the last bits of results from run to run.
#define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD 0
#include <Eigen/Core>

#include <numeric>

#include "gridseg/ops.hpp"

namespace gridseg {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using Eigen::Index;

void require_rank4(const Tensor& t, const char* what) {
  if (!t.defined() || t.rank() != 4) {
    throw ShapeError(std::string(what) + " must be rank 4 (NCHW), got " +
                     (t.defined() ? shape_string(t.shape()) : std::string("undefined")));
  }
}

void require_bias(const Tensor& bias, std::size_t channels, const char* op) {
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != channels)) {
    throw ShapeError(std::string(op) + ": bias shape " + shape_string(bias.shape()) + " does not match " +
                     std::to_string(channels) + " output channels");
  }
}

// col[(c*9 + ky*3 + kx), y*W + x] = img[c, y+ky-1, x+kx-1] (zero outside).
void im2col3x3(const double* img, std::size_t channels, std::size_t h, std::size_t w, double* col) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    const double* plane = img + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* row = col + (c * 9 + ky * 3 + kx) * hw;
        const int dy = ky - 1;
        const int dx = kx - 1;
        for (std::size_t y = 0; y < h; ++y) {
          double* dst = row + y * w;
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(dst, dst + w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(sy) * w;
          const std::size_t x0 = dx < 0 ? 1 : 0;
          const std::size_t x1 = dx > 0 ? w - 1 : w;
          if (x0 > 0) dst[0] = 0.0;
          if (x1 < w) dst[w - 1] = 0.0;
          for (std::size_t x = x0; x < x1; ++x) dst[x] = src[x + dx];
        }
      }
    }
  }
}

void col2im3x3_add(const double* col, std::size_t channels, std::size_t h, std::size_t w, double* img) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    double* plane = img + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* row = col + (c * 9 + ky * 3 + kx) * hw;
        const int dy = ky - 1;
        const int dx = kx - 1;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          const double* src = row + y * w;
          double* dst = plane + static_cast<std::size_t>(sy) * w;
          const std::size_t x0 = dx < 0 ? 1 : 0;
          const std::size_t x1 = dx > 0 ? w - 1 : w;
          for (std::size_t x = x0; x < x1; ++x) dst[x + dx] += src[x];
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank4(input, "conv2d input");
  require_rank4(weight, "conv2d weight");
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = weight.dim(0);
  if (weight.dim(1) != cin || weight.dim(2) != 3 || weight.dim(3) != 3) {
    throw ShapeError("conv2d: weight " + shape_string(weight.shape()) + " incompatible with input " +
                     shape_string(input.shape()) + " (expected [Cout," + std::to_string(cin) + ",3,3])");
  }
  require_bias(bias, cout, "conv2d");

  const std::size_t hw = h * w;
  const std::size_t k = cin * 9;
  std::vector<double> out(n * cout * hw);
  std::vector<double> col(k * hw);
  const ConstMatMap wmat(weight.data().data(), static_cast<Index>(cout), static_cast<Index>(k));
  for (std::size_t s = 0; s < n; ++s) {
    im2col3x3(input.data().data() + s * cin * hw, cin, h, w, col.data());
    MatMap o(out.data() + s * cout * hw, static_cast<Index>(cout), static_cast<Index>(hw));
    o.noalias() = wmat * ConstMatMap(col.data(), static_cast<Index>(k), static_cast<Index>(hw));
    if (bias.defined()) {
      for (std::size_t c = 0; c < cout; ++c) o.row(static_cast<Index>(c)).array() += bias.data()[c];
    }
  }

  return detail::make_result(
      {n, cout, h, w}, std::move(out), {input, weight, bias}, [=](detail::TensorNode& self) {
        auto* in = detail::grad_parent(self, 0);
        auto* wt = detail::grad_parent(self, 1);
        auto* b = detail::grad_parent(self, 2);
        const auto& x = self.parents[0]->data;
        const ConstMatMap wm(self.parents[1]->data.data(), static_cast<Index>(cout), static_cast<Index>(k));
        std::vector<double> colbuf(k * hw);
        for (std::size_t s = 0; s < n; ++s) {
          const ConstMatMap g(self.grad.data() + s * cout * hw, static_cast<Index>(cout), static_cast<Index>(hw));
          MatMap colm(colbuf.data(), static_cast<Index>(k), static_cast<Index>(hw));
          if (wt != nullptr) {
            im2col3x3(x.data() + s * cin * hw, cin, h, w, colbuf.data());
            MatMap(wt->grad.data(), static_cast<Index>(cout), static_cast<Index>(k)).noalias() +=
                g * colm.transpose();
          }
          if (in != nullptr) {
            colm.noalias() = wm.transpose() * g;
            col2im3x3_add(colbuf.data(), cin, h, w, in->grad.data() + s * cin * hw);
          }
          if (b != nullptr) {
            for (std::size_t c = 0; c < cout; ++c) {
              const double* row = g.data() + c * hw;
              b->grad[c] += std::accumulate(row, row + hw, 0.0);
            }
          }
        }
      });
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank4(input, "conv_transpose2d input");
  require_rank4(weight, "conv_transpose2d weight");
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (weight.dim(0) != cin || weight.dim(2) != 2 || weight.dim(3) != 2) {
    throw ShapeError("conv_transpose2d: weight " + shape_string(weight.shape()) + " incompatible with input " +
                     shape_string(input.shape()) + " (expected [" + std::to_string(cin) + ",Cout,2,2])");
  }
  const std::size_t cout = weight.dim(1);
  require_bias(bias, cout, "conv_transpose2d");

  const std::size_t hw = h * w;
  const std::size_t oh = 2 * h, ow = 2 * w;
  const std::size_t k = cout * 4;
  // Weight viewed as [Cin, Cout*4]; rows of cols = W^T x are (co, a, b).
  std::vector<double> out(n * cout * oh * ow);
  RowMat cols(static_cast<Index>(k), static_cast<Index>(hw));
  const ConstMatMap wmat(weight.data().data(), static_cast<Index>(cin), static_cast<Index>(k));
  for (std::size_t s = 0; s < n; ++s) {
    cols.noalias() =
        wmat.transpose() * ConstMatMap(input.data().data() + s * cin * hw, static_cast<Index>(cin),
                                       static_cast<Index>(hw));
    double* o = out.data() + s * cout * oh * ow;
    for (std::size_t co = 0; co < cout; ++co) {
      const double bv = bias.defined() ? bias.data()[co] : 0.0;
      for (std::size_t ab = 0; ab < 4; ++ab) {
        const double* row = cols.data() + (co * 4 + ab) * hw;
        const std::size_t a = ab / 2, bb = ab % 2;
        for (std::size_t y = 0; y < h; ++y) {
          double* dst = o + co * oh * ow + (2 * y + a) * ow + bb;
          for (std::size_t x = 0; x < w; ++x) dst[2 * x] = row[y * w + x] + bv;
        }
      }
    }
  }

  return detail::make_result(
      {n, cout, oh, ow}, std::move(out), {input, weight, bias}, [=](detail::TensorNode& self) {
        auto* in = detail::grad_parent(self, 0);
        auto* wt = detail::grad_parent(self, 1);
        auto* b = detail::grad_parent(self, 2);
        const auto& x = self.parents[0]->data;
        const ConstMatMap wm(self.parents[1]->data.data(), static_cast<Index>(cin), static_cast<Index>(k));
        RowMat gcols(static_cast<Index>(k), static_cast<Index>(hw));
        for (std::size_t s = 0; s < n; ++s) {
          const double* g = self.grad.data() + s * cout * oh * ow;
          for (std::size_t co = 0; co < cout; ++co) {
            for (std::size_t ab = 0; ab < 4; ++ab) {
              double* row = gcols.data() + (co * 4 + ab) * hw;
              const std::size_t a = ab / 2, bb = ab % 2;
              for (std::size_t y = 0; y < h; ++y) {
                const double* src = g + co * oh * ow + (2 * y + a) * ow + bb;
                for (std::size_t xx = 0; xx < w; ++xx) row[y * w + xx] = src[2 * xx];
              }
            }
          }
          if (in != nullptr) {
            MatMap(in->grad.data() + s * cin * hw, static_cast<Index>(cin), static_cast<Index>(hw)).noalias() +=
                wm * gcols;
          }
          if (wt != nullptr) {
            const ConstMatMap xm(x.data() + s * cin * hw, static_cast<Index>(cin), static_cast<Index>(hw));
            MatMap(wt->grad.data(), static_cast<Index>(cin), static_cast<Index>(k)).noalias() +=
                xm * gcols.transpose();
          }
          if (b != nullptr) {
            for (std::size_t co = 0; co < cout; ++co) {
              double acc = 0.0;
              for (std::size_t i = 0; i < 4 * hw; ++i) acc += gcols.data()[co * 4 * hw + i];
              b->grad[co] += acc;
            }
          }
        }
      });
}

Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (!input.defined() || input.rank() != 2) throw ShapeError("dense: input must be [N,D]");
  if (!weight.defined() || weight.rank() != 2 || weight.dim(0) != input.dim(1)) {
    throw ShapeError("dense: weight " + (weight.defined() ? shape_string(weight.shape()) : std::string("?")) +
                     " incompatible with input " + shape_string(input.shape()));
  }
  const std::size_t n = input.dim(0), d = input.dim(1), kk = weight.dim(1);
  require_bias(bias, kk, "dense");
  std::vector<double> out(n * kk);
  MatMap o(out.data(), static_cast<Index>(n), static_cast<Index>(kk));
  o.noalias() = ConstMatMap(input.data().data(), static_cast<Index>(n), static_cast<Index>(d)) *
                ConstMatMap(weight.data().data(), static_cast<Index>(d), static_cast<Index>(kk));
  if (bias.defined()) {
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < kk; ++c) out[r * kk + c] += bias.data()[c];
  }
  return detail::make_result({n, kk}, std::move(out), {input, weight, bias}, [=](detail::TensorNode& self) {
    auto* in = detail::grad_parent(self, 0);
    auto* wt = detail::grad_parent(self, 1);
    auto* b = detail::grad_parent(self, 2);
    const ConstMatMap g(self.grad.data(), static_cast<Index>(n), static_cast<Index>(kk));
    if (in != nullptr) {
      MatMap(in->grad.data(), static_cast<Index>(n), static_cast<Index>(d)).noalias() +=
          g * ConstMatMap(self.parents[1]->data.data(), static_cast<Index>(d), static_cast<Index>(kk)).transpose();
    }
    if (wt != nullptr) {
      MatMap(wt->grad.data(), static_cast<Index>(d), static_cast<Index>(kk)).noalias() +=
          ConstMatMap(self.parents[0]->data.data(), static_cast<Index>(n), static_cast<Index>(d)).transpose() * g;
    }
    if (b != nullptr) {
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < kk; ++c) b->grad[c] += self.grad[r * kk + c];
    }
  });
}

}  // namespace gridseg
