#include "gridseg/loss.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "gridseg/ops.hpp"

namespace gridseg {

void LossWeights::validate() const {
  for (const double g : {gamma_T, gamma_C, gamma_c, gamma_w}) {
    if (!std::isfinite(g) || g < 0.0) throw std::invalid_argument("loss weights must be finite and non-negative");
  }
  if (gamma_T <= 0.0) throw std::invalid_argument("gamma_T must be positive");
}

LossWeights default_weights() { return LossWeights{1.0, 0.5, 0.01, 1e-4}; }

std::size_t ContourMap::count() const {
  std::size_t n = 0;
  for (const auto m : mask) n += m;
  return n;
}

ContourMap extract_contours(LabelSliceView slice) {
  ContourMap out{slice.rows, slice.cols, std::vector<std::uint8_t>(slice.rows * slice.cols, 0),
                 std::vector<std::uint8_t>(slice.rows * slice.cols, kBack)};
  for (std::size_t y = 0; y < slice.rows; ++y) {
    for (std::size_t x = 0; x < slice.cols; ++x) {
      const auto l = slice.at(y, x);
      const bool edge = y == 0 || x == 0 || y + 1 == slice.rows || x + 1 == slice.cols ||
                        slice.at(y - 1, x) != l || slice.at(y + 1, x) != l || slice.at(y, x - 1) != l ||
                        slice.at(y, x + 1) != l;
      out.mask[y * slice.cols + x] = edge ? 1 : 0;
      out.cls[y * slice.cols + x] = l;
    }
  }
  return out;
}

Tensor one_hot(std::span<const std::uint8_t> labels, std::size_t n, std::size_t h, std::size_t w) {
  if (labels.size() != n * h * w) throw ShapeError("one_hot: label count does not match N*H*W");
  const std::size_t hw = h * w;
  std::vector<double> data(n * kClassCount * hw, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t v = 0; v < hw; ++v) {
      const auto l = labels[s * hw + v];
      if (l >= kClassCount) throw std::invalid_argument("one_hot: label out of range");
      data[(s * kClassCount + l) * hw + v] = 1.0;
    }
  }
  return Tensor::from_data({n, kClassCount, h, w}, std::move(data));
}

Tensor contour_weights(std::span<const std::uint8_t> labels, std::size_t n, std::size_t h, std::size_t w) {
  if (labels.size() != n * h * w) throw ShapeError("contour_weights: label count does not match N*H*W");
  std::vector<double> data(n * h * w);
  for (std::size_t s = 0; s < n; ++s) {
    const auto cm = extract_contours({labels.subspan(s * h * w, h * w), h, w});
    for (std::size_t i = 0; i < h * w; ++i) data[s * h * w + i] = cm.mask[i];
  }
  return Tensor::from_data({n, h, w}, std::move(data));
}

LossBreakdown total_loss(const Tensor& logits, const Tensor& target, const Tensor& contour_mask,
                         const Tensor& pred_com, std::span<const CoM> true_com,
                         std::span<const Tensor> weight_params, const LossWeights& weights) {
  weights.validate();
  if (!logits.defined() || logits.rank() != 4) throw ShapeError("total_loss: logits must be NCHW");
  const std::size_t n = logits.dim(0), h = logits.dim(2), w = logits.dim(3);

  LossBreakdown out;
  const Tensor ones = Tensor::full({n, h, w}, 1.0);
  out.l_T = scale(softmax_cross_entropy(logits, target, ones), 1.0 / static_cast<double>(n * h * w));

  double contour_total = 0.0;
  for (const double m : contour_mask.data()) contour_total += m;
  out.l_C = contour_total > 0.0
                ? scale(softmax_cross_entropy(logits, target, contour_mask), 1.0 / contour_total)
                : Tensor::scalar(0.0);

  out.l_c = Tensor::scalar(0.0);
  if (pred_com.defined()) {
    if (pred_com.shape() != Shape{n, 2} || true_com.size() != n) {
      throw ShapeError("total_loss: pred_com must be [N,2] with one true CoM per slice");
    }
    std::vector<double> target_xy(2 * n, 0.0), valid(2 * n, 0.0);
    std::size_t valid_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!true_com[i].valid) continue;
      target_xy[2 * i] = true_com[i].x;
      target_xy[2 * i + 1] = true_com[i].y;
      valid[2 * i] = valid[2 * i + 1] = 1.0;
      ++valid_count;
    }
    if (valid_count > 0) {
      const Tensor diff = mul(sub(pred_com, Tensor::from_data({n, 2}, std::move(target_xy))),
                              Tensor::from_data({n, 2}, std::move(valid)));
      out.l_c = scale(sum_squares(diff), 1.0 / static_cast<double>(valid_count));
    } else {
      std::clog << "warning: no valid CoM in batch, CoM loss term skipped\n";
    }
  }

  out.l_w = Tensor::scalar(0.0);
  for (const auto& p : weight_params) out.l_w = add(out.l_w, sum_squares(p));

  out.total = add(add(scale(out.l_T, weights.gamma_T), scale(out.l_C, weights.gamma_C)),
                  add(scale(out.l_c, weights.gamma_c), scale(out.l_w, weights.gamma_w)));
  return out;
}

}  // namespace gridseg
