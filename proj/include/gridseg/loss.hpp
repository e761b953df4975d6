#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gridseg/shape_prior.hpp"
#include "gridseg/tensor.hpp"
#include "gridseg/volume.hpp"

namespace gridseg {

struct LossWeights {
  double gamma_T = 1.0;
  double gamma_C = 0.5;
  double gamma_c = 0.01;
  double gamma_w = 1e-4;

  void validate() const;
};

LossWeights default_weights();

/// Per-pixel contour flags of a label slice. A pixel is on the contour of
/// its own class when a 4-neighbour has a different label; the image border
/// counts as different.
struct ContourMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> mask;
  /// Class of each contour pixel (meaningful where mask is set).
  std::vector<std::uint8_t> cls;

  std::size_t count() const;
};

ContourMap extract_contours(LabelSliceView slice);

struct LossBreakdown {
  Tensor l_T;
  Tensor l_C;
  Tensor l_c;
  Tensor l_w;
  Tensor total;
};

/// One-hot [N, 4, H, W] target from N stacked H x W label slices.
Tensor one_hot(std::span<const std::uint8_t> labels, std::size_t n, std::size_t h, std::size_t w);

/// [N, H, W] 0/1 weights of the contour pixels of N stacked label slices.
Tensor contour_weights(std::span<const std::uint8_t> labels, std::size_t n, std::size_t h, std::size_t w);

/// The four-term objective.
///   l_T: cross-entropy averaged over every pixel;
///   l_C: cross-entropy averaged over ground-truth contour pixels;
///   l_c: squared pixel distance between predicted and true CoM, averaged
///        over slices whose true CoM is valid (0 with a warning if none);
///   l_w: sum of squares of `weight_params`.
/// `pred_com` is [N, 2] as (x, y), or undefined to drop the CoM term.
LossBreakdown total_loss(const Tensor& logits, const Tensor& target, const Tensor& contour_mask,
                         const Tensor& pred_com, std::span<const CoM> true_com,
                         std::span<const Tensor> weight_params, const LossWeights& weights);

}  // namespace gridseg
