#pragma once

#include <vector>

#include "gridseg/rng.hpp"
#include "gridseg/tensor.hpp"

namespace gridseg {

// Spatial kernels use NCHW layout throughout.

/// 3x3 convolution, stride 1, zero padding 1. weight [Cout,Cin,3,3];
/// bias [Cout] or an undefined tensor for no bias.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias);

/// 2x2 transposed convolution, stride 2. weight [Cin,Cout,2,2]; output
/// spatial extents are exactly twice the input's.
Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias);

/// 2x2 max pooling, stride 2. Ties route the gradient to the first element of
/// the window in row-major order.
Tensor maxpool2d(const Tensor& input);

/// 2x2 average pooling, stride 2.
Tensor avgpool2d(const Tensor& input);

struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> var;
  /// Values pooled so far by calibrate-mode passes; 0 means the next
  /// calibrate pass overwrites mean and var.
  std::size_t pooled = 0;

  static BatchNormStats initial(std::size_t channels) {
    return {std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
  }
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

/// Per-channel batch normalization over (N,H,W). Train mode uses batch
/// moments and folds them into `running` (running = 0.9 running + 0.1 batch,
/// unbiased variance); eval mode reads `running` only. Calibrate mode merges
/// the batch into `running` as an exact pooled mean and unbiased variance.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormStats& running,
                  Mode mode);

/// input [N,D] x weight [D,K] + bias [K].
Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor relu(const Tensor& input);

/// Inverted dropout: zeroes with probability p and scales survivors by
/// 1/(1-p) in train mode; identity otherwise.
Tensor dropout(const Tensor& input, double p, RngStream& rng, Mode mode);

/// Concatenates two [N,C,H,W] tensors along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// [N, ...] -> [N, prod(...)].
Tensor flatten(const Tensor& input);

/// -sum_v w_v sum_l T_{l,v} log softmax(logits)_{l,v} over logits [N,L,H,W],
/// target [N,L,H,W] and pixel_weights [N,H,W]. Returns a [1] tensor.
Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& target, const Tensor& pixel_weights);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sum(const Tensor& a);
Tensor sum_squares(const Tensor& a);

/// Channel-wise softmax of [N,L,H,W] logits, no graph.
std::vector<double> softmax_channels(const Tensor& logits);

}  // namespace gridseg
