#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridseg/adam.hpp"
#include "gridseg/ops.hpp"
#include "gridseg/rng.hpp"
#include "gridseg/shape_prior.hpp"
#include "gridseg/tensor.hpp"
#include "gridseg/volume.hpp"

namespace gridseg {

struct GridNetConfig {
  std::size_t base_channels = 28;
  std::size_t width_factor = 2;
  /// Row widths stop growing at base_channels * max_width_multiplier.
  std::size_t max_width_multiplier = 8;
  std::size_t input_size = 256;
  double dropout_p = 0.2;
  std::size_t class_count = 4;
  std::size_t fc1_units = 256;
  std::size_t fc2_units = 64;

  static GridNetConfig full_scale() { return {}; }
  /// 64x64 input, 8 base channels.
  static GridNetConfig desk();

  static constexpr std::size_t kRows = 5;
  std::size_t row_width(std::size_t row) const;
  void validate() const;
  bool operator==(const GridNetConfig&) const = default;
};

struct ConvLayer {
  Tensor weight;
  Tensor bias;
};

struct NormLayer {
  Tensor gamma;
  Tensor beta;
  BatchNormStats stats;
};

/// conv 3x3 -> batch norm -> ReLU.
struct ConvUnit {
  ConvLayer conv;
  NormLayer norm;
};

struct EncoderCell {
  ConvUnit first;
  ConvUnit second;
};

struct LateralCell {
  ConvUnit unit;
};

struct DecoderCell {
  ConvLayer up;  // 2x2 stride-2 transposed convolution
  ConvUnit first;
  ConvUnit second;
};

struct DenseLayer {
  Tensor weight;
  Tensor bias;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct SlicePrediction {
  Tensor logits;  // [4, S, S]
  double com_x = 0.0;
  double com_y = 0.0;
};

struct BatchPrediction {
  Tensor logits;  // [N, 4, S, S]
  Tensor com;     // [N, 2] as (x, y) pixels
};

/// Three columns by five rows. Column 1 (CONV-1..5) encodes with max pooling
/// between rows, column 2 (CONV-6..9) holds one lateral convolution per row
/// 1-4, column 3 (UNCONV-1..4) upsamples from row 5 and fuses the lateral
/// features of each row. The CoM head (AVG-1, FC-1..3) reads CONV-5, and
/// MERGE-1 appends the registered prior to UNCONV-4 ahead of CONV-10.
class GridNet {
 public:
  GridNet(const GridNetConfig& config, RngStream rng);

  const GridNetConfig& config() const { return config_; }

  /// images [N,1,S,S], priors [N,3,S,S]. Dropout masks draw from `rng`.
  BatchPrediction forward(const Tensor& images, const Tensor& priors, Mode mode, RngStream& rng);

  /// CoM head only (the prior does not reach it).
  Tensor predict_com(const Tensor& images, Mode mode, RngStream& rng);

  /// AVG-1, FC-1 (ReLU), FC-2 (ReLU), FC-3 over CONV-5 features; [N,2] as
  /// (x, y) pixels.
  Tensor regression_head(const Tensor& conv5_features);

  /// Declaration order, the order used by checkpoints and Adam.
  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
  /// Convolution, transposed convolution and dense weights (no biases, no
  /// batch-norm affine terms).
  std::vector<Tensor> weight_parameters() const;
  std::vector<BatchNormStats*> norm_stats();
  std::vector<const BatchNormStats*> norm_stats() const;

  std::size_t param_count() const;
  static constexpr std::size_t kMergeChannels = 7;

  void zero_grad();

  /// Dropout stream used by the single-slice forward.
  RngStream& dropout_stream() { return dropout_rng_; }

 private:
  struct Trunk {
    Tensor conv5;
    std::array<Tensor, 4> lateral;
  };
  Trunk encode(const Tensor& images, Mode mode, RngStream& rng);
  Tensor unit_forward(ConvUnit& unit, const Tensor& x, Mode mode);

  GridNetConfig config_;
  std::array<EncoderCell, 5> encoder_;
  std::array<LateralCell, 4> lateral_;
  std::array<DecoderCell, 4> decoder_;  // index 0 = UNCONV-1 (row 4)
  DenseLayer fc1_, fc2_, fc3_;
  ConvLayer conv10_;
  RngStream dropout_rng_;
};

GridNet build_model(const GridNetConfig& config, RngStream rng);

std::size_t count_parameters(std::span<const Tensor> tensors);
std::size_t param_count(const GridNet& model);

/// Single-slice forward: slice [1,1,S,S], prior_slice [3,S,S].
SlicePrediction forward(GridNet& model, const Tensor& slice, const Tensor& prior_slice, Mode mode);

/// Per-slice argmax labels of [N,4,S,S] logits.
std::vector<std::uint8_t> argmax_labels(const Tensor& logits);

/// Eval-mode segmentation of a preprocessed volume already sized to the
/// model input. Each slice is run twice: the CoM head first, then the full
/// network with the prior registered at the predicted CoM.
LabelVolume predict_volume(GridNet& model, const Volume& volume, const ShapePrior& prior,
                           std::vector<CoM>* predicted_com = nullptr);

// ---------------------------------------------------------------------------
// Checkpoints
//
//   "GNCK" | version u32 | config block | parameter count u32 |
//   per parameter: rank u32, extents u32..., f64 values |
//   norm count u32 | per norm layer: channels u32, running mean, running var |
//   has_training u8 | [epoch u64, adam step u64, lr, beta1, beta2, eps f64,
//                      first moments, second moments in parameter order]
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingState {
  std::uint64_t epoch = 0;
  AdamState adam;
};

struct Checkpoint {
  GridNet model;
  std::optional<TrainingState> training;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode_checkpoint(const GridNet& model, const TrainingState* training);
Checkpoint decode_checkpoint(std::vector<std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const GridNet& model, const TrainingState* training);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gridseg
