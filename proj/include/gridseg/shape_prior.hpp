#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gridseg/tensor.hpp"
#include "gridseg/volume.hpp"

namespace gridseg {

/// Cardiac center of mass in pixel coordinates (x = column, y = row).
struct CoM {
  double x = 0.0;
  double y = 0.0;
  bool valid = false;
};

/// Centroid of the pericardium pixels (MYO and RV); invalid when the slice
/// has neither.
CoM compute_com(LabelSliceView slice);

/// Mean of the valid per-slice centroids.
CoM volume_com(const LabelVolume& volume);

/// Empirical class-probability atlas, channels (RV, MYO, LV) x 20 z-bins x
/// 100 x 100 pixels. Back is the complement and is not stored.
struct ShapePrior {
  static constexpr std::size_t kChannels = 3;
  static constexpr std::size_t kBins = 20;
  static constexpr std::size_t kSize = 100;
  static constexpr std::size_t kCenter = kSize / 2;

  /// (channel, bin, row, col) order.
  std::vector<double> probs = std::vector<double>(kChannels * kBins * kSize * kSize, 0.0);
  /// Slices averaged into each bin (bins filled from a neighbour carry its
  /// count). Empty when the prior was loaded from disk.
  std::vector<std::uint32_t> sample_counts;

  static std::size_t index(std::size_t channel, std::size_t bin, std::size_t row, std::size_t col) {
    return ((channel * kBins + bin) * kSize + row) * kSize + col;
  }
  double at(std::size_t channel, std::size_t bin, std::size_t row, std::size_t col) const {
    return probs[index(channel, bin, row, col)];
  }
};

/// Prior channel of a label, or -1 for Back.
inline int prior_channel(std::uint8_t label) { return label == kBack ? -1 : static_cast<int>(label) - 1; }

/// Bin of slice `slice_index` of `total_slices`: round(index / (total-1) * 19).
std::size_t prior_bin(std::size_t slice_index, std::size_t total_slices);

/// Aligns every slice's centroid to the patch center, crops 100x100 and
/// averages class indicators per z-bin. Empty bins copy the nearest populated
/// bin (lower bin on ties). Throws std::invalid_argument when a volume has no
/// valid centroid on any slice.
ShapePrior build_prior(std::span<const LabelVolume> training_labels);

/// The prior bin for this slice, translated so the patch center lands on
/// round(com) on an out_size x out_size canvas, zero elsewhere. An invalid
/// CoM falls back to the canvas center. Writes 3 * out_size^2 values.
void register_prior_into(const ShapePrior& prior, const CoM& com, std::size_t slice_index,
                         std::size_t total_slices, std::size_t out_size, std::span<double> out);

/// Tensor [3, out_size, out_size] form of register_prior_into.
Tensor register_prior(const ShapePrior& prior, const CoM& com, std::size_t slice_index, std::size_t total_slices,
                      std::size_t out_size);

// SPRI file: "SPRI" | 3,20,100,100 as u32 | f64 payload (class, z, row, col).
std::vector<std::uint8_t> encode_prior(const ShapePrior& prior);
ShapePrior decode_prior(std::vector<std::uint8_t> bytes);
void write_prior(const std::filesystem::path& path, const ShapePrior& prior);
ShapePrior read_prior(const std::filesystem::path& path);

}  // namespace gridseg
