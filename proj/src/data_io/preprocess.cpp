#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gridseg/data_io.hpp"

namespace gridseg {

namespace {

constexpr double kStdFloor = 1e-12;

// Positive offsets crop, negative offsets pad.
long fit_offset(std::size_t native, std::size_t out) {
  return native >= out ? static_cast<long>((native - out) / 2) : -static_cast<long>((out - native) / 2);
}

template <typename T>
FittedSlice<T> fit_impl(std::span<const T> slice, std::size_t rows, std::size_t cols, std::size_t out_size) {
  if (slice.size() != rows * cols) throw std::invalid_argument("fit_to_input: slice size mismatch");
  FittedSlice<T> f;
  f.size = out_size;
  f.row_offset = fit_offset(rows, out_size);
  f.col_offset = fit_offset(cols, out_size);
  f.values.assign(out_size * out_size, T{});
  for (std::size_t r = 0; r < out_size; ++r) {
    const long sr = static_cast<long>(r) + f.row_offset;
    if (sr < 0 || sr >= static_cast<long>(rows)) continue;
    for (std::size_t c = 0; c < out_size; ++c) {
      const long sc = static_cast<long>(c) + f.col_offset;
      if (sc < 0 || sc >= static_cast<long>(cols)) continue;
      f.values[r * out_size + c] = slice[static_cast<std::size_t>(sr) * cols + static_cast<std::size_t>(sc)];
    }
  }
  return f;
}

}  // namespace

double percentile(std::span<const double> values, double pct) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty set");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = std::clamp(pct, 0.0, 100.0) / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Volume preprocess(const Volume& volume, const PreprocessOptions& options) {
  if (volume.values.empty()) throw std::invalid_argument("preprocess: empty volume");
  Volume out = volume;
  const double lo = percentile(volume.values, options.low_percentile);
  const double hi = percentile(volume.values, options.high_percentile);
  for (auto& v : out.values) v = std::clamp(v, lo, hi);

  double mean = 0.0;
  for (const double v : out.values) mean += v;
  mean /= static_cast<double>(out.values.size());
  double var = 0.0;
  for (const double v : out.values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(out.values.size()));
  if (sd < kStdFloor) {
    std::fill(out.values.begin(), out.values.end(), 0.0);
    return out;
  }
  for (auto& v : out.values) v = (v - mean) / sd;
  return out;
}

FittedSlice<double> fit_to_input(std::span<const double> slice, std::size_t rows, std::size_t cols,
                                 std::size_t out_size) {
  return fit_impl(slice, rows, cols, out_size);
}

FittedSlice<std::uint8_t> fit_to_input(std::span<const std::uint8_t> slice, std::size_t rows, std::size_t cols,
                                       std::size_t out_size) {
  return fit_impl(slice, rows, cols, out_size);
}

std::vector<std::uint8_t> restore_from_input(const FittedSlice<std::uint8_t>& fitted, std::size_t rows,
                                             std::size_t cols) {
  std::vector<std::uint8_t> native(rows * cols, kBack);
  for (std::size_t r = 0; r < fitted.size; ++r) {
    const long nr = static_cast<long>(r) + fitted.row_offset;
    if (nr < 0 || nr >= static_cast<long>(rows)) continue;
    for (std::size_t c = 0; c < fitted.size; ++c) {
      const long nc = static_cast<long>(c) + fitted.col_offset;
      if (nc < 0 || nc >= static_cast<long>(cols)) continue;
      native[static_cast<std::size_t>(nr) * cols + static_cast<std::size_t>(nc)] = fitted.values[r * fitted.size + c];
    }
  }
  return native;
}

Volume fit_volume(const Volume& volume, std::size_t out_size) {
  Volume out;
  static_cast<VoxelGrid<double>&>(out) =
      VoxelGrid<double>::filled(volume.slices, out_size, out_size, volume.spacing, 0.0);
  out.phase = volume.phase;
  for (std::size_t z = 0; z < volume.slices; ++z) {
    const auto f = fit_to_input(volume.slice(z), volume.rows, volume.cols, out_size);
    std::copy(f.values.begin(), f.values.end(), out.slice(z).begin());
  }
  return out;
}

LabelVolume fit_volume(const LabelVolume& labels, std::size_t out_size) {
  auto out = LabelVolume::filled(labels.slices, out_size, out_size, labels.spacing, kBack);
  for (std::size_t z = 0; z < labels.slices; ++z) {
    const auto f = fit_to_input(labels.slice(z), labels.rows, labels.cols, out_size);
    std::copy(f.values.begin(), f.values.end(), out.slice(z).begin());
  }
  return out;
}

}  // namespace gridseg
