#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gridseg {

enum class Phase { ed, es };

std::string phase_name(Phase phase);
Phase parse_phase(const std::string& text);

/// Voxel size in millimetres, slice axis first.
struct Spacing {
  double dz = 1.0;
  double dy = 1.0;
  double dx = 1.0;
  bool operator==(const Spacing&) const = default;
};

/// Class codes stored in label volumes.
enum Label : std::uint8_t { kBack = 0, kRv = 1, kMyo = 2, kLv = 3 };
inline constexpr std::size_t kClassCount = 4;

/// Slice-major 3D grid (slice, row, col).
template <typename T>
struct VoxelGrid {
  std::size_t slices = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  Spacing spacing;
  std::vector<T> values;

  static VoxelGrid filled(std::size_t h, std::size_t n, std::size_t m, Spacing sp, T value = T{}) {
    return VoxelGrid{h, n, m, sp, std::vector<T>(h * n * m, value)};
  }

  std::size_t slice_size() const { return rows * cols; }
  std::size_t size() const { return values.size(); }
  std::size_t index(std::size_t z, std::size_t y, std::size_t x) const { return (z * rows + y) * cols + x; }
  T& at(std::size_t z, std::size_t y, std::size_t x) { return values[index(z, y, x)]; }
  const T& at(std::size_t z, std::size_t y, std::size_t x) const { return values[index(z, y, x)]; }
  std::span<T> slice(std::size_t z) { return std::span<T>(values).subspan(z * slice_size(), slice_size()); }
  std::span<const T> slice(std::size_t z) const {
    return std::span<const T>(values).subspan(z * slice_size(), slice_size());
  }
  bool same_geometry(const VoxelGrid& other) const {
    return slices == other.slices && rows == other.rows && cols == other.cols;
  }
  bool operator==(const VoxelGrid&) const = default;
};

template <typename A, typename B>
bool same_dims(const VoxelGrid<A>& a, const VoxelGrid<B>& b) {
  return a.slices == b.slices && a.rows == b.rows && a.cols == b.cols;
}

/// MR intensities with acquisition phase.
struct Volume : VoxelGrid<double> {
  Phase phase = Phase::ed;
  bool operator==(const Volume&) const = default;
};

using LabelVolume = VoxelGrid<std::uint8_t>;

/// Non-owning 2D label slice.
struct LabelSliceView {
  std::span<const std::uint8_t> labels;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::uint8_t at(std::size_t y, std::size_t x) const { return labels[y * cols + x]; }
};

inline LabelSliceView slice_view(const LabelVolume& v, std::size_t z) { return {v.slice(z), v.rows, v.cols}; }

/// Binary mask (0/1) of one class.
LabelVolume class_mask(const LabelVolume& labels, std::uint8_t cls);

/// Round half up to the nearest integer pixel.
long round_px(double v);

}  // namespace gridseg
