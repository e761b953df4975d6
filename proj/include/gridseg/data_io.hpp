#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "gridseg/binary_io.hpp"
#include "gridseg/rng.hpp"
#include "gridseg/volume.hpp"

namespace gridseg {

// ---------------------------------------------------------------------------
// MVOL files
//
//   "MVOL" | version u32 | dtype u8 (0 = f64, 1 = u8 labels) | H,N,M u32 |
//   dz,dy,dx f64 | payload row-major (slice, row, col), little-endian.
//
// Image volumes also get a `<path>.meta` sidecar holding `phase=ED|ES`.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kMvolVersion = 1;

void write_volume(const std::filesystem::path& path, const Volume& volume);
void write_volume(const std::filesystem::path& path, const LabelVolume& labels);
Volume read_volume(const std::filesystem::path& path);
LabelVolume read_label_volume(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_volume(const Volume& volume);
std::vector<std::uint8_t> encode_volume(const LabelVolume& labels);
Volume decode_volume(std::vector<std::uint8_t> bytes);
LabelVolume decode_label_volume(std::vector<std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

struct PreprocessOptions {
  double low_percentile = 2.0;
  double high_percentile = 98.0;
};

/// Percentile of `values` (0..100) by linear interpolation between order
/// statistics.
double percentile(std::span<const double> values, double pct);

/// Clips to the configured percentiles of the whole volume, subtracts the
/// mean and divides by the standard deviation of the clipped values. A
/// constant volume maps to zeros.
Volume preprocess(const Volume& volume, const PreprocessOptions& options = {});

/// A slice resized to out_size x out_size by center crop or symmetric zero
/// pad. fitted(r, c) == native(r + row_offset, c + col_offset).
template <typename T>
struct FittedSlice {
  std::vector<T> values;
  std::size_t size = 0;
  long row_offset = 0;
  long col_offset = 0;
};

FittedSlice<double> fit_to_input(std::span<const double> slice, std::size_t rows, std::size_t cols,
                                 std::size_t out_size);
FittedSlice<std::uint8_t> fit_to_input(std::span<const std::uint8_t> slice, std::size_t rows, std::size_t cols,
                                       std::size_t out_size);

/// Inverse placement of a fitted label slice back onto the native grid;
/// native pixels not covered by the fitted window become Back.
std::vector<std::uint8_t> restore_from_input(const FittedSlice<std::uint8_t>& fitted, std::size_t rows,
                                             std::size_t cols);

/// Every slice of `volume` fitted to out_size; spacing and phase preserved.
Volume fit_volume(const Volume& volume, std::size_t out_size);
LabelVolume fit_volume(const LabelVolume& labels, std::size_t out_size);

// ---------------------------------------------------------------------------
// Synthetic cardiac phantoms
// ---------------------------------------------------------------------------

struct TissueLevels {
  double outside = 0.0;
  double body = 220.0;
  double lv = 900.0;
  double rv = 780.0;
  double myo = 330.0;
  double organ = 600.0;
};

struct PhantomSpec {
  std::uint64_t seed = 0;
  std::size_t slice_count = 10;
  std::size_t size = 96;
  Phase phase = Phase::ed;
  // Radii in pixels at the base slice.
  double lv_radius_min = 8.0;
  double lv_radius_max = 12.0;
  double myo_thickness_min = 3.0;
  double myo_thickness_max = 5.0;
  double rv_radius_min = 10.0;
  double rv_radius_max = 15.0;
  /// Fractional LV radius loss from base to apex.
  double apex_taper = 0.45;
  /// Per-slice translation jitter bound (breath-hold shifts), pixels.
  double jitter_px = 2.0;
  /// Patient-level offset of the heart from the image center, pixels.
  double center_offset_px = 8.0;
  double noise_sigma = 25.0;
  TissueLevels levels;
  bool distractor = true;
  Spacing spacing{8.0, 1.4, 1.4};

  /// Throws std::invalid_argument when the geometry is inconsistent.
  void validate() const;
};

struct Phantom {
  Volume image;
  LabelVolume labels;
  /// Integer (dx, dy) jitter applied to each slice.
  std::vector<std::pair<long, long>> jitter;
};

/// Deterministic in spec.seed. ED and ES phantoms drawn from the same seed
/// share anatomy, placement and jitter; ES cavities are contracted.
Phantom gen_phantom(const PhantomSpec& spec);

/// A randomized spec for cohort generation: slice count, radii, spacing and
/// tissue levels are drawn from `patient_seed`.
PhantomSpec random_phantom_spec(std::uint64_t patient_seed, std::size_t size, Phase phase,
                                std::size_t min_slices = 7, std::size_t max_slices = 17);

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

/// One epoch's batches over `count` items: a fresh shuffle of 0..count-1 cut
/// into runs of `batch_size`, final short batch kept.
std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size, RngStream& rng);

}  // namespace gridseg
