#include "gridseg/shape_prior.hpp"

#include <cmath>
#include <stdexcept>

#include "gridseg/binary_io.hpp"

namespace gridseg {

CoM compute_com(LabelSliceView slice) {
  double sx = 0.0, sy = 0.0;
  std::size_t n = 0;
  for (std::size_t y = 0; y < slice.rows; ++y) {
    for (std::size_t x = 0; x < slice.cols; ++x) {
      const auto l = slice.at(y, x);
      if (l == kMyo || l == kRv) {
        sx += static_cast<double>(x);
        sy += static_cast<double>(y);
        ++n;
      }
    }
  }
  if (n == 0) return {};
  return {sx / static_cast<double>(n), sy / static_cast<double>(n), true};
}

CoM volume_com(const LabelVolume& volume) {
  double sx = 0.0, sy = 0.0;
  std::size_t n = 0;
  for (std::size_t z = 0; z < volume.slices; ++z) {
    const CoM c = compute_com(slice_view(volume, z));
    if (!c.valid) continue;
    sx += c.x;
    sy += c.y;
    ++n;
  }
  if (n == 0) return {};
  return {sx / static_cast<double>(n), sy / static_cast<double>(n), true};
}

std::size_t prior_bin(std::size_t slice_index, std::size_t total_slices) {
  if (total_slices <= 1) return 0;
  const double z = static_cast<double>(slice_index) / static_cast<double>(total_slices - 1);
  return static_cast<std::size_t>(round_px(z * static_cast<double>(ShapePrior::kBins - 1)));
}

ShapePrior build_prior(std::span<const LabelVolume> training_labels) {
  constexpr std::size_t S = ShapePrior::kSize;
  constexpr std::size_t B = ShapePrior::kBins;
  if (training_labels.empty()) throw std::invalid_argument("build_prior: no training volumes");

  // Integer tallies make the average independent of volume order.
  std::vector<std::uint32_t> hits(ShapePrior::kChannels * B * S * S, 0);
  std::vector<std::uint32_t> counts(B, 0);
  for (std::size_t v = 0; v < training_labels.size(); ++v) {
    const LabelVolume& vol = training_labels[v];
    bool any_valid = false;
    for (std::size_t z = 0; z < vol.slices; ++z) {
      const auto view = slice_view(vol, z);
      const CoM c = compute_com(view);
      if (!c.valid) continue;
      any_valid = true;
      const std::size_t bin = prior_bin(z, vol.slices);
      ++counts[bin];
      const long cy = round_px(c.y), cx = round_px(c.x);
      for (std::size_t r = 0; r < S; ++r) {
        const long sy = static_cast<long>(r) - static_cast<long>(ShapePrior::kCenter) + cy;
        if (sy < 0 || sy >= static_cast<long>(vol.rows)) continue;
        for (std::size_t col = 0; col < S; ++col) {
          const long sx = static_cast<long>(col) - static_cast<long>(ShapePrior::kCenter) + cx;
          if (sx < 0 || sx >= static_cast<long>(vol.cols)) continue;
          const int ch = prior_channel(view.at(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)));
          if (ch >= 0) ++hits[ShapePrior::index(static_cast<std::size_t>(ch), bin, r, col)];
        }
      }
    }
    if (!any_valid) {
      throw std::invalid_argument("build_prior: training volume " + std::to_string(v) +
                                  " has no slice with MYO or RV");
    }
  }

  ShapePrior prior;
  prior.sample_counts.assign(B, 0);
  for (std::size_t bin = 0; bin < B; ++bin) {
    std::size_t src = bin;
    if (counts[bin] == 0) {
      // Nearest populated bin; the lower one wins a tie.
      for (std::size_t d = 1; d < B; ++d) {
        if (bin >= d && counts[bin - d] > 0) {
          src = bin - d;
          break;
        }
        if (bin + d < B && counts[bin + d] > 0) {
          src = bin + d;
          break;
        }
      }
    }
    prior.sample_counts[bin] = counts[src];
    const double inv = 1.0 / static_cast<double>(counts[src]);
    for (std::size_t ch = 0; ch < ShapePrior::kChannels; ++ch) {
      for (std::size_t r = 0; r < S; ++r) {
        for (std::size_t col = 0; col < S; ++col) {
          prior.probs[ShapePrior::index(ch, bin, r, col)] =
              static_cast<double>(hits[ShapePrior::index(ch, src, r, col)]) * inv;
        }
      }
    }
  }
  return prior;
}

void register_prior_into(const ShapePrior& prior, const CoM& com, std::size_t slice_index,
                         std::size_t total_slices, std::size_t out_size, std::span<double> out) {
  if (out.size() != ShapePrior::kChannels * out_size * out_size) {
    throw ShapeError("register_prior: output buffer has wrong size");
  }
  if (total_slices == 0 || slice_index >= total_slices) {
    throw std::invalid_argument("register_prior: slice index out of range");
  }
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t bin = prior_bin(slice_index, total_slices);
  const long half = static_cast<long>(out_size / 2);
  const long cx = com.valid ? round_px(com.x) : half;
  const long cy = com.valid ? round_px(com.y) : half;
  const long top = cy - static_cast<long>(ShapePrior::kCenter);
  const long left = cx - static_cast<long>(ShapePrior::kCenter);
  const auto n = static_cast<long>(out_size);
  for (std::size_t ch = 0; ch < ShapePrior::kChannels; ++ch) {
    double* plane = out.data() + ch * out_size * out_size;
    for (std::size_t r = 0; r < ShapePrior::kSize; ++r) {
      const long y = top + static_cast<long>(r);
      if (y < 0 || y >= n) continue;
      for (std::size_t c = 0; c < ShapePrior::kSize; ++c) {
        const long x = left + static_cast<long>(c);
        if (x < 0 || x >= n) continue;
        plane[y * n + x] = prior.at(ch, bin, r, c);
      }
    }
  }
}

Tensor register_prior(const ShapePrior& prior, const CoM& com, std::size_t slice_index, std::size_t total_slices,
                      std::size_t out_size) {
  std::vector<double> buf(ShapePrior::kChannels * out_size * out_size);
  register_prior_into(prior, com, slice_index, total_slices, out_size, buf);
  return Tensor::from_data({ShapePrior::kChannels, out_size, out_size}, std::move(buf));
}

std::vector<std::uint8_t> encode_prior(const ShapePrior& prior) {
  ByteWriter w;
  w.magic("SPRI");
  w.u32(ShapePrior::kChannels);
  w.u32(ShapePrior::kBins);
  w.u32(ShapePrior::kSize);
  w.u32(ShapePrior::kSize);
  w.f64s(prior.probs.data(), prior.probs.size());
  return w.buffer();
}

ShapePrior decode_prior(std::vector<std::uint8_t> bytes) {
  ByteReader r(std::move(bytes), "SPRI");
  r.expect_magic("SPRI");
  const std::uint32_t c = r.u32(), b = r.u32(), h = r.u32(), w = r.u32();
  if (c != ShapePrior::kChannels || b != ShapePrior::kBins || h != ShapePrior::kSize || w != ShapePrior::kSize) {
    throw LoadError(LoadErrorKind::bad_value, "SPRI: dims must be 3/20/100/100");
  }
  ShapePrior prior;
  if (r.remaining() != prior.probs.size() * 8) throw LoadError(LoadErrorKind::truncated, "SPRI: truncated payload");
  r.f64s(prior.probs.data(), prior.probs.size());
  for (const double p : prior.probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw LoadError(LoadErrorKind::bad_value, "SPRI: probability outside [0,1]");
  }
  return prior;
}

void write_prior(const std::filesystem::path& path, const ShapePrior& prior) {
  write_file_bytes(path, encode_prior(prior));
}

ShapePrior read_prior(const std::filesystem::path& path) { return decode_prior(read_file_bytes(path)); }

}  // namespace gridseg
