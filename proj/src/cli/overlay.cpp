#include <algorithm>
#include <cmath>
#include <string>

#include "gridseg/binary_io.hpp"
#include "gridseg/cli.hpp"

namespace gridseg {

Rgb class_color(std::uint8_t label) {
  switch (label) {
    case kLv: return {255, 0, 0};
    case kMyo: return {0, 255, 0};
    case kRv: return {0, 0, 255};
    default: throw std::invalid_argument("class_color: Back has no tint");
  }
}

std::vector<std::uint8_t> grayscale_slice(const Volume& volume, std::size_t z) {
  if (z >= volume.slices) throw std::out_of_range("grayscale_slice: slice index out of range");
  const auto [lo_it, hi_it] = std::minmax_element(volume.values.begin(), volume.values.end());
  const double lo = *lo_it, range = *hi_it - *lo_it;
  std::vector<std::uint8_t> out;
  out.reserve(volume.slice_size());
  for (const double v : volume.slice(z)) {
    const double t = range > 0.0 ? (v - lo) / range : 0.0;
    out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0)));
  }
  return out;
}

std::vector<Rgb> tint_slice(std::span<const std::uint8_t> gray, std::span<const std::uint8_t> labels) {
  if (gray.size() != labels.size()) throw ShapeError("tint_slice: image and labels differ in size");
  std::vector<Rgb> out(gray.size());
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const std::uint8_t g = gray[i];
    if (labels[i] == kBack) {
      out[i] = {g, g, g};
      continue;
    }
    const Rgb c = class_color(labels[i]);
    out[i] = {static_cast<std::uint8_t>((g + c.r) / 2), static_cast<std::uint8_t>((g + c.g) / 2),
              static_cast<std::uint8_t>((g + c.b) / 2)};
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
               std::span<const std::uint8_t> gray) {
  if (gray.size() != rows * cols) throw ShapeError("write_pgm: pixel count does not match dimensions");
  const std::string header = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), gray.begin(), gray.end());
  write_file_bytes(path, bytes);
}

void write_ppm(const std::filesystem::path& path, std::size_t rows, std::size_t cols, std::span<const Rgb> rgb) {
  if (rgb.size() != rows * cols) throw ShapeError("write_ppm: pixel count does not match dimensions");
  const std::string header = "P6\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  for (const Rgb& p : rgb) {
    bytes.push_back(p.r);
    bytes.push_back(p.g);
    bytes.push_back(p.b);
  }
  write_file_bytes(path, bytes);
}

}  // namespace gridseg
