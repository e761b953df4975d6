#include <algorithm>
#include <array>
#include <cstdlib>
#include <vector>

#include "gridseg/metrics.hpp"

namespace gridseg {

namespace {

struct Offset {
  long dz, dy, dx;
};

std::vector<Offset> neighbourhood(Connectivity connectivity) {
  std::vector<Offset> out;
  for (long dz = -1; dz <= 1; ++dz) {
    for (long dy = -1; dy <= 1; ++dy) {
      for (long dx = -1; dx <= 1; ++dx) {
        const long manhattan = std::abs(dz) + std::abs(dy) + std::abs(dx);
        if (manhattan == 0) continue;
        if (connectivity == Connectivity::face6 && manhattan != 1) continue;
        out.push_back({dz, dy, dx});
      }
    }
  }
  return out;
}

}  // namespace

ComponentMap label_components(const LabelVolume& mask, Connectivity connectivity) {
  const auto offsets = neighbourhood(connectivity);
  ComponentMap out{std::vector<std::uint32_t>(mask.values.size(), 0), {}};
  std::vector<std::size_t> stack;
  const auto nz = static_cast<long>(mask.slices), ny = static_cast<long>(mask.rows),
             nx = static_cast<long>(mask.cols);
  for (std::size_t seed = 0; seed < mask.values.size(); ++seed) {
    if (mask.values[seed] == 0 || out.ids[seed] != 0) continue;
    const auto id = static_cast<std::uint32_t>(out.sizes.size() + 1);
    std::size_t size = 0;
    out.ids[seed] = id;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      ++size;
      const auto z = static_cast<long>(v / mask.slice_size());
      const auto y = static_cast<long>((v / mask.cols) % mask.rows);
      const auto x = static_cast<long>(v % mask.cols);
      for (const auto& o : offsets) {
        const long zz = z + o.dz, yy = y + o.dy, xx = x + o.dx;
        if (zz < 0 || yy < 0 || xx < 0 || zz >= nz || yy >= ny || xx >= nx) continue;
        const auto w = static_cast<std::size_t>((zz * ny + yy) * nx + xx);
        if (mask.values[w] == 0 || out.ids[w] != 0) continue;
        out.ids[w] = id;
        stack.push_back(w);
      }
    }
    out.sizes.push_back(size);
  }
  return out;
}

LabelVolume largest_component(const LabelVolume& labels, Connectivity connectivity) {
  LabelVolume out = labels;
  for (const std::uint8_t cls : {std::uint8_t{kRv}, std::uint8_t{kMyo}, std::uint8_t{kLv}}) {
    const LabelVolume mask = class_mask(labels, cls);
    const ComponentMap comps = label_components(mask, connectivity);
    if (comps.sizes.size() <= 1) continue;
    // max_element returns the first maximum, i.e. the lowest seed index.
    const auto keep = static_cast<std::uint32_t>(
        std::max_element(comps.sizes.begin(), comps.sizes.end()) - comps.sizes.begin() + 1);
    for (std::size_t v = 0; v < out.values.size(); ++v) {
      if (comps.ids[v] != 0 && comps.ids[v] != keep) out.values[v] = kBack;
    }
  }
  return out;
}

}  // namespace gridseg
