#include "gridseg/volume.hpp"

#include <cmath>
#include <stdexcept>

namespace gridseg {

std::string phase_name(Phase phase) { return phase == Phase::ed ? "ED" : "ES"; }

Phase parse_phase(const std::string& text) {
  if (text == "ED" || text == "ed") return Phase::ed;
  if (text == "ES" || text == "es") return Phase::es;
  throw std::invalid_argument("unknown phase '" + text + "' (expected ED or ES)");
}

LabelVolume class_mask(const LabelVolume& labels, std::uint8_t cls) {
  LabelVolume mask = LabelVolume::filled(labels.slices, labels.rows, labels.cols, labels.spacing, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) mask.values[i] = labels.values[i] == cls ? 1 : 0;
  return mask;
}

long round_px(double v) { return static_cast<long>(std::floor(v + 0.5)); }

}  // namespace gridseg
