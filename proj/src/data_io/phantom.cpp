#include <cmath>
#include <numbers>
#include <stdexcept>

#include "gridseg/data_io.hpp"

namespace gridseg {

namespace {

// ES cavities contract and the wall thickens.
constexpr double kEsLvScale = 0.72;
constexpr double kEsRvScale = 0.78;
constexpr double kEsWallScale = 1.35;

enum StreamId : std::uint64_t { kAnatomy = 1, kJitter = 2, kNoiseEd = 3, kNoiseEs = 4 };

bool in_disk(double x, double y, double cx, double cy, double r) {
  const double dx = x - cx, dy = y - cy;
  return dx * dx + dy * dy <= r * r;
}

}  // namespace

void PhantomSpec::validate() const {
  if (slice_count < 7 || slice_count > 17) throw std::invalid_argument("phantom: slice_count must lie in [7, 17]");
  if (size < 16) throw std::invalid_argument("phantom: in-plane size must be at least 16");
  const auto ordered = [](double lo, double hi) { return lo > 0.0 && lo <= hi; };
  if (!ordered(lv_radius_min, lv_radius_max) || !ordered(myo_thickness_min, myo_thickness_max) ||
      !ordered(rv_radius_min, rv_radius_max)) {
    throw std::invalid_argument("phantom: radius ranges must be positive and ordered");
  }
  if (jitter_px < 0.0 || jitter_px > static_cast<double>(size) / 8.0) {
    throw std::invalid_argument("phantom: jitter must lie in [0, size/8]");
  }
  if (apex_taper < 0.0 || apex_taper >= 1.0) throw std::invalid_argument("phantom: apex_taper must lie in [0, 1)");
  if (noise_sigma < 0.0) throw std::invalid_argument("phantom: noise_sigma must be non-negative");
  if (!(spacing.dz > 0.0 && spacing.dy > 0.0 && spacing.dy == spacing.dx)) {
    throw std::invalid_argument("phantom: spacing must be positive with dy == dx");
  }
}

Phantom gen_phantom(const PhantomSpec& spec) {
  spec.validate();
  const RngStream root(spec.seed);
  RngStream anatomy = root.fork(kAnatomy);
  RngStream jitter_rng = root.fork(kJitter);
  RngStream noise = root.fork(spec.phase == Phase::ed ? kNoiseEd : kNoiseEs);

  const double lv0 = anatomy.uniform_real(spec.lv_radius_min, spec.lv_radius_max);
  const double wall0 = anatomy.uniform_real(spec.myo_thickness_min, spec.myo_thickness_max);
  const double rv0 = anatomy.uniform_real(spec.rv_radius_min, spec.rv_radius_max);
  const double rv_angle = std::numbers::pi + anatomy.uniform_real(-0.35, 0.35);
  const double ox = anatomy.uniform_real(-spec.center_offset_px, spec.center_offset_px);
  const double oy = anatomy.uniform_real(-spec.center_offset_px, spec.center_offset_px);
  const double organ_angle = anatomy.uniform_real(-0.6, 0.6);
  const double organ_r = 0.6 * lv0;

  const bool es = spec.phase == Phase::es;
  const double lv_scale = es ? kEsLvScale : 1.0;
  const double rv_scale = es ? kEsRvScale : 1.0;
  const double wall_scale = es ? kEsWallScale : 1.0;

  const std::size_t h = spec.slice_count, s = spec.size;
  Phantom out;
  static_cast<VoxelGrid<double>&>(out.image) = VoxelGrid<double>::filled(h, s, s, spec.spacing, 0.0);
  out.image.phase = spec.phase;
  out.labels = LabelVolume::filled(h, s, s, spec.spacing, kBack);

  const long jmax = static_cast<long>(std::floor(spec.jitter_px));
  const double mid = static_cast<double>(s) / 2.0;
  const TissueLevels& lv = spec.levels;
  for (std::size_t z = 0; z < h; ++z) {
    const long jx = jitter_rng.uniform_range(-jmax, jmax);
    const long jy = jitter_rng.uniform_range(-jmax, jmax);
    out.jitter.emplace_back(jx, jy);

    const double u = h > 1 ? static_cast<double>(z) / static_cast<double>(h - 1) : 0.0;
    const double r_lv = lv0 * lv_scale * (1.0 - spec.apex_taper * u);
    const double r_out = r_lv + wall0 * wall_scale * (1.0 - 0.3 * u);
    const double r_rv = rv0 * rv_scale * (1.0 - 0.6 * u);
    const double cx = mid + ox + static_cast<double>(jx);
    const double cy = mid + oy + static_cast<double>(jy);
    const double rv_d = r_out + 0.3 * r_rv;
    const double rvx = cx + rv_d * std::cos(rv_angle);
    const double rvy = cy + rv_d * std::sin(rv_angle);
    const double organ_d = lv0 + wall0 + 2.0 * organ_r + 2.0;
    const double orx = cx + organ_d * std::cos(organ_angle);
    const double ory = cy + organ_d * std::sin(organ_angle);

    for (std::size_t y = 0; y < s; ++y) {
      for (std::size_t x = 0; x < s; ++x) {
        const double px = static_cast<double>(x), py = static_cast<double>(y);
        std::uint8_t label = kBack;
        if (in_disk(px, py, cx, cy, r_lv)) {
          label = kLv;
        } else if (in_disk(px, py, cx, cy, r_out)) {
          label = kMyo;
        } else if (in_disk(px, py, rvx, rvy, r_rv)) {
          label = kRv;
        }
        double level = 0.0;
        switch (label) {
          case kLv: level = lv.lv; break;
          case kMyo: level = lv.myo; break;
          case kRv: level = lv.rv; break;
          default: {
            const double ex = (px - mid) / (0.46 * static_cast<double>(s));
            const double ey = (py - mid) / (0.40 * static_cast<double>(s));
            level = ex * ex + ey * ey <= 1.0 ? lv.body : lv.outside;
            if (spec.distractor && in_disk(px, py, orx, ory, organ_r)) level = lv.organ;
          }
        }
        out.labels.at(z, y, x) = label;
        out.image.at(z, y, x) = level + (spec.noise_sigma > 0.0 ? spec.noise_sigma * noise.normal() : 0.0);
      }
    }
  }
  return out;
}

PhantomSpec random_phantom_spec(std::uint64_t patient_seed, std::size_t size, Phase phase,
                                std::size_t min_slices, std::size_t max_slices) {
  RngStream rng = RngStream(patient_seed).fork(99);
  PhantomSpec spec;
  spec.seed = patient_seed;
  spec.size = size;
  spec.phase = phase;
  spec.slice_count = static_cast<std::size_t>(
      rng.uniform_range(static_cast<std::int64_t>(min_slices), static_cast<std::int64_t>(max_slices)));
  // Default radii describe a 96-pixel field of view.
  const double k = static_cast<double>(size) / 96.0;
  spec.lv_radius_min *= k;
  spec.lv_radius_max *= k;
  spec.myo_thickness_min *= k;
  spec.myo_thickness_max *= k;
  spec.rv_radius_min *= k;
  spec.rv_radius_max *= k;
  spec.center_offset_px = static_cast<double>(size) / 10.0;
  spec.jitter_px = std::min(2.0, static_cast<double>(size) / 8.0);
  const double gain = rng.uniform_real(0.7, 1.4);
  spec.levels.body *= gain;
  spec.levels.lv *= gain;
  spec.levels.rv *= gain;
  spec.levels.myo *= gain;
  spec.levels.organ *= gain;
  spec.noise_sigma = rng.uniform_real(0.03, 0.06) * spec.levels.lv;
  spec.spacing.dz = static_cast<double>(rng.uniform_range(5, 10));
  spec.spacing.dy = spec.spacing.dx = std::round(rng.uniform_real(0.83, 1.75) * 100.0) / 100.0;
  return spec;
}

}  // namespace gridseg
