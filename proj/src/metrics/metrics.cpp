#include "gridseg/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace gridseg {

namespace {

void require_same_geometry(const LabelVolume& a, const LabelVolume& b, const char* what) {
  if (!a.same_geometry(b)) {
    throw std::invalid_argument(std::string(what) + ": volumes differ in dimensions");
  }
}

std::size_t count_nonzero(const LabelVolume& m) {
  std::size_t n = 0;
  for (const auto v : m.values) n += v != 0;
  return n;
}

/// Largest nearest-neighbour squared distance from points of `from` to `to`.
/// The inner scan stops once a point is closer than the running maximum.
double directed_sq(const std::vector<std::array<double, 3>>& from, const std::vector<std::array<double, 3>>& to) {
  double worst = 0.0;
  for (const auto& a : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : to) {
      const double dz = a[0] - b[0], dy = a[1] - b[1], dx = a[2] - b[2];
      const double d = dz * dz + dy * dy + dx * dx;
      if (d < best) {
        best = d;
        if (best <= worst) break;
      }
    }
    worst = std::max(worst, best);
  }
  return worst;
}

std::vector<std::array<double, 3>> scaled_boundary(const LabelVolume& mask, const Spacing& sp) {
  std::vector<std::array<double, 3>> out;
  for (const auto& [z, y, x] : boundary_voxels(mask)) {
    out.push_back({static_cast<double>(z) * sp.dz, static_cast<double>(y) * sp.dy, static_cast<double>(x) * sp.dx});
  }
  return out;
}

}  // namespace

double dice(const LabelVolume& pred_mask, const LabelVolume& gt_mask) {
  require_same_geometry(pred_mask, gt_mask, "dice");
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pred_mask.values.size(); ++i) {
    const bool p = pred_mask.values[i] != 0, g = gt_mask.values[i] != 0;
    a += p;
    b += g;
    both += p && g;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

std::vector<std::array<std::size_t, 3>> boundary_voxels(const LabelVolume& mask) {
  std::vector<std::array<std::size_t, 3>> out;
  const auto inside = [&](long z, long y, long x) {
    if (z < 0 || y < 0 || x < 0 || z >= static_cast<long>(mask.slices) || y >= static_cast<long>(mask.rows) ||
        x >= static_cast<long>(mask.cols)) {
      return false;
    }
    return mask.at(static_cast<std::size_t>(z), static_cast<std::size_t>(y), static_cast<std::size_t>(x)) != 0;
  };
  for (std::size_t z = 0; z < mask.slices; ++z) {
    for (std::size_t y = 0; y < mask.rows; ++y) {
      for (std::size_t x = 0; x < mask.cols; ++x) {
        if (mask.at(z, y, x) == 0) continue;
        const long lz = static_cast<long>(z), ly = static_cast<long>(y), lx = static_cast<long>(x);
        if (!inside(lz - 1, ly, lx) || !inside(lz + 1, ly, lx) || !inside(lz, ly - 1, lx) ||
            !inside(lz, ly + 1, lx) || !inside(lz, ly, lx - 1) || !inside(lz, ly, lx + 1)) {
          out.push_back({z, y, x});
        }
      }
    }
  }
  return out;
}

std::optional<double> hausdorff_mm(const LabelVolume& pred_mask, const LabelVolume& gt_mask, const Spacing& spacing) {
  require_same_geometry(pred_mask, gt_mask, "hausdorff_mm");
  const auto a = scaled_boundary(pred_mask, spacing);
  const auto b = scaled_boundary(gt_mask, spacing);
  if (a.empty() || b.empty()) return std::nullopt;
  return std::sqrt(std::max(directed_sq(a, b), directed_sq(b, a)));
}

double cavity_volume_ml(const LabelVolume& mask, const Spacing& spacing) {
  return static_cast<double>(count_nonzero(mask)) * spacing.dz * spacing.dy * spacing.dx / 1000.0;
}

double ejection_fraction(double edv_ml, double esv_ml) {
  if (!(edv_ml > 0.0)) throw std::invalid_argument("ejection_fraction: EDV must be positive");
  return 100.0 * (edv_ml - esv_ml) / edv_ml;
}

double myocardial_mass_g(double myo_volume_ml) { return myo_volume_ml * kMyocardialDensity; }

std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) return std::nullopt;
  const auto n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::string class_name(std::uint8_t label) {
  switch (label) {
    case kBack: return "back";
    case kRv: return "rv";
    case kMyo: return "myo";
    case kLv: return "lv";
    default: throw std::invalid_argument("class_name: unknown label");
  }
}

const ClassScores& PhaseReport::of(std::uint8_t label) const {
  for (std::size_t i = 0; i < kReportClasses.size(); ++i) {
    if (kReportClasses[i] == label) return classes[i];
  }
  throw std::invalid_argument("PhaseReport: no scores for label " + std::to_string(label));
}

ClinicalIndices clinical_indices(const LabelVolume& ed, const LabelVolume& es) {
  ClinicalIndices c;
  c.lv_edv_ml = cavity_volume_ml(class_mask(ed, kLv), ed.spacing);
  c.lv_esv_ml = cavity_volume_ml(class_mask(es, kLv), es.spacing);
  c.rv_edv_ml = cavity_volume_ml(class_mask(ed, kRv), ed.spacing);
  c.rv_esv_ml = cavity_volume_ml(class_mask(es, kRv), es.spacing);
  if (c.lv_edv_ml > 0.0) c.ef_lv = ejection_fraction(c.lv_edv_ml, c.lv_esv_ml);
  if (c.rv_edv_ml > 0.0) c.ef_rv = ejection_fraction(c.rv_edv_ml, c.rv_esv_ml);
  c.myo_mass_g = myocardial_mass_g(cavity_volume_ml(class_mask(ed, kMyo), ed.spacing));
  return c;
}

PhaseReport evaluate_phase(const LabelVolume& pred, const LabelVolume& gt, Phase phase) {
  require_same_geometry(pred, gt, "evaluate_phase");
  if (!(pred.spacing == gt.spacing)) throw std::invalid_argument("evaluate_phase: volumes differ in spacing");
  const LabelVolume cleaned = largest_component(pred);
  PhaseReport r;
  r.phase = phase;
  for (std::size_t i = 0; i < kReportClasses.size(); ++i) {
    const LabelVolume p = class_mask(cleaned, kReportClasses[i]);
    const LabelVolume g = class_mask(gt, kReportClasses[i]);
    auto& s = r.classes[i];
    s.dice = dice(p, g);
    s.both_empty = count_nonzero(p) == 0 && count_nonzero(g) == 0;
    s.hausdorff_mm = hausdorff_mm(p, g, gt.spacing);
    s.volume_pred_ml = cavity_volume_ml(p, gt.spacing);
    s.volume_gt_ml = cavity_volume_ml(g, gt.spacing);
  }
  return r;
}

CaseReport evaluate_case(const LabelVolume& pred_ed, const LabelVolume& gt_ed, const LabelVolume& pred_es,
                         const LabelVolume& gt_es) {
  CaseReport r;
  r.ed = evaluate_phase(pred_ed, gt_ed, Phase::ed);
  r.es = evaluate_phase(pred_es, gt_es, Phase::es);
  r.pred = clinical_indices(largest_component(pred_ed), largest_component(pred_es));
  r.gt = clinical_indices(gt_ed, gt_es);
  return r;
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kCorrelationColumns[] = {"corr_ef_lv", "corr_ef_rv", "corr_myo_mass_ed", "corr_lv_vol",
                                               "corr_rv_vol"};

std::string fmt(std::optional<double> v) {
  if (!v || !std::isfinite(*v)) return "NA";
  std::ostringstream s;
  s << std::setprecision(10) << *v;
  return s.str();
}

/// Numeric cells of one row, in header order after the three id columns and
/// before the correlation columns.
std::vector<std::optional<double>> numeric_cells(const CohortRow& row) {
  std::vector<std::optional<double>> cells;
  for (const auto& c : row.report.classes) cells.push_back(c.dice);
  for (const auto& c : row.report.classes) cells.push_back(c.hausdorff_mm);
  for (const auto& c : row.report.classes) cells.push_back(c.volume_pred_ml);
  for (const auto& c : row.report.classes) cells.push_back(c.volume_gt_ml);
  for (const auto* idx : {&row.pred_indices, &row.gt_indices}) {
    if (*idx) {
      cells.push_back((*idx)->ef_lv);
      cells.push_back((*idx)->ef_rv);
      cells.push_back((*idx)->myo_mass_g);
    } else {
      cells.insert(cells.end(), 3, std::nullopt);
    }
  }
  return cells;
}

}  // namespace

std::vector<std::string> cohort_csv_header() {
  std::vector<std::string> h = {"case_id", "patient_id", "phase"};
  for (const char* metric : {"dice", "hd_mm", "vol_pred_ml", "vol_gt_ml"}) {
    for (const auto cls : kReportClasses) h.push_back(std::string(metric) + "_" + class_name(cls));
  }
  for (const char* src : {"pred", "gt"}) {
    h.push_back(std::string("ef_lv_") + src);
    h.push_back(std::string("ef_rv_") + src);
    h.push_back(std::string("myo_mass_ed_g_") + src);
  }
  h.push_back("empty_flags");
  for (const char* c : kCorrelationColumns) h.emplace_back(c);
  return h;
}

void write_cohort_csv(std::ostream& out, std::span<const CohortRow> rows) {
  const auto header = cohort_csv_header();
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  if (rows.empty()) return;

  const std::size_t corr_count = std::size(kCorrelationColumns);
  std::vector<double> sums;
  std::vector<std::size_t> counts;
  for (const auto& row : rows) {
    out << row.case_id << ',' << row.patient_id << ',' << phase_name(row.report.phase);
    const auto cells = numeric_cells(row);
    sums.resize(cells.size(), 0.0);
    counts.resize(cells.size(), 0);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      out << ',' << fmt(cells[i]);
      if (cells[i] && std::isfinite(*cells[i])) {
        sums[i] += *cells[i];
        ++counts[i];
      }
    }
    // Classes scored by convention (both masks empty) or missing an HD.
    std::string flags;
    for (std::size_t i = 0; i < kReportClasses.size(); ++i) {
      const auto& c = row.report.classes[i];
      if (c.both_empty || !c.hausdorff_mm) flags += (flags.empty() ? "" : ";") + class_name(kReportClasses[i]);
    }
    out << ',' << (flags.empty() ? "-" : flags);
    for (std::size_t i = 0; i < corr_count; ++i) out << ",NA";
    out << '\n';
  }

  // Predicted vs ground-truth pairs per correlation column.
  std::array<std::vector<double>, 10> series;
  const auto push_pair = [&](std::size_t k, std::optional<double> p, std::optional<double> g) {
    if (!p || !g) return;
    series[2 * k].push_back(*p);
    series[2 * k + 1].push_back(*g);
  };
  for (const auto& row : rows) {
    if (row.pred_indices && row.gt_indices) {
      push_pair(0, row.pred_indices->ef_lv, row.gt_indices->ef_lv);
      push_pair(1, row.pred_indices->ef_rv, row.gt_indices->ef_rv);
      push_pair(2, row.pred_indices->myo_mass_g, row.gt_indices->myo_mass_g);
    }
    push_pair(3, row.report.of(kLv).volume_pred_ml, row.report.of(kLv).volume_gt_ml);
    push_pair(4, row.report.of(kRv).volume_pred_ml, row.report.of(kRv).volume_gt_ml);
  }

  out << "mean,-,-";
  for (std::size_t i = 0; i < sums.size(); ++i) {
    out << ','
        << fmt(counts[i] ? std::optional<double>(sums[i] / static_cast<double>(counts[i])) : std::nullopt);
  }
  out << ",-";
  for (std::size_t k = 0; k < corr_count; ++k) out << ',' << fmt(pearson(series[2 * k], series[2 * k + 1]));
  out << '\n';
}

}  // namespace gridseg
