#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gridseg/volume.hpp"

namespace gridseg {

enum class Connectivity { face6 = 6, full26 = 26 };

/// Per class, keeps only the largest 3D connected component and relabels the
/// rest Back. Equal sizes go to the component whose first voxel (row-major
/// index) comes first.
LabelVolume largest_component(const LabelVolume& labels, Connectivity connectivity = Connectivity::face6);

/// Component id per voxel of a 0/1 mask (0 = background, ids from 1 in
/// order of first voxel) and the voxel count of each id.
struct ComponentMap {
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> sizes;  // sizes[id - 1]
};
ComponentMap label_components(const LabelVolume& mask, Connectivity connectivity = Connectivity::face6);

/// 2|A n B| / (|A| + |B|) over non-zero voxels; 1.0 when both are empty.
double dice(const LabelVolume& pred_mask, const LabelVolume& gt_mask);

/// Mask voxels with at least one 6-neighbour outside the mask (the volume
/// border counts as outside), as (z, y, x) triples.
std::vector<std::array<std::size_t, 3>> boundary_voxels(const LabelVolume& mask);

/// Symmetric Hausdorff distance in mm between the boundary voxel centers of
/// two masks. Empty when either mask is empty.
std::optional<double> hausdorff_mm(const LabelVolume& pred_mask, const LabelVolume& gt_mask, const Spacing& spacing);

/// Voxel count times voxel volume, in ml.
double cavity_volume_ml(const LabelVolume& mask, const Spacing& spacing);

/// 100 (EDV - ESV) / EDV. Throws std::invalid_argument when edv <= 0.
double ejection_fraction(double edv_ml, double esv_ml);

inline constexpr double kMyocardialDensity = 1.05;  // g/ml
double myocardial_mass_g(double myo_volume_ml);

/// Sample Pearson correlation; empty for n < 2, mismatched lengths, or a
/// constant sequence.
std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys);

// ---------------------------------------------------------------------------
// Case reports
// ---------------------------------------------------------------------------

/// Report order of the evaluated structures.
inline constexpr std::array<std::uint8_t, 3> kReportClasses = {kLv, kRv, kMyo};
std::string class_name(std::uint8_t label);

struct ClassScores {
  double dice = 0.0;
  /// Both masks empty; dice is 1 by convention.
  bool both_empty = false;
  /// Missing when either mask is empty.
  std::optional<double> hausdorff_mm;
  double volume_pred_ml = 0.0;
  double volume_gt_ml = 0.0;
};

struct PhaseReport {
  Phase phase = Phase::ed;
  std::array<ClassScores, 3> classes;  // kReportClasses order

  const ClassScores& of(std::uint8_t label) const;
};

/// Clinical indices of one patient from one label source.
struct ClinicalIndices {
  double lv_edv_ml = 0.0;
  double lv_esv_ml = 0.0;
  double rv_edv_ml = 0.0;
  double rv_esv_ml = 0.0;
  std::optional<double> ef_lv;  // missing when the EDV is zero
  std::optional<double> ef_rv;
  double myo_mass_g = 0.0;  // at ED
};

ClinicalIndices clinical_indices(const LabelVolume& ed, const LabelVolume& es);

struct CaseReport {
  PhaseReport ed;
  PhaseReport es;
  ClinicalIndices pred;
  ClinicalIndices gt;
};

/// Applies largest_component to `pred`, then scores every class against
/// `gt`. Throws std::invalid_argument on mismatched dims or spacing.
PhaseReport evaluate_phase(const LabelVolume& pred, const LabelVolume& gt, Phase phase);

/// Both phases of one patient plus clinical indices from the post-processed
/// prediction and from the ground truth.
CaseReport evaluate_case(const LabelVolume& pred_ed, const LabelVolume& gt_ed, const LabelVolume& pred_es,
                         const LabelVolume& gt_es);

// ---------------------------------------------------------------------------
// Cohort CSV
//
// One row per evaluated volume, then a `mean` row. Patient-level columns
// (EF, mass) sit on the ED row of patients that have both phases. The
// correlation columns are filled on the `mean` row only. Missing values are
// written as NA.
// ---------------------------------------------------------------------------

struct CohortRow {
  std::string case_id;
  std::string patient_id;
  PhaseReport report;
  /// Set on the ED row of a complete patient.
  std::optional<ClinicalIndices> pred_indices;
  std::optional<ClinicalIndices> gt_indices;
};

std::vector<std::string> cohort_csv_header();
/// Header only when `rows` is empty.
void write_cohort_csv(std::ostream& out, std::span<const CohortRow> rows);

}  // namespace gridseg
