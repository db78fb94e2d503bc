#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "seguq/defaults.hpp"
#include "seguq/grid.hpp"
#include "seguq/stochastic.hpp"

namespace seguq {

// 1 where the hard prediction disagrees with the label.
Mask error_map(const Mask& pred, const Mask& gt);
// Error of the mean prediction binarized at `threshold`.
Mask error_map(const SampleSet& samples, const Mask& gt,
               double threshold = defaults::kBinarizeThreshold);

// 2 sum e u / sum (e^2 + u^2). Throws Degenerate when both maps are zero.
double sueo(const UncertaintyMap& u, const Mask& errors);

// Dice between {u >= tau} and the error map.
double ueo(const UncertaintyMap& u, const Mask& errors, double tau);

enum class PatchMode { Tiling, Sliding };

// Per-patch accuracy flag and mean uncertainty, computed once and reused for
// every threshold of a sweep.
struct PatchTable {
  std::vector<bool> accurate;
  std::vector<double> mean_uncertainty;
  std::size_t patch = defaults::kPatchSize;
  double accuracy_threshold = defaults::kPatchAccuracy;
  PatchMode mode = PatchMode::Tiling;
};

// Tiling: non-overlapping patch^3 tiles anchored at the origin; trailing
// partial tiles keep their own voxel count. Sliding: every stride-1 window
// that fits (clipped to the grid along axes shorter than the patch).
PatchTable build_patch_table(const Mask& pred, const Mask& gt, const UncertaintyMap& u,
                             std::size_t patch = defaults::kPatchSize,
                             double accuracy_threshold = defaults::kPatchAccuracy,
                             PatchMode mode = PatchMode::Tiling);

struct PatchStats {
  std::size_t n_ac = 0;  // accurate, certain
  std::size_t n_au = 0;  // accurate, uncertain
  std::size_t n_ci = 0;  // certain, inaccurate
  std::size_t n_ui = 0;  // uncertain, inaccurate
  std::optional<double> p_acc_given_cert;
  std::optional<double> p_uncert_given_inacc;
  std::optional<double> pavpu;

  std::size_t total() const noexcept { return n_ac + n_au + n_ci + n_ui; }
};

// A patch is uncertain when its mean uncertainty is >= tau.
PatchStats evaluate_patches(const PatchTable& table, double tau);

PatchStats patch_metrics(const Mask& pred, const Mask& gt, const UncertaintyMap& u, double tau,
                         std::size_t patch = defaults::kPatchSize,
                         double accuracy_threshold = defaults::kPatchAccuracy,
                         PatchMode mode = PatchMode::Tiling);

struct LesionRecord {
  std::size_t size = 0;
  std::size_t segmented = 0;
  std::size_t uncertain = 0;              // voxels with u >= tau
  std::size_t unsegmented_uncertain = 0;  // unsegmented and u >= tau
  bool detected_strict = true;   // any voxel segmented or uncertain
  bool detected_relaxed = true;  // segmented, or >= min(50%, 5 voxels) uncertain
};

struct LesionCoverage {
  std::vector<LesionRecord> lesions;  // one per ground-truth component
  std::size_t unsegmented = 0;        // components with no segmented voxel
  // Mean over partially or wholly unsegmented components of the fraction of
  // their unsegmented voxels that are uncertain.
  std::optional<double> coverage;
  // Fractions of all ground-truth components that are silent failures.
  std::optional<double> undetected_strict;
  std::optional<double> undetected_relaxed;
  // Mean voxel count of the silent failures under each rule.
  std::optional<double> undetected_strict_mean_size;
  std::optional<double> undetected_relaxed_mean_size;
};

LesionCoverage lesion_coverage(const Mask& pred, const Mask& gt, const UncertaintyMap& u, double tau,
                               Connectivity connectivity = Connectivity::Corner);

// Reuses a labelling of gt for a sweep over tau.
LesionCoverage lesion_coverage(const Mask& pred, const ComponentLabeling& gt_components,
                               const UncertaintyMap& u, double tau);

struct SweepRow {
  double tau = 0.0;
  double ueo = 0.0;
  PatchStats patches;
  LesionCoverage lesions;
};

// Evaluates UEO, patch statistics and lesion coverage at every tau.
std::vector<SweepRow> uq_sweep(const Mask& pred, const Mask& gt, const UncertaintyMap& u,
                               const std::vector<double>& taus,
                               Connectivity connectivity = Connectivity::Corner,
                               std::size_t patch = defaults::kPatchSize,
                               double accuracy_threshold = defaults::kPatchAccuracy,
                               PatchMode mode = PatchMode::Tiling);

// n evenly spaced thresholds covering [0, ln 2].
std::vector<double> tau_grid(std::size_t n);

}  // namespace seguq
