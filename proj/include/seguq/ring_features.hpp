#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seguq/defaults.hpp"
#include "seguq/grid.hpp"
#include "seguq/stochastic.hpp"

namespace seguq {

inline constexpr std::size_t kRingCount = 4;
inline constexpr std::int8_t kOutsideBrain = -1;

// Brain voxels labelled by distance d to the ventricles:
// 0: d < 5 mm, 1: [5, 10), 2: [10, 15), 3: >= 15 (edges configurable).
struct RingPartition {
  Grid<std::int8_t> labels;
  std::array<double, 3> edges_mm = defaults::kRingEdgesMm;

  std::size_t voxel_count(std::size_t ring) const;
  double volume_mm3(std::size_t ring) const;
};

std::size_t ring_of_distance(double distance_mm, const std::array<double, 3>& edges);

// Throws EmptyVentricles, and DomainError when ventricles leave the brain.
RingPartition ring_partition(const Mask& ventricles, const Mask& brain,
                             std::array<double, 3> edges_mm = defaults::kRingEdgesMm);

// Values below t become 0; the rest keep their soft value.
ScalarGrid threshold_map(const ScalarGrid& m, double t);

enum class FeatureSource { Seg, Uq, SampleStd };

struct Feature {
  std::string name;
  FeatureSource source = FeatureSource::Seg;
  std::string region;  // R0..R3, bridge12, bridge23, global
  double value = 0.0;
};

struct FeatureVector {
  std::vector<Feature> features;

  std::vector<std::string> names() const;
  std::vector<double> values() const;
  std::optional<double> find(const std::string& name) const;
};

// Features of one thresholded map for one source prefix:
// per ring: <p>_r<i>_volume (mm^3-weighted intensity sum),
//           <p>_r<i>_cc_density (component count / ring volume),
//           <p>_r<i>_cc_std_density (std of component volumes / ring volume);
// <p>_bridge12_lcc, <p>_bridge23_lcc (largest component touching rings 1&2,
// 2&3, counting rings from the ventricles); <p>_global_volume.
// Components are taken on {value > 0}; ring features use the map restricted
// to the ring.
std::vector<Feature> map_features(const ScalarGrid& thresholded, const RingPartition& rings,
                                  const std::string& prefix, FeatureSource source,
                                  Connectivity connectivity = Connectivity::Corner);

// Seg and uq features after thresholding at t; with samples, also the
// population std across samples of every seg feature (prefix "sstd_").
FeatureVector extract_features(const ProbMap& seg, const UncertaintyMap& uq,
                               const SampleSet* samples, const RingPartition& rings,
                               double t = defaults::kFeatureThreshold,
                               Connectivity connectivity = Connectivity::Corner);

struct FeatureTable {
  std::vector<std::string> feature_names;
  std::vector<std::string> subjects;
  std::vector<std::vector<double>> rows;
  std::map<std::string, std::vector<int>> targets;  // name -> label per row

  std::size_t size() const noexcept { return rows.size(); }
  std::size_t column(const std::string& name) const;  // throws MissingFeature
  void add_row(const std::string& subject, const FeatureVector& fv,
               const std::map<std::string, int>& row_targets = {});
  FeatureTable select_rows(std::span<const std::size_t> indices) const;
  FeatureTable select_features(const std::vector<std::string>& names) const;
};

// CSV: header "subject,<features...>,target_<name>..." then one row per subject.
void write_csv(std::ostream& os, const FeatureTable& table, bool header = true);
FeatureTable read_csv(std::istream& is);

struct NormalizationParams {
  std::vector<std::string> feature_names;
  std::vector<double> clip;  // 95th percentile of the fit rows
  std::vector<double> mean;
  std::vector<double> stddev;
};

// Linear interpolation between order statistics, q in [0, 100].
double percentile(std::vector<double> values, double q);

// Per feature: clip = p95 of the fit rows; mean/std (population) over the
// fit values not above the clip.
NormalizationParams fit_normalization(const FeatureTable& table, std::span<const std::size_t> fit_rows,
                                      double clip_percentile = defaults::kClipPercentile);
// Clip to p95, subtract mean, divide by std; zero-std features map to 0.
FeatureTable apply_normalization(const FeatureTable& table, const NormalizationParams& params);

struct NormalizedTable {
  FeatureTable table;
  NormalizationParams params;
};
NormalizedTable normalize_table(const FeatureTable& table, std::span<const std::size_t> fit_rows);

std::string to_json(const NormalizationParams& params);
NormalizationParams normalization_from_json(const std::string& text);

}  // namespace seguq
