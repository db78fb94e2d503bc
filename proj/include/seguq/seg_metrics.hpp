#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "seguq/defaults.hpp"
#include "seguq/grid.hpp"
#include "seguq/stochastic.hpp"

namespace seguq {

// 2|a & b| / (|a| + |b|); 1 when both masks are empty.
double dice(const Mask& a, const Mask& b);

// |a & b| / |a | b|; 1 when both masks are empty.
double iou(const Mask& a, const Mask& b);

// 100 |V_pred - V_gt| / V_gt with spacing-weighted volumes. Throws
// EmptyGroundTruth when gt has no foreground.
double avd_percent(const Mask& pred, const Mask& gt);

struct ComponentScores {
  std::size_t tp = 0;  // gt components touched by pred
  std::size_t fn = 0;  // gt components untouched
  std::size_t fp = 0;  // pred components touching no gt voxel
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 1.0;
};

// Lesion-wise detection counting a component as found when IOU > 0.
ComponentScores component_f1(const Mask& pred, const Mask& gt,
                             Connectivity connectivity = Connectivity::Corner);

struct TopScores {
  double top_dice = 0.0;
  double top_avd = 0.0;
};

// Best Dice and lowest AVD% over the binarized samples; the two may come from
// different samples. Throws EmptyGroundTruth (from AVD) for an empty gt.
TopScores top_scores(const SampleSet& samples, const Mask& gt,
                     double threshold = defaults::kBinarizeThreshold);
double top_dice(const SampleSet& samples, const Mask& gt,
                double threshold = defaults::kBinarizeThreshold);

// Squared generalised energy distance with d = 1 - IOU:
//   2 E[d(y, y_hat)] - E[d(y, y')] - E[d(y_hat, y_hat')]
// Cross term over all pairs; self terms over unordered distinct pairs, zero
// for a single-member set.
double ged(const SampleSet& samples, const SampleSet& gt_set,
           double threshold = defaults::kBinarizeThreshold);
double ged(const std::vector<Mask>& predicted, const std::vector<Mask>& reference);

struct Aggregate {
  double mean = 0.0;
  std::optional<double> std_over_runs;      // std over runs of the subject-mean
  std::optional<double> std_over_subjects;  // std over subjects of the run-mean
};

// values[r][s] holds the metric for run r and subject s. Standard deviations
// use Bessel's correction and are absent when the axis has fewer than 2 entries.
Aggregate aggregate(const std::vector<std::vector<double>>& values);

// Sample standard deviation (n - 1); nullopt for n < 2.
std::optional<double> bessel_std(const std::vector<double>& values);

}  // namespace seguq
