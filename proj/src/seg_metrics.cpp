#include "seguq/seg_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace seguq {

namespace {

struct Overlap {
  std::size_t a = 0, b = 0, both = 0;
};

Overlap overlap(const Mask& a, const Mask& b) {
  require_same_dims(a, b, "masks have different dims");
  Overlap o;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    o.a += x;
    o.b += y;
    o.both += x && y;
  }
  return o;
}

}  // namespace

double dice(const Mask& a, const Mask& b) {
  const Overlap o = overlap(a, b);
  if (o.a + o.b == 0) return 1.0;
  return 2.0 * static_cast<double>(o.both) / static_cast<double>(o.a + o.b);
}

double iou(const Mask& a, const Mask& b) {
  const Overlap o = overlap(a, b);
  const std::size_t uni = o.a + o.b - o.both;
  if (uni == 0) return 1.0;
  return static_cast<double>(o.both) / static_cast<double>(uni);
}

double avd_percent(const Mask& pred, const Mask& gt) {
  require_same_dims(pred, gt, "avd_percent: masks have different dims");
  const double voxel = gt.spacing().voxel_volume();
  const double v_gt = static_cast<double>(count(gt)) * voxel;
  if (v_gt == 0.0) throw Error(ErrorCode::EmptyGroundTruth, "AVD is undefined for an empty reference");
  const double v_pred = static_cast<double>(count(pred)) * pred.spacing().voxel_volume();
  return 100.0 * std::abs(v_pred - v_gt) / v_gt;
}

ComponentScores component_f1(const Mask& pred, const Mask& gt, Connectivity connectivity) {
  require_same_dims(pred, gt, "component_f1: masks have different dims");
  ComponentScores s;
  const auto gt_cc = connected_components(gt, connectivity);
  const auto pred_cc = connected_components(pred, connectivity);
  for (const auto& c : gt_cc.components) {
    const bool hit = std::any_of(c.voxels.begin(), c.voxels.end(), [&](std::size_t i) { return pred[i] != 0; });
    (hit ? s.tp : s.fn) += 1;
  }
  for (const auto& c : pred_cc.components) {
    const bool hit = std::any_of(c.voxels.begin(), c.voxels.end(), [&](std::size_t i) { return gt[i] != 0; });
    if (!hit) s.fp += 1;
  }
  const double tp = static_cast<double>(s.tp);
  if (s.tp + s.fp + s.fn == 0) return s;  // both empty
  s.precision = s.tp + s.fp == 0 ? 0.0 : tp / static_cast<double>(s.tp + s.fp);
  s.recall = s.tp + s.fn == 0 ? 0.0 : tp / static_cast<double>(s.tp + s.fn);
  s.f1 = 2.0 * tp / (2.0 * tp + static_cast<double>(s.fp + s.fn));
  return s;
}

double top_dice(const SampleSet& samples, const Mask& gt, double threshold) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& m : samples.members()) best = std::max(best, dice(binarize(m, threshold), gt));
  return best;
}

TopScores top_scores(const SampleSet& samples, const Mask& gt, double threshold) {
  TopScores t{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  for (const auto& m : samples.members()) {
    const Mask b = binarize(m, threshold);
    t.top_dice = std::max(t.top_dice, dice(b, gt));
    t.top_avd = std::min(t.top_avd, avd_percent(b, gt));
  }
  return t;
}

double ged(const std::vector<Mask>& predicted, const std::vector<Mask>& reference) {
  if (predicted.empty() || reference.empty()) {
    throw Error(ErrorCode::DomainError, "GED needs nonempty sample sets");
  }
  auto distance = [](const Mask& a, const Mask& b) { return 1.0 - iou(a, b); };
  auto self_term = [&](const std::vector<Mask>& set) {
    if (set.size() < 2) return 0.0;
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
      for (std::size_t j = i + 1; j < set.size(); ++j) {
        total += distance(set[i], set[j]);
        ++pairs;
      }
    }
    return total / static_cast<double>(pairs);
  };
  double cross = 0.0;
  for (const auto& p : predicted) {
    for (const auto& r : reference) cross += distance(p, r);
  }
  cross /= static_cast<double>(predicted.size() * reference.size());
  return 2.0 * cross - self_term(reference) - self_term(predicted);
}

double ged(const SampleSet& samples, const SampleSet& gt_set, double threshold) {
  if (!(samples.dims() == gt_set.dims())) {
    throw Error(ErrorCode::DimensionMismatch, "GED sample sets have different dims");
  }
  std::vector<Mask> pred, ref;
  for (const auto& m : samples.members()) pred.push_back(binarize(m, threshold));
  for (const auto& m : gt_set.members()) ref.push_back(binarize(m, threshold));
  return ged(pred, ref);
}

std::optional<double> bessel_std(const std::vector<double>& values) {
  if (values.size() < 2) return std::nullopt;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (n - 1.0));
}

Aggregate aggregate(const std::vector<std::vector<double>>& values) {
  if (values.empty() || values.front().empty()) {
    throw Error(ErrorCode::DegenerateAxis, "aggregate needs a nonempty runs x subjects matrix");
  }
  const std::size_t runs = values.size();
  const std::size_t subjects = values.front().size();
  for (const auto& row : values) {
    if (row.size() != subjects) throw Error(ErrorCode::DimensionMismatch, "ragged metric matrix");
  }
  std::vector<double> run_means(runs, 0.0), subject_means(subjects, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < runs; ++r) {
    for (std::size_t s = 0; s < subjects; ++s) {
      run_means[r] += values[r][s];
      subject_means[s] += values[r][s];
      total += values[r][s];
    }
  }
  for (double& m : run_means) m /= static_cast<double>(subjects);
  for (double& m : subject_means) m /= static_cast<double>(runs);
  Aggregate a;
  a.mean = total / static_cast<double>(runs * subjects);
  a.std_over_runs = bessel_std(run_means);
  a.std_over_subjects = bessel_std(subject_means);
  return a;
}

}  // namespace seguq
