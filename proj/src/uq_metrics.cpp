#include "seguq/uq_metrics.hpp"

#include <algorithm>
#include <numbers>

#include "seguq/seg_metrics.hpp"

namespace seguq {

Mask error_map(const Mask& pred, const Mask& gt) {
  require_same_dims(pred, gt, "error_map: masks have different dims");
  Mask e(pred.dims(), pred.spacing(), std::uint8_t{0});
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = (pred[i] != 0) != (gt[i] != 0) ? 1 : 0;
  return e;
}

Mask error_map(const SampleSet& samples, const Mask& gt, double threshold) {
  return error_map(binarize(samples.mean(), threshold), gt);
}

double sueo(const UncertaintyMap& u, const Mask& errors) {
  require_same_dims(u, errors, "sueo: dims differ");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double e = errors[i] ? 1.0 : 0.0;
    num += e * u[i];
    den += e * e + u[i] * u[i];
  }
  if (den == 0.0) throw Error(ErrorCode::Degenerate, "sUEO undefined: no error and no uncertainty");
  return 2.0 * num / den;
}

double ueo(const UncertaintyMap& u, const Mask& errors, double tau) {
  require_same_dims(u, errors, "ueo: dims differ");
  return dice(binarize(u, tau), errors);
}

namespace {

struct Window {
  std::size_t x0, y0, z0, x1, y1, z1;  // half-open
};

std::vector<Window> patch_windows(const Dims& d, std::size_t patch, PatchMode mode) {
  auto starts = [&](std::size_t n) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (mode == PatchMode::Tiling) {
      for (std::size_t s = 0; s < n; s += patch) out.emplace_back(s, std::min(n, s + patch));
    } else {
      const std::size_t extent = std::min(patch, n);
      for (std::size_t s = 0; s + extent <= n; ++s) out.emplace_back(s, s + extent);
    }
    return out;
  };
  const auto xs = starts(d.nx), ys = starts(d.ny), zs = starts(d.nz);
  std::vector<Window> out;
  out.reserve(xs.size() * ys.size() * zs.size());
  for (const auto& [z0, z1] : zs) {
    for (const auto& [y0, y1] : ys) {
      for (const auto& [x0, x1] : xs) out.push_back({x0, y0, z0, x1, y1, z1});
    }
  }
  return out;
}

}  // namespace

PatchTable build_patch_table(const Mask& pred, const Mask& gt, const UncertaintyMap& u,
                             std::size_t patch, double accuracy_threshold, PatchMode mode) {
  require_same_dims(pred, gt, "patch metrics: pred/gt dims differ");
  require_same_dims(pred, u, "patch metrics: pred/uncertainty dims differ");
  if (patch == 0) throw Error(ErrorCode::DomainError, "patch size must be positive");
  PatchTable table;
  table.patch = patch;
  table.accuracy_threshold = accuracy_threshold;
  table.mode = mode;
  for (const Window& w : patch_windows(pred.dims(), patch, mode)) {
    std::size_t correct = 0, total = 0;
    double u_sum = 0.0;
    for (std::size_t z = w.z0; z < w.z1; ++z) {
      for (std::size_t y = w.y0; y < w.y1; ++y) {
        for (std::size_t x = w.x0; x < w.x1; ++x) {
          const std::size_t i = pred.index(x, y, z);
          correct += (pred[i] != 0) == (gt[i] != 0);
          u_sum += u[i];
          ++total;
        }
      }
    }
    const double n = static_cast<double>(total);
    table.accurate.push_back(static_cast<double>(correct) / n >= accuracy_threshold);
    table.mean_uncertainty.push_back(u_sum / n);
  }
  return table;
}

PatchStats evaluate_patches(const PatchTable& table, double tau) {
  PatchStats s;
  for (std::size_t k = 0; k < table.accurate.size(); ++k) {
    const bool uncertain = table.mean_uncertainty[k] >= tau;
    if (table.accurate[k]) {
      (uncertain ? s.n_au : s.n_ac) += 1;
    } else {
      (uncertain ? s.n_ui : s.n_ci) += 1;
    }
  }
  auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  s.p_acc_given_cert = ratio(s.n_ac, s.n_ac + s.n_ci);
  s.p_uncert_given_inacc = ratio(s.n_ui, s.n_ui + s.n_ci);
  s.pavpu = ratio(s.n_ac + s.n_ui, s.total());
  return s;
}

PatchStats patch_metrics(const Mask& pred, const Mask& gt, const UncertaintyMap& u, double tau,
                         std::size_t patch, double accuracy_threshold, PatchMode mode) {
  return evaluate_patches(build_patch_table(pred, gt, u, patch, accuracy_threshold, mode), tau);
}

LesionCoverage lesion_coverage(const Mask& pred, const ComponentLabeling& gt_components,
                               const UncertaintyMap& u, double tau) {
  require_same_dims(pred, gt_components.labels, "lesion coverage: dims differ");
  require_same_dims(pred, u, "lesion coverage: dims differ");
  LesionCoverage out;
  double coverage_sum = 0.0;
  std::size_t coverage_n = 0;
  std::size_t strict_missed = 0, relaxed_missed = 0;
  double strict_size = 0.0, relaxed_size = 0.0;
  for (const Component& c : gt_components.components) {
    LesionRecord r;
    r.size = c.size();
    for (std::size_t i : c.voxels) {
      const bool seg = pred[i] != 0;
      const bool unc = u[i] >= tau;
      r.segmented += seg;
      r.uncertain += unc;
      r.unsegmented_uncertain += !seg && unc;
    }
    const std::size_t unsegmented = r.size - r.segmented;
    if (unsegmented > 0) {
      coverage_sum += static_cast<double>(r.unsegmented_uncertain) / static_cast<double>(unsegmented);
      ++coverage_n;
    }
    if (r.segmented == 0) ++out.unsegmented;
    const double needed = std::min(defaults::kUndetectedFraction * static_cast<double>(r.size),
                                   defaults::kUndetectedVoxels);
    r.detected_strict = r.segmented > 0 || r.uncertain > 0;
    r.detected_relaxed = r.segmented > 0 || static_cast<double>(r.uncertain) >= needed;
    if (!r.detected_strict) {
      ++strict_missed;
      strict_size += static_cast<double>(r.size);
    }
    if (!r.detected_relaxed) {
      ++relaxed_missed;
      relaxed_size += static_cast<double>(r.size);
    }
    out.lesions.push_back(r);
  }
  const auto n = static_cast<double>(out.lesions.size());
  if (coverage_n > 0) out.coverage = coverage_sum / static_cast<double>(coverage_n);
  if (!out.lesions.empty()) {
    out.undetected_strict = static_cast<double>(strict_missed) / n;
    out.undetected_relaxed = static_cast<double>(relaxed_missed) / n;
  }
  if (strict_missed > 0) out.undetected_strict_mean_size = strict_size / static_cast<double>(strict_missed);
  if (relaxed_missed > 0) out.undetected_relaxed_mean_size = relaxed_size / static_cast<double>(relaxed_missed);
  return out;
}

LesionCoverage lesion_coverage(const Mask& pred, const Mask& gt, const UncertaintyMap& u, double tau,
                               Connectivity connectivity) {
  require_same_dims(pred, gt, "lesion coverage: dims differ");
  return lesion_coverage(pred, connected_components(gt, connectivity), u, tau);
}

std::vector<SweepRow> uq_sweep(const Mask& pred, const Mask& gt, const UncertaintyMap& u,
                               const std::vector<double>& taus, Connectivity connectivity,
                               std::size_t patch, double accuracy_threshold, PatchMode mode) {
  const Mask errors = error_map(pred, gt);
  const PatchTable table = build_patch_table(pred, gt, u, patch, accuracy_threshold, mode);
  const ComponentLabeling gt_cc = connected_components(gt, connectivity);
  std::vector<SweepRow> rows;
  rows.reserve(taus.size());
  for (double tau : taus) {
    rows.push_back({tau, ueo(u, errors, tau), evaluate_patches(table, tau),
                    lesion_coverage(pred, gt_cc, u, tau)});
  }
  return rows;
}

std::vector<double> tau_grid(std::size_t n) {
  if (n == 0) return {};
  if (n == 1) return {0.0};
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::numbers::ln2 * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  out.back() = std::numbers::ln2;
  return out;
}

}  // namespace seguq
