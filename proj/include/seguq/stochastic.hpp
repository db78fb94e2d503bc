#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "seguq/defaults.hpp"
#include "seguq/grid.hpp"

namespace seguq {

// Binary task: channel 1 is the lesion class.
inline constexpr std::size_t kForegroundChannel = 1;

enum class Provenance { Ssn, Ensemble, External };

std::string_view to_string(Provenance p);

// An ordered set of foreground probability maps from one stochastic model.
class SampleSet {
 public:
  SampleSet(std::vector<ProbMap> members, Provenance provenance = Provenance::External);

  std::size_t size() const noexcept { return members_.size(); }
  const ProbMap& operator[](std::size_t i) const noexcept { return members_[i]; }
  const std::vector<ProbMap>& members() const noexcept { return members_; }
  Provenance provenance() const noexcept { return provenance_; }
  const Dims& dims() const noexcept { return members_.front().dims(); }
  const Spacing& spacing() const noexcept { return members_.front().spacing(); }

  ProbMap mean() const;

 private:
  std::vector<ProbMap> members_;
  Provenance provenance_;
};

// Per-voxel class logits ~ N(mean, factor * factor^T + diag(diag)).
// Flat layouts: mean and diag are indexed v * classes + c; factor is
// ((v * classes + c) * rank + r).
struct LogitModel {
  Dims dims;
  Spacing spacing;
  std::size_t classes = 2;
  std::size_t rank = 0;
  std::vector<double> mean;
  std::vector<double> factor;
  std::vector<double> diag;

  std::size_t voxels() const noexcept { return dims.size(); }
  void validate() const;
};

// One joint logit draw, length voxels * classes.
std::vector<double> draw_logits(const LogitModel& model, std::mt19937_64& rng);

// Softmax over the classes of each voxel, returning the foreground channel.
ProbMap softmax_foreground(const LogitModel& model, std::span<const double> logits);

SampleSet sample_logits(const LogitModel& model, std::size_t n = defaults::kSamples,
                        std::uint64_t seed = 0);

// Evidence e >= 0 per voxel and class; concentrations are (e + 1)^2.
struct DirichletField {
  Dims dims;
  Spacing spacing;
  std::size_t classes = 2;
  std::vector<double> evidence;

  std::vector<double> concentrations() const;
  void validate() const;
};

// beta / S per class, flat voxels * classes.
std::vector<double> dirichlet_class_probs(const DirichletField& field);
ProbMap dirichlet_probs(const DirichletField& field);

// Pools draws_per_member samples from each member set. When a member holds
// more samples than requested, a seeded subset is taken in original order.
SampleSet mix_ensemble(std::span<const SampleSet> sets,
                       std::size_t draws_per_member = defaults::kEnsembleDrawsPerMember,
                       std::uint64_t seed = 0);

double binary_entropy(double p);
UncertaintyMap predictive_entropy(const ProbMap& p);
UncertaintyMap predictive_entropy(const SampleSet& samples);

// Builds 3D samples from per-slice 2D samples (nz == 1 each). Within every
// slice the samples are ranked by foreground volume (voxels >= threshold),
// largest first, ties by original index; 3D sample n stacks the rank-n slice
// samples in ascending slice-key order.
SampleSet assemble_3d_samples(const std::map<std::int64_t, std::vector<ProbMap>>& per_slice,
                              double threshold = defaults::kBinarizeThreshold);

}  // namespace seguq
