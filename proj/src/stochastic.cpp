#include "seguq/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "seguq/seed.hpp"

namespace seguq {

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Ssn: return "ssn";
    case Provenance::Ensemble: return "ensemble";
    case Provenance::External: return "external";
  }
  return "external";
}

SampleSet::SampleSet(std::vector<ProbMap> members, Provenance provenance)
    : members_(std::move(members)), provenance_(provenance) {
  if (members_.empty()) {
    throw Error(ErrorCode::DomainError, "a sample set needs at least one member");
  }
  for (const auto& m : members_) {
    if (!(m.dims() == members_.front().dims()) || !(m.spacing() == members_.front().spacing())) {
      throw Error(ErrorCode::DimensionMismatch, "sample set members must share dims and spacing");
    }
  }
}

ProbMap SampleSet::mean() const {
  ProbMap out(dims(), spacing(), 0.0);
  for (const auto& m : members_) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += m[i];
  }
  const double inv = 1.0 / static_cast<double>(members_.size());
  for (double& v : out.storage()) v *= inv;
  return out;
}

void LogitModel::validate() const {
  const std::size_t vc = voxels() * classes;
  if (classes < 2 || vc == 0) {
    throw Error(ErrorCode::DimensionMismatch, "logit model needs >= 2 classes and a nonempty grid");
  }
  if (mean.size() != vc) throw Error(ErrorCode::DimensionMismatch, "mean must hold voxels*classes values");
  if (diag.size() != vc) throw Error(ErrorCode::DimensionMismatch, "diag must hold voxels*classes values");
  if (factor.size() != vc * rank) {
    throw Error(ErrorCode::DimensionMismatch, "factor must hold voxels*classes*rank values");
  }
  for (double d : diag) {
    if (!(d >= 0.0)) throw Error(ErrorCode::DomainError, "diag entries must be nonnegative");
  }
}

std::vector<double> draw_logits(const LogitModel& model, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t vc = model.mean.size();
  const std::size_t r = model.rank;
  std::vector<double> low_rank(r);
  for (double& e : low_rank) e = normal(rng);

  std::vector<double> eta(vc);
  for (std::size_t i = 0; i < vc; ++i) {
    const double* row = model.factor.data() + i * r;
    double acc = model.mean[i];
    for (std::size_t k = 0; k < r; ++k) acc += row[k] * low_rank[k];
    eta[i] = acc + std::sqrt(model.diag[i]) * normal(rng);
  }
  return eta;
}

ProbMap softmax_foreground(const LogitModel& model, std::span<const double> logits) {
  const std::size_t c = model.classes;
  ProbMap out(model.dims, model.spacing, 0.0);
  for (std::size_t v = 0; v < out.size(); ++v) {
    const double* z = logits.data() + v * c;
    const double top = *std::max_element(z, z + c);
    double total = 0.0;
    for (std::size_t k = 0; k < c; ++k) total += std::exp(z[k] - top);
    out[v] = std::exp(z[kForegroundChannel] - top) / total;
  }
  return out;
}

SampleSet sample_logits(const LogitModel& model, std::size_t n, std::uint64_t seed) {
  model.validate();
  if (n == 0) throw Error(ErrorCode::DomainError, "sample count must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<ProbMap> members;
  members.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const auto eta = draw_logits(model, rng);
    members.push_back(softmax_foreground(model, eta));
  }
  return SampleSet(std::move(members), Provenance::Ssn);
}

void DirichletField::validate() const {
  if (classes < 2) throw Error(ErrorCode::DimensionMismatch, "dirichlet field needs >= 2 classes");
  if (evidence.size() != dims.size() * classes) {
    throw Error(ErrorCode::DimensionMismatch, "evidence must hold voxels*classes values");
  }
  for (double e : evidence) {
    if (!(e >= 0.0)) throw Error(ErrorCode::DomainError, "evidence must be nonnegative");
  }
}

std::vector<double> DirichletField::concentrations() const {
  std::vector<double> beta(evidence.size());
  std::transform(evidence.begin(), evidence.end(), beta.begin(),
                 [](double e) { return (e + 1.0) * (e + 1.0); });
  return beta;
}

std::vector<double> dirichlet_class_probs(const DirichletField& field) {
  field.validate();
  auto p = field.concentrations();
  const std::size_t c = field.classes;
  for (std::size_t v = 0; v * c < p.size(); ++v) {
    double strength = 0.0;
    for (std::size_t k = 0; k < c; ++k) strength += p[v * c + k];
    for (std::size_t k = 0; k < c; ++k) p[v * c + k] /= strength;
  }
  return p;
}

ProbMap dirichlet_probs(const DirichletField& field) {
  const auto p = dirichlet_class_probs(field);
  ProbMap out(field.dims, field.spacing, 0.0);
  for (std::size_t v = 0; v < out.size(); ++v) out[v] = p[v * field.classes + kForegroundChannel];
  return out;
}

SampleSet mix_ensemble(std::span<const SampleSet> sets, std::size_t draws_per_member,
                       std::uint64_t seed) {
  if (sets.empty()) throw Error(ErrorCode::DomainError, "ensemble needs at least one member");
  if (draws_per_member == 0) throw Error(ErrorCode::DomainError, "draws_per_member must be >= 1");
  std::vector<ProbMap> pooled;
  for (std::size_t m = 0; m < sets.size(); ++m) {
    const SampleSet& set = sets[m];
    if (!(set.dims() == sets.front().dims())) {
      throw Error(ErrorCode::DimensionMismatch, "ensemble members must share dims");
    }
    if (draws_per_member > set.size()) {
      throw Error(ErrorCode::DomainError, "member " + std::to_string(m) + " holds only " +
                                              std::to_string(set.size()) + " samples");
    }
    std::vector<std::size_t> pick(set.size());
    std::iota(pick.begin(), pick.end(), 0);
    if (draws_per_member < set.size()) {
      std::mt19937_64 rng(derive_seed(seed, {m}));
      std::shuffle(pick.begin(), pick.end(), rng);
      pick.resize(draws_per_member);
      std::sort(pick.begin(), pick.end());
    }
    for (std::size_t i : pick) pooled.push_back(set[i]);
  }
  return SampleSet(std::move(pooled), Provenance::Ensemble);
}

double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  if (p == 0.5) return std::numbers::ln2;
  return -(p * std::log(p) + (1.0 - p) * std::log1p(-p));
}

UncertaintyMap predictive_entropy(const ProbMap& p) {
  check_probability(p);
  UncertaintyMap out(p.dims(), p.spacing(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = binary_entropy(p[i]);
  return out;
}

UncertaintyMap predictive_entropy(const SampleSet& samples) {
  return predictive_entropy(samples.mean());
}

SampleSet assemble_3d_samples(const std::map<std::int64_t, std::vector<ProbMap>>& per_slice,
                              double threshold) {
  if (per_slice.empty()) throw Error(ErrorCode::DomainError, "no slices given");
  const auto& first = per_slice.begin()->second;
  const std::size_t n_samples = first.size();
  if (n_samples == 0) throw Error(ErrorCode::RaggedSamples, "slice without samples");
  const Dims slice_dims = first.front().dims();
  const Spacing spacing = first.front().spacing();
  if (slice_dims.nz != 1) throw Error(ErrorCode::DimensionMismatch, "slice samples must have nz == 1");

  const std::size_t plane = slice_dims.nx * slice_dims.ny;
  const Dims out_dims{slice_dims.nx, slice_dims.ny, per_slice.size()};
  std::vector<ProbMap> out(n_samples, ProbMap(out_dims, spacing, 0.0));

  std::size_t z = 0;
  for (const auto& [key, samples] : per_slice) {
    if (samples.size() != n_samples) {
      throw Error(ErrorCode::RaggedSamples, "slice " + std::to_string(key) + " has " +
                                                std::to_string(samples.size()) + " samples, expected " +
                                                std::to_string(n_samples));
    }
    std::vector<std::size_t> volume(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s) {
      if (!(samples[s].dims() == slice_dims)) {
        throw Error(ErrorCode::DimensionMismatch, "slice samples must share dims");
      }
      volume[s] = count(binarize(samples[s], threshold));
    }
    std::vector<std::size_t> order(n_samples);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return volume[a] > volume[b]; });
    for (std::size_t rank = 0; rank < n_samples; ++rank) {
      const auto& src = samples[order[rank]].storage();
      std::copy(src.begin(), src.end(), out[rank].storage().begin() + static_cast<std::ptrdiff_t>(z * plane));
    }
    ++z;
  }
  return SampleSet(std::move(out), Provenance::External);
}

}  // namespace seguq
