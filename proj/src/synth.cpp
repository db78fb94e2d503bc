#include "seguq/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "seguq/seed.hpp"

namespace seguq::synth {

void SynthSpec::validate() const {
  if (dims.size() == 0) throw Error(ErrorCode::SpecError, "dims must be positive");
  if (!(spacing.sx > 0 && spacing.sy > 0 && spacing.sz > 0)) {
    throw Error(ErrorCode::SpecError, "spacing must be positive");
  }
  for (double r : brain_radii_mm) {
    if (!(r > 0)) throw Error(ErrorCode::SpecError, "brain radii must be positive");
  }
  for (double r : ventricle_radii_mm) {
    if (!(r > 0)) throw Error(ErrorCode::SpecError, "ventricle radii must be positive");
  }
  if (!(lesion_radius_min_mm > 0) || lesion_radius_max_mm < lesion_radius_min_mm) {
    throw Error(ErrorCode::SpecError, "lesion radius range must be positive and ordered");
  }
  if (!(noise >= 0) || !(logit_margin > 0)) throw Error(ErrorCode::SpecError, "noise/margin out of range");
}

int fazekas_score(double volume_mm3) {
  int score = 0;
  for (double edge : kFazekasVolumeEdges) {
    if (volume_mm3 >= edge) ++score;
  }
  return score;
}

FazekasProxy fazekas_proxy(const Mask& lesions, const RingPartition& rings) {
  require_same_dims(lesions, rings.labels, "fazekas_proxy: dims differ");
  double pv = 0.0, deep = 0.0;
  const double voxel = lesions.spacing().voxel_volume();
  for (std::size_t i = 0; i < lesions.size(); ++i) {
    if (!lesions[i]) continue;
    const auto ring = rings.labels[i];
    if (ring == 0 || ring == 1) pv += voxel;
    if (ring == 2 || ring == 3) deep += voxel;
  }
  return {fazekas_score(deep), fazekas_score(pv)};
}

namespace {

std::array<double, 3> centre_mm(const SynthSpec& s) {
  return {0.5 * static_cast<double>(s.dims.nx - 1) * s.spacing.sx,
          0.5 * static_cast<double>(s.dims.ny - 1) * s.spacing.sy,
          0.5 * static_cast<double>(s.dims.nz - 1) * s.spacing.sz};
}

std::array<double, 3> position_mm(const Mask& g, std::size_t i) {
  const auto c = g.coords(i);
  return {static_cast<double>(c[0]) * g.spacing().sx, static_cast<double>(c[1]) * g.spacing().sy,
          static_cast<double>(c[2]) * g.spacing().sz};
}

Mask ellipsoid(const SynthSpec& s, const std::array<double, 3>& centre, const std::array<double, 3>& radii) {
  Mask m(s.dims, s.spacing, std::uint8_t{0});
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto p = position_mm(m, i);
    double r2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double d = (p[a] - centre[a]) / radii[a];
      r2 += d * d;
    }
    m[i] = r2 <= 1.0 ? 1 : 0;
  }
  return m;
}

// Grows ellipsoidal lesions inside a chosen ring.
class LesionPlacer {
 public:
  LesionPlacer(const SynthSpec& spec, const Mask& ventricles, const RingPartition& rings, std::uint64_t seed)
      : spec_(spec), ventricles_(ventricles), rings_(rings), lesions_(spec.dims, spec.spacing, std::uint8_t{0}),
        rng_(seed) {
    for (std::size_t i = 0; i < ventricles.size(); ++i) {
      const auto ring = rings.labels[i];
      if (ring != kOutsideBrain && !ventricles[i]) eligible_[static_cast<std::size_t>(ring)].push_back(i);
    }
  }

  std::size_t capacity(std::size_t ring) const { return eligible_[ring].size(); }

  void place(std::size_t ring) {
    const auto& pool = eligible_[ring];
    if (pool.empty()) throw Error(ErrorCode::SpecError, "ring " + std::to_string(ring) + " has no room for lesions");
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::uniform_real_distribution<double> radius(spec_.lesion_radius_min_mm, spec_.lesion_radius_max_mm);
    const auto centre = position_mm(lesions_, pool[pick(rng_)]);
    const std::array<double, 3> radii{radius(rng_), radius(rng_), radius(rng_)};
    const std::array<double, 3> pitch{spec_.spacing.sx, spec_.spacing.sy, spec_.spacing.sz};
    const std::array<std::size_t, 3> extent{spec_.dims.nx, spec_.dims.ny, spec_.dims.nz};
    std::array<std::size_t, 3> lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
      const double from = std::floor((centre[a] - radii[a]) / pitch[a]);
      const double to = std::ceil((centre[a] + radii[a]) / pitch[a]);
      lo[a] = static_cast<std::size_t>(std::max(0.0, from));
      hi[a] = std::min(extent[a] - 1, static_cast<std::size_t>(std::max(0.0, to)));
    }
    const auto target = static_cast<std::int8_t>(ring);
    for (std::size_t z = lo[2]; z <= hi[2]; ++z) {
      for (std::size_t y = lo[1]; y <= hi[1]; ++y) {
        for (std::size_t x = lo[0]; x <= hi[0]; ++x) {
          const std::size_t i = lesions_.index(x, y, z);
          if (rings_.labels[i] != target || ventricles_[i]) continue;
          const auto p = position_mm(lesions_, i);
          double r2 = 0.0;
          for (int a = 0; a < 3; ++a) {
            const double d = (p[a] - centre[a]) / radii[a];
            r2 += d * d;
          }
          if (r2 <= 1.0) lesions_[i] = 1;
        }
      }
    }
  }

  double region_volume(std::size_t first_ring, std::size_t last_ring) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < lesions_.size(); ++i) {
      const auto ring = rings_.labels[i];
      if (lesions_[i] && ring >= static_cast<std::int8_t>(first_ring) && ring <= static_cast<std::int8_t>(last_ring)) ++n;
    }
    return static_cast<double>(n) * spec_.spacing.voxel_volume();
  }

  std::mt19937_64& rng() { return rng_; }
  const Mask& lesions() const { return lesions_; }

 private:
  const SynthSpec& spec_;
  const Mask& ventricles_;
  const RingPartition& rings_;
  Mask lesions_;
  std::array<std::vector<std::size_t>, kRingCount> eligible_;
  std::mt19937_64 rng_;
};

LogitModel build_logits(const SynthSpec& spec, const Mask& brain, const Mask& lesions) {
  LogitModel model;
  model.dims = spec.dims;
  model.spacing = spec.spacing;
  model.classes = 2;
  model.rank = spec.rank;
  const std::size_t v_count = spec.dims.size();
  model.mean.assign(2 * v_count, 0.0);
  model.diag.assign(2 * v_count, 0.0);
  model.factor.assign(2 * v_count * spec.rank, 0.0);
  for (std::size_t v = 0; v < v_count; ++v) {
    model.mean[2 * v + kForegroundChannel] = lesions[v] ? spec.logit_margin : -spec.logit_margin;
  }
  if (spec.noise == 0.0) return model;

  std::mt19937_64 rng(derive_seed(spec.seed, {1}));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::size_t> lesion_voxels, brain_voxels;
  for (std::size_t v = 0; v < v_count; ++v) {
    if (lesions[v]) lesion_voxels.push_back(v);
    if (brain[v]) brain_voxels.push_back(v);
  }
  constexpr double kBumpWidthMm = 3.0;
  for (std::size_t r = 0; r < spec.rank; ++r) {
    const auto& pool = (r % 2 == 0 && !lesion_voxels.empty()) ? lesion_voxels : brain_voxels;
    if (pool.empty()) break;
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    const auto centre = position_mm(brain, pool[pick(rng)]);
    const double shift = normal(rng);
    for (std::size_t v = 0; v < v_count; ++v) {
      const auto p = position_mm(brain, v);
      double d2 = 0.0;
      for (int a = 0; a < 3; ++a) d2 += (p[a] - centre[a]) * (p[a] - centre[a]);
      const double bump = std::exp(-d2 / (2.0 * kBumpWidthMm * kBumpWidthMm));
      const double amplitude = spec.noise * spec.logit_margin * bump;
      model.factor[(2 * v + kForegroundChannel) * spec.rank + r] = amplitude;
      model.mean[2 * v + kForegroundChannel] += 0.5 * shift * amplitude;
    }
  }
  const double jitter = 0.5 * spec.noise;
  for (std::size_t v = 0; v < v_count; ++v) model.diag[2 * v + kForegroundChannel] = jitter * jitter;
  return model;
}

SynthCase assemble(const SynthSpec& spec, Mask brain, Mask ventricles, Mask lesions, const RingPartition& rings) {
  SynthCase out{std::move(brain), std::move(ventricles), std::move(lesions), {}, {}};
  out.logits = build_logits(spec, out.brain, out.lesions);
  out.fazekas = fazekas_proxy(out.lesions, rings);
  return out;
}

}  // namespace

Mask brain_mask(const SynthSpec& spec) { return ellipsoid(spec, centre_mm(spec), spec.brain_radii_mm); }

Mask ventricle_mask(const SynthSpec& spec) {
  auto c = centre_mm(spec);
  for (int a = 0; a < 3; ++a) c[a] += spec.ventricle_offset_mm[a];
  Mask v = ellipsoid(spec, c, spec.ventricle_radii_mm);
  const Mask brain = brain_mask(spec);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = v[i] && brain[i];
  return v;
}

SynthCase generate(const SynthSpec& spec) {
  spec.validate();
  Mask brain = brain_mask(spec);
  Mask ventricles = ventricle_mask(spec);
  const RingPartition rings = ring_partition(ventricles, brain);
  LesionPlacer placer(spec, ventricles, rings, derive_seed(spec.seed, {0}));
  for (std::size_t r = 0; r < kRingCount; ++r) {
    if (spec.lesions_per_ring[r] > placer.capacity(r)) {
      throw Error(ErrorCode::SpecError, "ring " + std::to_string(r) + " cannot hold " +
                                            std::to_string(spec.lesions_per_ring[r]) + " lesions");
    }
    for (std::size_t n = 0; n < spec.lesions_per_ring[r]; ++n) placer.place(r);
  }
  Mask lesions = placer.lesions();
  return assemble(spec, std::move(brain), std::move(ventricles), std::move(lesions), rings);
}

std::vector<CohortSubject> generate_cohort(const CohortSpec& cohort) {
  cohort.base.validate();
  // Volume bands (mm^3) well inside each proxy score interval.
  constexpr std::array<std::array<double, 2>, 4> kBands{{{0.0, 0.0}, {40.0, 110.0}, {200.0, 420.0}, {620.0, 1000.0}}};
  constexpr std::size_t kMaxAttempts = 200;

  std::vector<CohortSubject> out;
  for (std::size_t s = 0; s < cohort.subjects; ++s) {
    std::mt19937_64 rng(derive_seed(cohort.seed, {s}));
    std::uniform_int_distribution<int> score(0, 3);
    const int deep_target = score(rng);
    const int pv_target = score(rng);
    std::uniform_real_distribution<double> jitter(0.85, 1.15);

    SynthSpec spec = cohort.base;
    spec.seed = derive_seed(cohort.seed, {s, 1});
    for (double& r : spec.ventricle_radii_mm) r *= jitter(rng);
    spec.lesions_per_ring = {0, 0, 0, 0};
    Mask brain = brain_mask(spec);
    Mask ventricles = ventricle_mask(spec);
    const RingPartition rings = ring_partition(ventricles, brain);

    bool placed = false;
    for (std::size_t attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      LesionPlacer placer(spec, ventricles, rings, derive_seed(spec.seed, {attempt}));
      auto grow = [&](std::size_t first, std::size_t last, int target) {
        const auto& band = kBands[static_cast<std::size_t>(target)];
        std::uniform_int_distribution<std::size_t> ring(first, last);
        while (placer.region_volume(first, last) < band[0]) placer.place(ring(placer.rng()));
        return placer.region_volume(first, last) <= band[1];
      };
      if (grow(0, 1, pv_target) && grow(2, 3, deep_target)) {
        Mask lesions = placer.lesions();
        out.push_back({"sub-" + std::to_string(1000 + s).substr(1), spec,
                       assemble(spec, brain, ventricles, std::move(lesions), rings)});
        placed = true;
      }
    }
    if (!placed) throw Error(ErrorCode::SpecError, "could not place lesions for subject " + std::to_string(s));
  }
  return out;
}

std::string to_json(const SynthSpec& s) {
  nlohmann::ordered_json j;
  j["dims"] = {s.dims.nx, s.dims.ny, s.dims.nz};
  j["spacing"] = {s.spacing.sx, s.spacing.sy, s.spacing.sz};
  j["brain_radii_mm"] = s.brain_radii_mm;
  j["ventricle_radii_mm"] = s.ventricle_radii_mm;
  j["ventricle_offset_mm"] = s.ventricle_offset_mm;
  j["lesions_per_ring"] = s.lesions_per_ring;
  j["lesion_radius_mm"] = {s.lesion_radius_min_mm, s.lesion_radius_max_mm};
  j["logit_margin"] = s.logit_margin;
  j["noise"] = s.noise;
  j["rank"] = s.rank;
  j["seed"] = s.seed;
  return j.dump(2);
}

SynthSpec spec_from_json(const std::string& text) {
  SynthSpec s;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.contains("dims")) {
      const auto d = j["dims"].get<std::array<std::size_t, 3>>();
      s.dims = {d[0], d[1], d[2]};
    }
    if (j.contains("spacing")) {
      const auto sp = j["spacing"].get<std::array<double, 3>>();
      s.spacing = {sp[0], sp[1], sp[2]};
    }
    if (j.contains("brain_radii_mm")) s.brain_radii_mm = j["brain_radii_mm"].get<std::array<double, 3>>();
    if (j.contains("ventricle_radii_mm")) s.ventricle_radii_mm = j["ventricle_radii_mm"].get<std::array<double, 3>>();
    if (j.contains("ventricle_offset_mm")) s.ventricle_offset_mm = j["ventricle_offset_mm"].get<std::array<double, 3>>();
    if (j.contains("lesions_per_ring")) s.lesions_per_ring = j["lesions_per_ring"].get<std::array<std::size_t, 4>>();
    if (j.contains("lesion_radius_mm")) {
      const auto r = j["lesion_radius_mm"].get<std::array<double, 2>>();
      s.lesion_radius_min_mm = r[0];
      s.lesion_radius_max_mm = r[1];
    }
    if (j.contains("logit_margin")) s.logit_margin = j["logit_margin"].get<double>();
    if (j.contains("noise")) s.noise = j["noise"].get<double>();
    if (j.contains("rank")) s.rank = j["rank"].get<std::size_t>();
    if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SpecError, std::string("bad synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

}  // namespace seguq::synth
