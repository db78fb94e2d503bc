#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seguq/grid.hpp"
#include "seguq/ring_features.hpp"
#include "seguq/stochastic.hpp"

namespace seguq::synth {

struct SynthSpec {
  Dims dims{40, 40, 28};
  Spacing spacing{1.2, 1.2, 2.0};
  std::array<double, 3> brain_radii_mm{22.0, 22.0, 26.0};  // centred ellipsoid
  std::array<double, 3> ventricle_radii_mm{4.0, 7.0, 6.0};
  std::array<double, 3> ventricle_offset_mm{0.0, 0.0, 0.0};  // from the grid centre
  std::array<std::size_t, kRingCount> lesions_per_ring{0, 0, 0, 0};
  double lesion_radius_min_mm = 1.0;
  double lesion_radius_max_mm = 2.5;
  double logit_margin = 4.0;  // |foreground logit| of the noise-free mean
  double noise = 0.0;         // scale of mean perturbation and low-rank factor
  std::size_t rank = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

// Ordinal 0-3 proxy of the Fazekas score from ground-truth lesion volume:
// periventricular = rings 0-1 (< 10 mm), deep = rings 2-3 (>= 10 mm).
// Score by volume in mm^3: < 20 -> 0 (absent or minimal), < 150 -> 1,
// < 500 -> 2, otherwise 3.
struct FazekasProxy {
  int deep = 0;
  int pv = 0;
};

inline constexpr std::array<double, 3> kFazekasVolumeEdges{20.0, 150.0, 500.0};

int fazekas_score(double volume_mm3);
FazekasProxy fazekas_proxy(const Mask& lesions, const RingPartition& rings);

struct SynthCase {
  Mask brain;
  Mask ventricles;
  Mask lesions;
  LogitModel logits;
  FazekasProxy fazekas;
};

// Reproducible under spec.seed. Lesions are ellipsoids clipped to their
// target ring outside the ventricles. Throws SpecError when a ring cannot hold
// the requested lesions.
SynthCase generate(const SynthSpec& spec);

// Brain and ventricle masks only.
Mask brain_mask(const SynthSpec& spec);
Mask ventricle_mask(const SynthSpec& spec);

struct CohortSpec {
  SynthSpec base;
  std::size_t subjects = 120;
  std::uint64_t seed = 0;
};

struct CohortSubject {
  std::string id;
  SynthSpec spec;  // per-subject anatomy and logit settings; lesions_per_ring unused
  SynthCase data;
};

// Each subject draws target scores uniformly in 0..3 for both regions and
// grows lesions until the ring volumes land inside the score band, away from
// its edges, so the proxy is learnable from the maps.
std::vector<CohortSubject> generate_cohort(const CohortSpec& spec);

std::string to_json(const SynthSpec& spec);
SynthSpec spec_from_json(const std::string& text);

}  // namespace seguq::synth
