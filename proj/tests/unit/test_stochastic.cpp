#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "seguq/stochastic.hpp"

using namespace seguq;

namespace {

LogitModel small_model(std::size_t rank) {
  LogitModel m;
  m.dims = {2, 1, 1};
  m.classes = 2;
  m.rank = rank;
  m.mean = {0.3, -0.2, 1.0, 0.5};
  m.diag = {0.0, 0.0, 0.0, 0.0};
  m.factor.assign(4 * rank, 0.0);
  return m;
}

}  // namespace

TEST_CASE("degenerate Gaussian gives softmax of the mean") {
  const LogitModel m = small_model(0);
  const SampleSet s = sample_logits(m, 4, 9);
  CHECK(s.size() == 4);
  CHECK(s.provenance() == Provenance::Ssn);
  const double p0 = 1.0 / (1.0 + std::exp(0.3 - (-0.2)));
  const double p1 = 1.0 / (1.0 + std::exp(1.0 - 0.5));
  for (const auto& member : s.members()) {
    CHECK(member[0] == doctest::Approx(p0).epsilon(1e-15));
    CHECK(member[1] == doctest::Approx(p1).epsilon(1e-15));
  }
}

TEST_CASE("default sample count") { CHECK(defaults::kSamples == 10); }

TEST_CASE("logit covariance matches P P^T + D") {
  LogitModel m = small_model(1);
  m.factor = {0.8, -0.5, 0.3, 1.1};
  m.diag = {0.2, 0.4, 0.1, 0.3};
  const std::size_t n = 100000;
  std::mt19937_64 rng(42);
  std::vector<double> sum(4, 0.0), sum2(16, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const auto eta = draw_logits(m, rng);
    for (std::size_t i = 0; i < 4; ++i) {
      sum[i] += eta[i];
      for (std::size_t j = 0; j < 4; ++j) sum2[i * 4 + j] += eta[i] * eta[j];
    }
  }
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      const double cov = sum2[i * 4 + j] / n - (sum[i] / n) * (sum[j] / n);
      const double expected = m.factor[i] * m.factor[j] + (i == j ? m.diag[i] : 0.0);
      if (std::abs(expected) > 0.01) CHECK(std::abs(cov - expected) / std::abs(expected) < 0.05);
    }
  }
}

TEST_CASE("seeded sampling is reproducible and seed sensitive") {
  LogitModel m = small_model(1);
  m.factor = {0.8, -0.5, 0.3, 1.1};
  m.diag = {0.2, 0.4, 0.1, 0.3};
  const auto a = sample_logits(m, 5, 123);
  const auto b = sample_logits(m, 5, 123);
  const auto c = sample_logits(m, 5, 124);
  bool differs = false;
  for (std::size_t s = 0; s < 5; ++s) {
    CHECK(a[s].storage() == b[s].storage());
    differs = differs || a[s].storage() != c[s].storage();
  }
  CHECK(differs);
}

TEST_CASE("invalid logit models are rejected") {
  LogitModel m = small_model(0);
  m.diag[0] = -1.0;
  CHECK_THROWS_AS(sample_logits(m, 2, 0), Error);
  LogitModel short_mean = small_model(0);
  short_mean.mean.pop_back();
  CHECK_THROWS_AS(short_mean.validate(), Error);
}

TEST_CASE("Dirichlet probabilities") {
  DirichletField zero;
  zero.dims = {2, 1, 1};
  zero.classes = 2;
  zero.evidence.assign(4, 0.0);
  const auto fg = dirichlet_probs(zero);
  for (double p : fg.storage()) CHECK(p == 0.5);

  DirichletField one;
  one.dims = {1, 1, 1};
  one.classes = 2;
  one.evidence = {3.0, 0.0};
  const auto alpha = one.concentrations();
  CHECK(alpha[0] == 16.0);
  CHECK(alpha[1] == 1.0);
  CHECK(dirichlet_probs(one)[0] == doctest::Approx(1.0 / 17.0).epsilon(1e-15));

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> e(0.0, 4.0);
  DirichletField r;
  r.dims = {3, 2, 1};
  r.classes = 3;
  for (int i = 0; i < 18; ++i) r.evidence.push_back(e(rng));
  const auto probs = dirichlet_class_probs(r);
  for (std::size_t v = 0; v < 6; ++v) {
    CHECK(probs[3 * v] + probs[3 * v + 1] + probs[3 * v + 2] == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("ensemble mixing") {
  std::mt19937_64 rng(2);
  std::vector<SampleSet> sets;
  for (int m = 0; m < 3; ++m) {
    std::vector<ProbMap> members;
    for (int s = 0; s < 4; ++s) members.push_back(oracle::random_field({4, 4, 4}, 0.0, 1.0, rng));
    sets.emplace_back(std::move(members), Provenance::Ssn);
  }
  const auto single = mix_ensemble(std::span<const SampleSet>(sets.data(), 1), 4, 0);
  for (std::size_t s = 0; s < 4; ++s) CHECK(single[s].storage() == sets[0][s].storage());

  const auto pooled = mix_ensemble(sets, 4, 0);
  CHECK(pooled.size() == 12);
  CHECK(pooled.provenance() == Provenance::Ensemble);
  const auto mean = pooled.mean();
  for (std::size_t i = 0; i < mean.size(); ++i) {
    double avg = 0.0;
    for (const auto& set : sets) avg += set.mean()[i];
    CHECK(std::abs(mean[i] - avg / 3.0) < 1e-12);
  }
  const auto one_each = mix_ensemble(sets, 1, 5);
  CHECK(one_each.size() == 3);
  CHECK_THROWS_AS(mix_ensemble(sets, 5, 0), Error);
}

TEST_CASE("predictive entropy") {
  CHECK(binary_entropy(0.5) == std::log(2.0));
  CHECK(binary_entropy(0.0) == 0.0);
  CHECK(binary_entropy(1.0) == 0.0);
  ProbMap a({1, 1, 1}, {}, 0.2), b({1, 1, 1}, {}, 0.6);
  const SampleSet s({a, b});
  const double expected = -0.4 * std::log(0.4) - 0.6 * std::log(0.6);
  CHECK(predictive_entropy(s)[0] == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("sample sets require matching members") {
  CHECK_THROWS_AS(SampleSet(std::vector<ProbMap>{}), Error);
  CHECK_THROWS_AS(SampleSet({ProbMap({1, 1, 1}, {}, 0.0), ProbMap({2, 1, 1}, {}, 0.0)}), Error);
}

TEST_CASE("3D assembly from 2D slice samples") {
  auto slice = [](std::vector<double> v) { return ProbMap({static_cast<std::size_t>(v.size()), 1, 1}, {}, v); };
  std::map<std::int64_t, std::vector<ProbMap>> per_slice;
  // slice 0: sample volumes 3 and 1; slice 1: volumes 2 and 5
  per_slice[0] = {slice({1, 1, 1, 0, 0}), slice({1, 0, 0, 0, 0})};
  per_slice[1] = {slice({1, 1, 0, 0, 0}), slice({1, 1, 1, 1, 1})};
  const auto set = assemble_3d_samples(per_slice);
  REQUIRE(set.size() == 2);
  CHECK(set.dims() == Dims{5, 1, 2});
  auto volume = [](const ProbMap& m, std::size_t z) {
    int v = 0;
    for (std::size_t x = 0; x < 5; ++x) v += m.at(x, 0, z) >= 0.5;
    return v;
  };
  CHECK(volume(set[0], 0) == 3);
  CHECK(volume(set[0], 1) == 5);
  CHECK(volume(set[1], 0) == 1);
  CHECK(volume(set[1], 1) == 2);

  per_slice[1].pop_back();
  CHECK_THROWS_AS(assemble_3d_samples(per_slice), Error);

  std::map<std::int64_t, std::vector<ProbMap>> single;
  single[4] = {slice({0.2, 0.9})};
  single[2] = {slice({0.7, 0.1})};
  const auto stacked = assemble_3d_samples(single);
  CHECK(stacked[0].at(0, 0, 0) == 0.7);
  CHECK(stacked[0].at(1, 0, 1) == 0.9);
}
