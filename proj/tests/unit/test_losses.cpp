#include <doctest.h>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <cmath>
#include <random>

#include "seguq/losses.hpp"
#include "seguq/special.hpp"

using namespace seguq;

namespace {

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(d) / std::max(std::sqrt(std::max(na, nb)), 1e-12);
}

template <typename F>
std::vector<double> fd(std::vector<double> x, F f) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(x[i])), x0 = x[i];
    x[i] = x0 + h;
    const double up = f(x);
    x[i] = x0 - h;
    const double dn = f(x);
    x[i] = x0;
    g[i] = (up - dn) / (2 * h);
  }
  return g;
}

Array2 random_alpha(std::size_t v, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(1.05, 7.0);
  Array2 a(v, c);
  for (double& x : a.data) x = u(rng);
  return a;
}

Array2 random_onehot(std::size_t v, std::size_t c, std::mt19937_64& rng) {
  Array2 y(v, c, 0.0);
  std::uniform_int_distribution<std::size_t> pick(0, c - 1);
  for (std::size_t i = 0; i < v; ++i) y(i, pick(rng)) = 1.0;
  return y;
}

}  // namespace

TEST_CASE("digamma and trigamma agree with reference implementations") {
  for (double x : {0.05, 0.5, 1.0, 1.7, 2.0, 3.3, 9.9, 10.0, 25.0, 400.0}) {
    CHECK(digamma(x) == doctest::Approx(boost::math::digamma(x)).epsilon(1e-13));
    CHECK(trigamma(x) == doctest::Approx(boost::math::trigamma(x)).epsilon(1e-13));
  }
  CHECK(digamma(2.0) - digamma(1.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("evidential cross entropy values") {
  const Array2 alpha(3, 2, std::vector<double>{1, 1, 1, 1, 1, 1});
  const Array2 y(3, 2, std::vector<double>{1, 0, 0, 1, 1, 0});
  CHECK(evid_xent(alpha, y).value == doctest::Approx(1.0).epsilon(1e-14));
  double previous = 2.0;
  for (double k : {2.0, 10.0, 100.0, 1e4}) {
    const Array2 a(1, 2, std::vector<double>{k, 1.0});
    const Array2 t(1, 2, std::vector<double>{1.0, 0.0});
    const double v = evid_xent(a, t).value;
    CHECK(v < previous);
    previous = v;
  }
  CHECK(previous < 1e-3);
}

TEST_CASE("evidential losses reject invalid inputs") {
  const Array2 bad_alpha(1, 2, std::vector<double>{0.5, 1.0});
  const Array2 y(1, 2, std::vector<double>{1, 0});
  CHECK_THROWS_AS(evid_xent(bad_alpha, y), Error);
  const Array2 alpha(1, 2, std::vector<double>{2.0, 1.0});
  const Array2 not_onehot(1, 2, std::vector<double>{0.5, 0.5});
  CHECK_THROWS_AS(evid_sdice(alpha, not_onehot), Error);
  CHECK_THROWS_AS(evid_kl(alpha, not_onehot), Error);
}

TEST_CASE("evidential soft Dice by direct evaluation") {
  // uniform alpha, single voxel, y = (1, 0)
  const Array2 alpha(1, 2, std::vector<double>{1, 1});
  const Array2 y(1, 2, std::vector<double>{1, 0});
  // p = 0.5, E[p^2] = p^2 + p(1-p)/(S+1) = 0.25 + 0.25/3 = 1/3
  const double eps = defaults::kSoftDiceEpsilon;
  const double c0 = 1.0 - (2 * 0.5) / (1.0 / 3.0 + 1.0 + eps);
  const double c1 = 1.0 - 0.0 / (1.0 / 3.0 + 0.0 + eps);
  CHECK(evid_sdice(alpha, y).value == doctest::Approx(0.5 * (c0 + c1)).epsilon(1e-12));
  // a class absent from y keeps loss 1 whatever alpha says
  const Array2 sharp(1, 2, std::vector<double>{1e8, 1.0});
  CHECK(evid_sdice(sharp, y).value == doctest::Approx(0.5).epsilon(1e-6));
  const Array2 both(2, 2, std::vector<double>{1e8, 1.0, 1.0, 1e8});
  const Array2 y2(2, 2, std::vector<double>{1, 0, 0, 1});
  CHECK(evid_sdice(both, y2).value < 1e-6);
}

TEST_CASE("evidential KL") {
  const Array2 ones(4, 3, 1.0);
  std::mt19937_64 rng(7);
  const Array2 y = random_onehot(4, 3, rng);
  CHECK(std::abs(evid_kl(ones, y).value) < 1e-12);
  CHECK(defaults::kEvidentialKlWeight == 0.05);
  for (int i = 0; i < 20; ++i) CHECK(evid_kl(random_alpha(3, 3, rng), random_onehot(3, 3, rng)).value >= 0.0);
}

TEST_CASE("heteroscedastic Monte-Carlo loss") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.5);
  Array2 eta(3, 2);
  for (double& x : eta.data) x = n(rng);
  const Array2 y = random_onehot(3, 2, rng);
  double ce = 0.0;
  for (std::size_t v = 0; v < 3; ++v) {
    const double lse = std::log(std::exp(eta(v, 0)) + std::exp(eta(v, 1)));
    for (std::size_t c = 0; c < 2; ++c) ce -= y(v, c) * (eta(v, c) - lse);
  }
  const std::vector<Array2> one{eta};
  CHECK(hs_mc_loss(one, y).value == doctest::Approx(ce).epsilon(1e-13));
  const std::vector<Array2> repeated{eta, eta, eta, eta};
  CHECK(hs_mc_loss(repeated, y).value == doctest::Approx(ce).epsilon(1e-13));

  // naive evaluation in long double
  std::vector<Array2> samples;
  for (int s = 0; s < 4; ++s) {
    Array2 e(3, 3);
    for (double& x : e.data) x = n(rng);
    samples.push_back(e);
  }
  const Array2 y3 = random_onehot(3, 3, rng);
  long double total = 0.0L;
  for (const auto& e : samples) {
    long double loglik = 0.0L;
    for (std::size_t v = 0; v < 3; ++v) {
      long double z = 0.0L;
      for (std::size_t c = 0; c < 3; ++c) z += std::exp(static_cast<long double>(e(v, c)));
      for (std::size_t c = 0; c < 3; ++c) loglik += y3(v, c) * (e(v, c) - std::log(z));
    }
    total += std::exp(loglik);
  }
  const double naive = static_cast<double>(-std::log(total / 4.0L));
  CHECK(hs_mc_loss(samples, y3).value == doctest::Approx(naive).epsilon(1e-12));
}

TEST_CASE("Gaussian KL and ELBO") {
  const DiagGaussian q{{1.0, 1.0}, {1.0, 1.0}};
  const DiagGaussian p{{0.0, 0.0}, {1.0, 1.0}};
  CHECK(gaussian_kl(q, p) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(elbo(2.5, p, p).value == 2.5);
  CHECK(defaults::kElboBeta == 1.0);
}

TEST_CASE("soft Dice, cross entropy and combo loss") {
  const std::vector<double> y{1, 0, 1, 1, 0};
  CHECK(soft_dice_loss(y, y).value == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(binary_xent(y, y).value == 0.0);
  CHECK(combo_loss(y, y).value == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(defaults::kComboXentWeight == 0.5);
  CHECK(defaults::kComboDiceWeight == 0.5);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  std::bernoulli_distribution coin(0.5);
  ProbMap p({3, 3, 3}, {}, 0.0);
  Mask t({3, 3, 3}, {}, std::uint8_t{0});
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = u(rng);
    t[i] = coin(rng);
  }
  double spy = 0, sp2 = 0, sy2 = 0, ce = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    spy += p[i] * t[i];
    sp2 += p[i] * p[i];
    sy2 += t[i];
    ce -= t[i] ? std::log(p[i]) : std::log(1 - p[i]);
  }
  const double eps = defaults::kSoftDiceEpsilon;
  const double dice = 1.0 - (2 * spy + eps) / (sp2 + sy2 + eps);
  const double expected = 0.5 * ce / static_cast<double>(p.size()) + 0.5 * dice;
  CHECK(combo_loss(p, t).value == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("analytic gradients match central differences") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    const Array2 alpha = random_alpha(3, 2, rng);
    const Array2 y = random_onehot(3, 2, rng);
    auto check = [&](auto loss) {
      const auto g = loss(alpha, true).gradient;
      const auto n = fd(alpha.data, [&](const std::vector<double>& x) { return loss(Array2(3, 2, x), false).value; });
      CHECK(rel_err(g, n) < 1e-5);
    };
    check([&](const Array2& a, bool w) { return evid_xent(a, y, w); });
    check([&](const Array2& a, bool w) { return evid_sdice(a, y, w); });
    check([&](const Array2& a, bool w) { return evid_kl(a, y, 0.05, w); });
  }
  for (int trial = 0; trial < 10; ++trial) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> var(0.2, 3.0);
    DiagGaussian prior, post;
    for (int i = 0; i < 3; ++i) {
      prior.mean.push_back(n(rng));
      prior.variance.push_back(var(rng));
      post.mean.push_back(n(rng));
      post.variance.push_back(var(rng));
    }
    std::vector<double> flat = post.mean;
    flat.insert(flat.end(), post.variance.begin(), post.variance.end());
    const auto g = elbo(0.7, prior, post, 1.0, true).gradient;
    const auto num = fd(flat, [&](const std::vector<double>& x) {
      return elbo(0.7, prior, DiagGaussian{{x.begin(), x.begin() + 3}, {x.begin() + 3, x.end()}}, 1.0).value;
    });
    CHECK(rel_err(g, num) < 1e-5);
  }
}
