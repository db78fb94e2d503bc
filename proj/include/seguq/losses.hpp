#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "seguq/defaults.hpp"
#include "seguq/grid.hpp"

namespace seguq {

// Row-major rows x cols matrix; rows are voxels, cols are classes.
struct Array2 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Array2() = default;
  Array2(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Array2(std::size_t r, std::size_t c, std::vector<double> values);

  double& operator()(std::size_t r, std::size_t c) noexcept { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data[r * cols + c]; }
};

// Scalar loss plus, when requested, d(loss)/d(parameter) flattened in the
// parameter's own layout.
struct LossValue {
  double value = 0.0;
  std::vector<double> gradient;

  bool has_gradient() const noexcept { return !gradient.empty(); }
};

// Bayes risk of cross entropy under Dir(alpha), averaged over voxels.
LossValue evid_xent(const Array2& alpha, const Array2& y, bool with_gradient = false);

// Bayes risk of the soft Dice loss under Dir(alpha). Each class denominator
// carries +eps.
LossValue evid_sdice(const Array2& alpha, const Array2& y, bool with_gradient = false,
                     double eps = defaults::kSoftDiceEpsilon);

// weight * sum_v KL(Dir(alpha_masked) || Dir(1)), where the true-class
// concentration is replaced by 1.
LossValue evid_kl(const Array2& alpha, const Array2& y,
                  double weight = defaults::kEvidentialKlWeight, bool with_gradient = false);

// Monte-Carlo heteroscedastic loss:
//   -LSE_s( sum_v sum_c y log softmax(eta_s) ) + log S.
// Gradient is w.r.t. every logit, sample-major.
LossValue hs_mc_loss(std::span<const Array2> logit_samples, const Array2& y,
                     bool with_gradient = false);

struct DiagGaussian {
  std::vector<double> mean;
  std::vector<double> variance;
};

// KL(q || p) between diagonal Gaussians.
double gaussian_kl(const DiagGaussian& q, const DiagGaussian& p);

// recon_nll + beta * KL(posterior || prior). The gradient, when requested, is
// w.r.t. the posterior: all means followed by all variances.
LossValue elbo(double recon_nll, const DiagGaussian& prior, const DiagGaussian& posterior,
               double beta = defaults::kElboBeta, bool with_gradient = false);

// Foreground soft Dice loss 1 - (2 sum p y + eps) / (sum p^2 + sum y^2 + eps).
LossValue soft_dice_loss(std::span<const double> p, std::span<const double> y,
                         bool with_gradient = false, double eps = defaults::kSoftDiceEpsilon);

// Mean binary cross entropy, with 0 * log 0 taken as 0.
LossValue binary_xent(std::span<const double> p, std::span<const double> y,
                      bool with_gradient = false);

// w_xent * binary_xent + w_dice * soft_dice_loss; gradient w.r.t. p.
LossValue combo_loss(std::span<const double> p, std::span<const double> y,
                     double w_xent = defaults::kComboXentWeight,
                     double w_dice = defaults::kComboDiceWeight, bool with_gradient = false);
LossValue combo_loss(const ProbMap& p, const Mask& y, double w_xent = defaults::kComboXentWeight,
                     double w_dice = defaults::kComboDiceWeight, bool with_gradient = false);

}  // namespace seguq
