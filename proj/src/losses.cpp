#include "seguq/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "seguq/special.hpp"

namespace seguq {

Array2::Array2(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != rows * cols) {
    throw Error(ErrorCode::DimensionMismatch, "array data does not match rows*cols");
  }
}

namespace {

void check_pair(const Array2& alpha, const Array2& y) {
  if (alpha.rows != y.rows || alpha.cols != y.cols || alpha.data.size() != alpha.rows * alpha.cols) {
    throw Error(ErrorCode::DimensionMismatch, "alpha and y must share shape");
  }
}

void check_alpha(const Array2& alpha) {
  for (double a : alpha.data) {
    if (!(a >= 1.0) || !std::isfinite(a)) {
      throw Error(ErrorCode::DomainError, "Dirichlet concentration below 1: " + std::to_string(a));
    }
  }
}

void check_one_hot(const Array2& y) {
  for (std::size_t v = 0; v < y.rows; ++v) {
    double sum = 0.0;
    for (std::size_t c = 0; c < y.cols; ++c) {
      const double t = y(v, c);
      if (t != 0.0 && t != 1.0) throw Error(ErrorCode::DomainError, "labels must be one-hot");
      sum += t;
    }
    if (sum != 1.0) throw Error(ErrorCode::DomainError, "labels must be one-hot");
  }
}

}  // namespace

LossValue evid_xent(const Array2& alpha, const Array2& y, bool with_gradient) {
  check_pair(alpha, y);
  check_alpha(alpha);
  check_one_hot(y);
  const std::size_t n = alpha.rows;
  const std::size_t classes = alpha.cols;
  const double inv_n = 1.0 / static_cast<double>(n);

  LossValue out;
  if (with_gradient) out.gradient.assign(alpha.data.size(), 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    double strength = 0.0;
    double label_mass = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      strength += alpha(v, c);
      label_mass += y(v, c);
    }
    const double psi_s = digamma(strength);
    for (std::size_t c = 0; c < classes; ++c) {
      if (y(v, c) != 0.0) out.value += y(v, c) * (psi_s - digamma(alpha(v, c)));
    }
    if (with_gradient) {
      const double tri_s = trigamma(strength);
      for (std::size_t k = 0; k < classes; ++k) {
        double g = label_mass * tri_s;
        if (y(v, k) != 0.0) g -= y(v, k) * trigamma(alpha(v, k));
        out.gradient[v * classes + k] = g * inv_n;
      }
    }
  }
  out.value *= inv_n;
  return out;
}

LossValue evid_sdice(const Array2& alpha, const Array2& y, bool with_gradient, double eps) {
  check_pair(alpha, y);
  check_alpha(alpha);
  check_one_hot(y);
  const std::size_t n = alpha.rows;
  const std::size_t classes = alpha.cols;

  std::vector<double> strength(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t c = 0; c < classes; ++c) strength[v] += alpha(v, c);
  }
  auto expected = [&](std::size_t v, std::size_t c) { return alpha(v, c) / strength[v]; };
  auto variance = [&](std::size_t v, std::size_t c) {
    const double s = strength[v];
    const double a = alpha(v, c);
    return a * (s - a) / (s * s * (s + 1.0));
  };

  std::vector<double> num(classes, 0.0), den(classes, eps);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = expected(v, c);
      num[c] += y(v, c) * p;
      den[c] += y(v, c) * y(v, c) + p * p + variance(v, c);
    }
  }
  LossValue out;
  double ratio_sum = 0.0;
  for (std::size_t c = 0; c < classes; ++c) ratio_sum += num[c] / den[c];
  const double scale = 2.0 / static_cast<double>(classes);
  out.value = 1.0 - scale * ratio_sum;

  if (with_gradient) {
    out.gradient.assign(alpha.data.size(), 0.0);
    for (std::size_t v = 0; v < n; ++v) {
      const double s = strength[v];
      const double g = s * s * (s + 1.0);
      const double dg = 3.0 * s * s + 2.0 * s;
      for (std::size_t k = 0; k < classes; ++k) {
        double total = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
          const double a = alpha(v, c);
          const double delta = c == k ? 1.0 : 0.0;
          const double dp = delta / s - a / (s * s);
          const double f = a * s - a * a;
          const double df = delta * (s - 2.0 * a) + a;
          const double dvar = (df * g - f * dg) / (g * g);
          const double dnum = y(v, c) * dp;
          const double dden = 2.0 * expected(v, c) * dp + dvar;
          total += (dnum * den[c] - num[c] * dden) / (den[c] * den[c]);
        }
        out.gradient[v * classes + k] = -scale * total;
      }
    }
  }
  return out;
}

LossValue evid_kl(const Array2& alpha, const Array2& y, double weight, bool with_gradient) {
  check_pair(alpha, y);
  check_alpha(alpha);
  check_one_hot(y);
  if (!(weight >= 0.0)) throw Error(ErrorCode::DomainError, "KL weight must be nonnegative");
  const std::size_t classes = alpha.cols;
  const double log_gamma_c = std::lgamma(static_cast<double>(classes));

  LossValue out;
  if (with_gradient) out.gradient.assign(alpha.data.size(), 0.0);
  std::vector<double> masked(classes);
  for (std::size_t v = 0; v < alpha.rows; ++v) {
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      masked[c] = y(v, c) + (1.0 - y(v, c)) * alpha(v, c);
      total += masked[c];
    }
    const double psi_total = digamma(total);
    double kl = std::lgamma(total) - log_gamma_c;
    double excess = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      kl -= std::lgamma(masked[c]);
      kl += (masked[c] - 1.0) * (digamma(masked[c]) - psi_total);
      excess += masked[c] - 1.0;
    }
    out.value += kl;
    if (with_gradient) {
      const double tri_total = trigamma(total);
      for (std::size_t k = 0; k < classes; ++k) {
        const double d_masked = (masked[k] - 1.0) * trigamma(masked[k]) - tri_total * excess;
        out.gradient[v * classes + k] = weight * (1.0 - y(v, k)) * d_masked;
      }
    }
  }
  out.value *= weight;
  return out;
}

LossValue hs_mc_loss(std::span<const Array2> logit_samples, const Array2& y, bool with_gradient) {
  if (logit_samples.empty()) throw Error(ErrorCode::DomainError, "need at least one logit sample");
  const std::size_t samples = logit_samples.size();
  const std::size_t classes = y.cols;
  for (const auto& eta : logit_samples) check_pair(eta, y);

  // Per-sample joint log-likelihood and per-voxel softmax.
  std::vector<double> loglik(samples, 0.0);
  std::vector<double> probs;
  if (with_gradient) probs.resize(samples * y.data.size());
  for (std::size_t s = 0; s < samples; ++s) {
    const Array2& eta = logit_samples[s];
    for (std::size_t v = 0; v < y.rows; ++v) {
      double top = eta(v, 0);
      for (std::size_t c = 1; c < classes; ++c) top = std::max(top, eta(v, c));
      double z = 0.0;
      for (std::size_t c = 0; c < classes; ++c) z += std::exp(eta(v, c) - top);
      const double log_z = top + std::log(z);
      for (std::size_t c = 0; c < classes; ++c) {
        if (y(v, c) != 0.0) loglik[s] += y(v, c) * (eta(v, c) - log_z);
        if (with_gradient) probs[s * y.data.size() + v * classes + c] = std::exp(eta(v, c) - log_z);
      }
    }
  }
  const double top = *std::max_element(loglik.begin(), loglik.end());
  double acc = 0.0;
  for (double a : loglik) acc += std::exp(a - top);
  const double lse = top + std::log(acc);

  LossValue out;
  out.value = -lse + std::log(static_cast<double>(samples));
  if (with_gradient) {
    out.gradient.assign(samples * y.data.size(), 0.0);
    for (std::size_t s = 0; s < samples; ++s) {
      const double w = std::exp(loglik[s] - lse);
      for (std::size_t v = 0; v < y.rows; ++v) {
        double mass = 0.0;
        for (std::size_t c = 0; c < classes; ++c) mass += y(v, c);
        for (std::size_t c = 0; c < classes; ++c) {
          const std::size_t i = s * y.data.size() + v * classes + c;
          out.gradient[i] = -w * (y(v, c) - probs[i] * mass);
        }
      }
    }
  }
  return out;
}

double gaussian_kl(const DiagGaussian& q, const DiagGaussian& p) {
  const std::size_t n = q.mean.size();
  if (q.variance.size() != n || p.mean.size() != n || p.variance.size() != n) {
    throw Error(ErrorCode::DimensionMismatch, "Gaussian parameter sizes differ");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double vq = q.variance[i];
    const double vp = p.variance[i];
    if (!(vq > 0.0) || !(vp > 0.0)) throw Error(ErrorCode::DomainError, "variances must be positive");
    const double diff = q.mean[i] - p.mean[i];
    kl += 0.5 * (std::log(vp / vq) + (vq + diff * diff) / vp - 1.0);
  }
  return kl;
}

LossValue elbo(double recon_nll, const DiagGaussian& prior, const DiagGaussian& posterior,
               double beta, bool with_gradient) {
  LossValue out;
  out.value = recon_nll + beta * gaussian_kl(posterior, prior);
  if (with_gradient) {
    const std::size_t n = posterior.mean.size();
    out.gradient.resize(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      out.gradient[i] = beta * (posterior.mean[i] - prior.mean[i]) / prior.variance[i];
      out.gradient[n + i] = beta * 0.5 * (1.0 / prior.variance[i] - 1.0 / posterior.variance[i]);
    }
  }
  return out;
}

LossValue soft_dice_loss(std::span<const double> p, std::span<const double> y, bool with_gradient,
                         double eps) {
  if (p.size() != y.size()) throw Error(ErrorCode::DimensionMismatch, "p and y sizes differ");
  double overlap = 0.0, energy = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    overlap += p[i] * y[i];
    energy += p[i] * p[i] + y[i] * y[i];
  }
  const double num = 2.0 * overlap + eps;
  const double den = energy + eps;
  LossValue out;
  out.value = 1.0 - num / den;
  if (with_gradient) {
    out.gradient.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      out.gradient[i] = -(2.0 * y[i] * den - num * 2.0 * p[i]) / (den * den);
    }
  }
  return out;
}

LossValue binary_xent(std::span<const double> p, std::span<const double> y, bool with_gradient) {
  if (p.size() != y.size()) throw Error(ErrorCode::DimensionMismatch, "p and y sizes differ");
  if (p.empty()) throw Error(ErrorCode::DomainError, "empty input");
  const double inv_n = 1.0 / static_cast<double>(p.size());
  LossValue out;
  if (with_gradient) out.gradient.assign(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] != 0.0) {
      out.value -= y[i] * std::log(p[i]);
      if (with_gradient) out.gradient[i] -= y[i] / p[i] * inv_n;
    }
    if (y[i] != 1.0) {
      out.value -= (1.0 - y[i]) * std::log1p(-p[i]);
      if (with_gradient) out.gradient[i] += (1.0 - y[i]) / (1.0 - p[i]) * inv_n;
    }
  }
  out.value *= inv_n;
  return out;
}

LossValue combo_loss(std::span<const double> p, std::span<const double> y, double w_xent,
                     double w_dice, bool with_gradient) {
  if (!(w_xent >= 0.0) || !(w_dice >= 0.0)) {
    throw Error(ErrorCode::DomainError, "loss weights must be nonnegative");
  }
  const LossValue xent = binary_xent(p, y, with_gradient);
  const LossValue dice = soft_dice_loss(p, y, with_gradient);
  LossValue out;
  out.value = w_xent * xent.value + w_dice * dice.value;
  if (with_gradient) {
    out.gradient.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      out.gradient[i] = w_xent * xent.gradient[i] + w_dice * dice.gradient[i];
    }
  }
  return out;
}

LossValue combo_loss(const ProbMap& p, const Mask& y, double w_xent, double w_dice,
                     bool with_gradient) {
  require_same_dims(p, y, "combo_loss: prediction and label dims differ");
  const ScalarGrid target = to_scalar(y);
  return combo_loss(p.values(), target.values(), w_xent, w_dice, with_gradient);
}

}  // namespace seguq
