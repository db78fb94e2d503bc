#pragma once

namespace seguq {

// psi(x) = d/dx log Gamma(x), for x > 0.
double digamma(double x);
// psi'(x), for x > 0.
double trigamma(double x);

}  // namespace seguq
