#pragma once

namespace evinet {

// Digamma psi(x), the logarithmic derivative of the gamma function, for
// x > 0. Relative error <= 1e-10 on [1e-3, 1e6].
// Throws validation_error for x <= 0 or non-finite x.
double digamma(double x);

// Trigamma psi'(x) for x > 0, same accuracy contract as digamma.
double trigamma(double x);

} // namespace evinet
