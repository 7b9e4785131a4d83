#include "evinet/specfun.hpp"

#include <cmath>
#include <string>

#include "evinet/errors.hpp"

namespace evinet {

namespace {

void require_positive(double x, const char* fn) {
    if (!(x > 0.0) || !std::isfinite(x)) {
        throw validation_error(std::string(fn) + ": argument must be positive and finite, got " +
                               std::to_string(x));
    }
}

// Arguments below this are shifted up by the recurrences before the
// asymptotic series is applied. At x >= 8 the truncated Bernoulli series
// is accurate to ~1e-14 relative, well inside the 1e-10 contract.
constexpr double kAsymptoticCutoff = 8.0;

double horner(const double* coeffs, int n, double z) {
    double acc = 0.0;
    for (int i = n - 1; i >= 0; --i) acc = acc * z + coeffs[i];
    return acc;
}

// psi(x) ~ ln x - 1/(2x) - sum_{n>=1} B_{2n} / (2n x^{2n}).
// Coefficients are B_{2n}/(2n) for n = 1..7.
double digamma_asymptotic(double x) {
    static const double c[] = {
        1.0 / 12.0,  -1.0 / 120.0,     1.0 / 252.0, -1.0 / 240.0,
        1.0 / 132.0, -691.0 / 32760.0, 1.0 / 12.0,
    };
    const double z = 1.0 / (x * x);
    return std::log(x) - 0.5 / x - z * horner(c, 7, z);
}

// psi'(x) ~ 1/x + 1/(2x^2) + sum_{n>=1} B_{2n} / x^{2n+1}.
// Coefficients are B_{2n} for n = 1..7.
double trigamma_asymptotic(double x) {
    static const double c[] = {
        1.0 / 6.0,  -1.0 / 30.0,      1.0 / 42.0, -1.0 / 30.0,
        5.0 / 66.0, -691.0 / 2730.0,  7.0 / 6.0,
    };
    const double z = 1.0 / (x * x);
    return 1.0 / x + 0.5 * z + z * horner(c, 7, z) / x;
}

} // namespace

double digamma(double x) {
    require_positive(x, "digamma");
    double shift = 0.0;
    while (x < kAsymptoticCutoff) {
        shift -= 1.0 / x;
        x += 1.0;
    }
    return digamma_asymptotic(x) + shift;
}

double trigamma(double x) {
    require_positive(x, "trigamma");
    double shift = 0.0;
    while (x < kAsymptoticCutoff) {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    return trigamma_asymptotic(x) + shift;
}

} // namespace evinet
