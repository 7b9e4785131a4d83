#include <doctest.h>

#include <cmath>
#include <random>

#include "evinet/errors.hpp"
#include "evinet/rng.hpp"
#include "evinet/specfun.hpp"

using evinet::digamma;
using evinet::trigamma;

namespace {

constexpr double kEulerGamma = 0.5772156649015328606;
constexpr double kPi = 3.14159265358979323846;
constexpr double kLn2 = 0.6931471805599453094;

double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(1.0, std::abs(want));
}

} // namespace

TEST_CASE("digamma closed forms") {
    // psi(1) = -gamma, psi(1/2) = -gamma - 2 ln 2, and the recurrence
    // psi(x+1) = psi(x) + 1/x anchors psi(2).
    CHECK(rel_err(digamma(1.0), -kEulerGamma) < 1e-10);
    CHECK(digamma(1.0) == doctest::Approx(-0.5772156649015329).epsilon(1e-12));
    CHECK(digamma(2.0) == doctest::Approx(0.4227843350984671).epsilon(1e-12));
    CHECK(digamma(0.5) == doctest::Approx(-kEulerGamma - 2.0 * kLn2).epsilon(1e-12));
    CHECK(digamma(0.5) == doctest::Approx(-1.9635100260214235).epsilon(1e-12));
}

TEST_CASE("trigamma closed forms") {
    CHECK(trigamma(1.0) == doctest::Approx(kPi * kPi / 6.0).epsilon(1e-12));
    CHECK(trigamma(1.0) == doctest::Approx(1.6449340668482264).epsilon(1e-12));
    CHECK(trigamma(2.0) == doctest::Approx(kPi * kPi / 6.0 - 1.0).epsilon(1e-12));
    CHECK(trigamma(0.5) == doctest::Approx(kPi * kPi / 2.0).epsilon(1e-12));
    CHECK(trigamma(0.5) == doctest::Approx(4.934802200544679).epsilon(1e-12));
}

TEST_CASE("integer anchors via harmonic sums") {
    // psi(n) = -gamma + H_{n-1}; independent of the asymptotic series.
    double harmonic = 0.0;
    for (int n = 1; n <= 40; ++n) {
        CHECK(rel_err(digamma(static_cast<double>(n)), -kEulerGamma + harmonic) < 1e-12);
        harmonic += 1.0 / n;
    }
    // psi'(n) = pi^2/6 - sum_{j<n} 1/j^2.
    double sq = 0.0;
    for (int n = 1; n <= 40; ++n) {
        CHECK(rel_err(trigamma(static_cast<double>(n)), kPi * kPi / 6.0 - sq) < 1e-12);
        sq += 1.0 / (static_cast<double>(n) * n);
    }
}

TEST_CASE("digamma recurrence residual over random draws") {
    std::mt19937_64 rng(12345);
    for (int i = 0; i < 1000; ++i) {
        const double x = evinet::uniform_in(rng, 1e-9, 100.0);
        if (x <= 0.0) continue;
        const double lhs = digamma(x + 1.0) - digamma(x) - 1.0 / x;
        CHECK(std::abs(lhs) <= 1e-12 * std::max(1.0, std::abs(digamma(x))));
    }
}

TEST_CASE("trigamma recurrence residual over random draws") {
    std::mt19937_64 rng(999);
    for (int i = 0; i < 1000; ++i) {
        const double x = evinet::uniform_in(rng, 0.01, 100.0);
        const double lhs = trigamma(x + 1.0) - trigamma(x) + 1.0 / (x * x);
        CHECK(std::abs(lhs) <= 1e-11 * std::max(1.0, std::abs(trigamma(x))));
    }
}

TEST_CASE("monotonicity on a sampled grid") {
    double prev_d = digamma(0.1);
    double prev_t = trigamma(0.1);
    for (double x = 0.2; x <= 50.0; x += 0.1) {
        const double d = digamma(x);
        const double t = trigamma(x);
        CHECK(d > prev_d);    // digamma strictly increasing
        CHECK(t < prev_t);    // trigamma strictly decreasing
        prev_d = d;
        prev_t = t;
    }
}

TEST_CASE("trigamma matches central differences of digamma") {
    const double h = 1e-5;
    for (double x = 1.0; x <= 20.0; x += 0.25) {
        const double fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
        CHECK(std::abs(fd - trigamma(x)) / std::abs(trigamma(x)) < 1e-6);
    }
}

TEST_CASE("digamma agrees with lgamma finite differences") {
    // std::lgamma is an independent implementation of the same family.
    const double h = 1e-6;
    for (double x : {0.001, 0.37, 1.0, 2.5, 8.0, 123.0, 4567.0, 1e6}) {
        const double fd = (std::lgamma(x + h) - std::lgamma(x - h)) / (2.0 * h);
        CHECK(std::abs(fd - digamma(x)) / std::max(1.0, std::abs(fd)) < 1e-4);
    }
}

TEST_CASE("domain errors") {
    CHECK_THROWS_AS(digamma(0.0), evinet::validation_error);
    CHECK_THROWS_AS(digamma(-1.5), evinet::validation_error);
    CHECK_THROWS_AS(trigamma(0.0), evinet::validation_error);
    CHECK_THROWS_AS(trigamma(-0.1), evinet::validation_error);
    CHECK_THROWS_AS(digamma(std::nan("")), evinet::validation_error);
}
