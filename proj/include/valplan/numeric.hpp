#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace valplan::numeric {

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

inline double expit(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double normal_pdf(double z) {
    constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p);

struct QuadratureTolerance {
    double absolute = 1e-10;
    double relative = 1e-8;
};

/// Adaptive Gauss-Kronrod on a finite interval. Throws NumericError when the
/// error estimate stays above max(absolute, relative * |I|).
double integrate(const std::function<double(double)>& f, double lo, double hi,
                 QuadratureTolerance tol = {});

/// Root of a monotone function. The initial bracket [lo, hi] is widened
/// geometrically (multiplicatively when `positive` is set, additively
/// otherwise) until it contains a sign change.
struct RootOptions {
    int max_expansions = 60;
    int max_iterations = 200;
    int tolerance_bits = 48;
    bool positive = false;
    double hard_lo = -HUGE_VAL;
    double hard_hi = HUGE_VAL;
};

double solve_monotone(const std::function<double(double)>& f, double lo, double hi,
                      RootOptions opt = {});

double mean(std::span<const double> v);
double sample_sd(std::span<const double> v);

/// Smallest x with empirical F(x) >= q (inverse-CDF convention).
double empirical_quantile(std::span<const double> v, double q);

/// Average ranks (ties share the mean rank), 1-based.
std::vector<double> ranks(std::span<const double> v);

double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace valplan::numeric
