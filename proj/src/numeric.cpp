#include "valplan/numeric.hpp"

#include "valplan/error.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

namespace valplan::numeric {

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw DomainError("normal_quantile: p must lie in (0,1)");
    }
    return boost::math::quantile(boost::math::normal_distribution<double>{}, p);
}

double integrate(const std::function<double(double)>& f, double lo, double hi,
                 QuadratureTolerance tol) {
    if (lo == hi) {
        return 0.0;
    }
    double error = 0.0;
    double l1 = 0.0;
    const double value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        f, lo, hi, 15, std::max(1e-14, tol.relative * 1e-2), &error, &l1);
    if (!std::isfinite(value) || error > std::max(tol.absolute, tol.relative * std::max(l1, std::abs(value)))) {
        std::ostringstream os;
        os << "quadrature on [" << lo << ", " << hi << "] did not converge (estimate " << value
           << ", error " << error << ")";
        throw NumericError(os.str());
    }
    return value;
}

double solve_monotone(const std::function<double(double)>& f, double lo, double hi,
                      RootOptions opt) {
    double flo = f(lo);
    double fhi = f(hi);
    int expansions = 0;
    while (flo * fhi > 0.0) {
        if (++expansions > opt.max_expansions) {
            std::ostringstream os;
            os << "root not bracketed after " << opt.max_expansions << " expansions, last bracket ["
               << lo << ", " << hi << "] with values (" << flo << ", " << fhi << ")";
            throw NumericError(os.str());
        }
        const bool grow_low = std::abs(flo) < std::abs(fhi);
        if (grow_low) {
            if (lo <= opt.hard_lo) {
                throw NumericError("root not bracketed: lower search limit reached");
            }
            hi = lo;
            fhi = flo;
            lo = opt.positive ? lo / 4.0 : lo - 2.0 * std::max(1.0, std::abs(hi - lo) + 1.0);
            lo = std::max(lo, opt.hard_lo);
            flo = f(lo);
        } else {
            if (hi >= opt.hard_hi) {
                throw NumericError("root not bracketed: upper search limit reached");
            }
            lo = hi;
            flo = fhi;
            hi = opt.positive ? hi * 4.0 : hi + 2.0 * std::max(1.0, std::abs(hi - lo) + 1.0);
            hi = std::min(hi, opt.hard_hi);
            fhi = f(hi);
        }
    }
    if (flo == 0.0) {
        return lo;
    }
    if (fhi == 0.0) {
        return hi;
    }
    std::uintmax_t iterations = static_cast<std::uintmax_t>(opt.max_iterations);
    const auto [a, b] = boost::math::tools::toms748_solve(
        f, lo, hi, flo, fhi, boost::math::tools::eps_tolerance<double>(opt.tolerance_bits), iterations);
    if (iterations >= static_cast<std::uintmax_t>(opt.max_iterations)) {
        throw NumericError("root finder hit its iteration cap");
    }
    return 0.5 * (a + b);
}

double mean(std::span<const double> v) {
    if (v.empty()) {
        throw DomainError("mean of an empty vector");
    }
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return s / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
    if (v.size() < 2) {
        return 0.0;
    }
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) {
        ss += (x - m) * (x - m);
    }
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double empirical_quantile(std::span<const double> v, double q) {
    if (v.empty()) {
        throw DomainError("quantile of an empty vector");
    }
    if (!(q > 0.0 && q < 1.0)) {
        throw DomainError("quantile level must lie in (0,1)");
    }
    std::vector<double> sorted(v.begin(), v.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<double>(sorted.size());
    auto k = static_cast<std::size_t>(std::ceil(q * n - 1e-12));
    k = std::clamp<std::size_t>(k, 1, sorted.size());
    return sorted[k - 1];
}

std::vector<double> ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) {
            ++j;
        }
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            r[order[k]] = avg;
        }
        i = j + 1;
    }
    return r;
}

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw DomainError("spearman: need two equal-length vectors of size >= 2");
    }
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    const double mx = mean(rx);
    const double my = mean(ry);
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        return 0.0;
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace valplan::numeric
