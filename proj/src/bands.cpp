#include "valplan/error.hpp"
#include "valplan/numeric.hpp"
#include "valplan/parallel.hpp"
#include "valplan/precision.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace valplan {

namespace {

constexpr std::size_t kGridPoints = 99;
constexpr std::size_t kPooledPerSample = 100;

struct SortedSample {
    std::vector<double> pi;
    std::vector<double> y;
};

SortedSample sorted_sample(const ValidationSample& s) {
    std::vector<std::size_t> order(s.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.pi[a] < s.pi[b]; });
    SortedSample out;
    out.pi.reserve(s.size());
    out.y.reserve(s.size());
    for (std::size_t i : order) {
        out.pi.push_back(s.pi[i]);
        out.y.push_back(s.y[i]);
    }
    return out;
}

}  // namespace

std::optional<double> local_linear(std::span<const double> x, std::span<const double> y, double x0,
                                   double span) {
    const std::size_t n = x.size();
    if (n < 3 || y.size() != n || !(span > 0.0) || x0 < x.front() || x0 > x.back()) {
        return std::nullopt;
    }
    const std::size_t k =
        std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(span * static_cast<double>(n))), 3, n);

    // Window of the k nearest neighbours of x0.
    auto right = static_cast<std::size_t>(std::lower_bound(x.begin(), x.end(), x0) - x.begin());
    std::size_t left = right;
    while (right - left < k) {
        if (left == 0) {
            ++right;
        } else if (right == n) {
            --left;
        } else if (x0 - x[left - 1] <= x[right] - x0) {
            --left;
        } else {
            ++right;
        }
    }
    double h = std::max(x0 - x[left], x[right - 1] - x0);
    if (!(h > 0.0)) {
        return std::nullopt;
    }
    h *= 1.0 + 1e-10;

    double s0 = 0.0, s1 = 0.0, s2 = 0.0, t0 = 0.0, t1 = 0.0;
    for (std::size_t i = left; i < right; ++i) {
        const double d = x[i] - x0;
        const double u = std::abs(d) / h;
        const double w = std::pow(1.0 - u * u * u, 3);
        s0 += w;
        s1 += w * d;
        s2 += w * d * d;
        t0 += w * y[i];
        t1 += w * d * y[i];
    }
    const double det = s0 * s2 - s1 * s1;
    if (!(det > 1e-12 * s0 * s2) || !(s0 > 0.0)) {
        return std::nullopt;
    }
    return (s2 * t0 - s1 * t1) / det;
}

std::vector<BandPoint> calibration_error_bands(std::span<const ThetaDraw> draws, std::size_t n,
                                               std::span<const double> grid, std::uint64_t seed,
                                               const BandOptions& options) {
    if (draws.empty()) {
        throw DomainError("calibration_error_bands: no theta draws");
    }
    auto simulate = [&](std::size_t j) -> std::optional<ValidationSample> {
        Engine rng = substream(seed, StreamTag::Bands, j, n);
        try {
            return simulate_sample(draws[j], n, rng);
        } catch (const NumericError&) {
            return std::nullopt;
        }
    };

    std::vector<double> points(grid.begin(), grid.end());
    if (points.empty()) {
        std::vector<std::vector<double>> pooled(draws.size());
        parallel_for(draws.size(), options.workers, [&](std::size_t j) {
            if (auto s = simulate(j)) {
                const std::size_t take = std::min(kPooledPerSample, s->size());
                pooled[j].assign(s->pi.begin(), s->pi.begin() + static_cast<std::ptrdiff_t>(take));
            }
        });
        std::vector<double> all;
        for (const auto& p : pooled) {
            all.insert(all.end(), p.begin(), p.end());
        }
        if (all.empty()) {
            throw NumericError("calibration_error_bands: no valid simulated samples");
        }
        for (std::size_t g = 1; g <= kGridPoints; ++g) {
            points.push_back(numeric::empirical_quantile(all, static_cast<double>(g) / 100.0));
        }
    }

    // errors[j][g]; NaN marks a dropped smoother evaluation.
    std::vector<std::vector<double>> errors(draws.size());
    parallel_for(draws.size(), options.workers, [&](std::size_t j) {
        errors[j].assign(points.size(), std::numeric_limits<double>::quiet_NaN());
        const auto s = simulate(j);
        if (!s) {
            return;
        }
        const SortedSample sorted = sorted_sample(*s);
        for (std::size_t g = 0; g < points.size(); ++g) {
            if (auto fit = local_linear(sorted.pi, sorted.y, points[g], options.span)) {
                errors[j][g] = *fit - draws[j].h.apply(points[g]);
            }
        }
    });

    std::vector<BandPoint> out;
    out.reserve(points.size());
    for (std::size_t g = 0; g < points.size(); ++g) {
        std::vector<double> e;
        e.reserve(draws.size());
        for (const auto& row : errors) {
            if (std::isfinite(row[g])) {
                e.push_back(row[g]);
            }
        }
        BandPoint bp{points[g], std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
                     std::numeric_limits<double>::quiet_NaN(), e.size(), draws.size() - e.size()};
        if (!e.empty()) {
            bp.lower = numeric::empirical_quantile(e, 0.025);
            bp.median = numeric::empirical_quantile(e, 0.5);
            bp.upper = numeric::empirical_quantile(e, 0.975);
        }
        out.push_back(bp);
    }
    return out;
}

}  // namespace valplan
