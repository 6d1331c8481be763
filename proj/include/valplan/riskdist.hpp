#pragma once

#include "valplan/rng.hpp"

#include <cstddef>
#include <functional>
#include <string_view>
#include <vector>

namespace valplan {

enum class RiskFamily { Beta, LogitNormal, ProbitNormal };

std::string_view to_string(RiskFamily family);
RiskFamily risk_family_from_string(std::string_view name);

/// A calibrated risk together with its complement and log-odds, each computed
/// without cancellation so integrands stay finite in the far tails.
struct RiskPoint {
    double p;
    double q;
    double logit;
};

/// Parametric law of calibrated risks on (0,1).
///
/// Beta: param1 = a, param2 = b. LogitNormal / ProbitNormal: param1 = latent
/// mean, param2 = latent SD.
class RiskDistribution {
public:
    RiskDistribution(RiskFamily family, double param1, double param2);

    static RiskDistribution beta(double a, double b) { return {RiskFamily::Beta, a, b}; }
    static RiskDistribution logit_normal(double mu, double sigma) {
        return {RiskFamily::LogitNormal, mu, sigma};
    }
    static RiskDistribution probit_normal(double mu, double sigma) {
        return {RiskFamily::ProbitNormal, mu, sigma};
    }

    RiskFamily family() const noexcept { return family_; }
    double param1() const noexcept { return param1_; }
    double param2() const noexcept { return param2_; }

    double density(double p) const;
    double quantile(double q) const;

    bool operator==(const RiskDistribution&) const = default;

private:
    RiskFamily family_;
    double param1_;
    double param2_;
};

struct RiskMoments {
    double mean;
    double cstat;
};

/// E[g(p)] by adaptive quadrature.
double expectation(const RiskDistribution& d, const std::function<double(const RiskPoint&)>& g);

double mean(const RiskDistribution& d);

/// Probability that an event case has a higher risk than a non-event case.
double cstat_of(const RiskDistribution& d);

/// Member of `family` with the requested mean and c-statistic.
RiskDistribution identify(RiskMoments target, RiskFamily family);

struct SensSpec {
    double sensitivity;
    double specificity;
};

/// True sensitivity and specificity of the rule "flag when p >= threshold".
SensSpec sens_spec_at(const RiskDistribution& d, double threshold);

double draw(const RiskDistribution& d, Engine& rng);
std::vector<double> sample(const RiskDistribution& d, std::size_t n, Engine& rng);

}  // namespace valplan
