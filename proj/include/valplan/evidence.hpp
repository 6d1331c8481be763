#pragma once

#include "valplan/rng.hpp"
#include "valplan/theta.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace valplan {

enum class MarginalFamily { Beta, Normal, LogNormal, LogitNormal, PointMass };
enum class Parameterization { NativeParams, MeanSD, MeanUpperCI95 };

std::string_view to_string(MarginalFamily family);

/// Index of each parameter in a prior's marginal list and correlation matrix.
enum class ParameterTarget : std::size_t { Prevalence = 0, CStatistic = 1, Slope = 2, Location = 3 };

std::string_view to_string(ParameterTarget target);

struct MarginalSpec {
    MarginalFamily family = MarginalFamily::PointMass;
    Parameterization parameterization = Parameterization::NativeParams;
    double first = 0.0;   ///< native param 1, mean, or point value
    double second = 0.0;  ///< native param 2, SD, or upper 95% bound

    static MarginalSpec point(double value) {
        return {MarginalFamily::PointMass, Parameterization::NativeParams, value, 0.0};
    }
};

/// A marginal distribution in its native parameters.
struct ResolvedMarginal {
    MarginalFamily family;
    double param1;
    double param2;

    double mean() const;
    double sd() const;
    double draw(Engine& rng) const;
};

ResolvedMarginal marginal_from_moments(const MarginalSpec& spec);

enum class CorrelationSource { Independent, UserSupplied, ParametricBootstrap };

struct BootstrapSettings {
    std::size_t n_pilot = 0;  ///< 0 selects the default pilot size
    std::size_t replicates = 1000;
};

/// Prior knowledge about model performance in the target population.
struct EvidencePrior {
    std::array<MarginalSpec, 4> marginals;  ///< ordered as ParameterTarget
    LocationKind location_kind = LocationKind::MeanCalibration;
    Eigen::Matrix4d rank_correlation = Eigen::Matrix4d::Identity();
    CorrelationSource correlation_source = CorrelationSource::Independent;
    BootstrapSettings bootstrap;

    const MarginalSpec& marginal(ParameterTarget t) const {
        return marginals[static_cast<std::size_t>(t)];
    }

    /// Throws DomainError naming the offending marginal.
    void validate() const;
};

/// Theta at the means of the marginals.
ThetaDraw point_theta(const EvidencePrior& prior, RiskFamily family);

/// Pilot size used by the bootstrap when none is configured: harmonic mean of
/// the effective sample sizes implied by the prevalence and c-statistic
/// marginals.
std::size_t default_pilot_size(const EvidencePrior& prior);

/// Spearman matrix of (phi-hat, c-hat, location-hat, slope-hat) over B
/// simulated pilot datasets, in ParameterTarget order, repaired to PSD.
struct BootstrapResult {
    Eigen::Matrix4d correlation;
    std::size_t replicates = 0;
    std::size_t dropped = 0;
};

BootstrapResult bootstrap_correlation(const ThetaDraw& point, LocationKind location, std::size_t n_pilot,
                                      std::size_t replicates, std::uint64_t seed, unsigned workers = 1);

/// Eigenvalues clipped at 1e-8, then rescaled to a unit diagonal.
Eigen::MatrixXd nearest_correlation(const Eigen::MatrixXd& m);

/// Reorders each column of `samples` so its ranks follow the columns of a
/// normal score matrix with the requested rank correlation. Each column is
/// only permuted.
void induce_rank_correlation(Eigen::MatrixXd& samples, const Eigen::MatrixXd& rank_correlation,
                             const Eigen::MatrixXd& normal_scores);

struct ThetaSample {
    std::vector<ThetaDraw> draws;
    std::size_t generated = 0;
    std::size_t rejected = 0;
    Eigen::Matrix4d correlation = Eigen::Matrix4d::Identity();
    std::vector<std::string> warnings;

    double rejection_rate() const {
        return generated == 0 ? 0.0 : static_cast<double>(rejected) / static_cast<double>(generated);
    }
};

/// S joint draws from the prior. Out-of-domain rows are rejected and redrawn.
ThetaSample draw_theta(const EvidencePrior& prior, std::size_t count, RiskFamily family,
                       std::uint64_t seed, unsigned workers = 1);

}  // namespace valplan
