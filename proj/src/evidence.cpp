#include "valplan/evidence.hpp"

#include "valplan/error.hpp"
#include "valplan/numeric.hpp"
#include "valplan/parallel.hpp"
#include "valplan/precision.hpp"
#include "valplan/sample.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <boost/math/special_functions/beta.hpp>

namespace valplan {

namespace {

constexpr double kZ975 = 1.959963984540054;

std::string marginal_name(std::size_t index) {
    return std::string(to_string(static_cast<ParameterTarget>(index)));
}

double logit_normal_sd(double mu, double sigma) {
    const auto d = RiskDistribution::logit_normal(mu, sigma);
    const double m = mean(d);
    const double second = expectation(d, [](const RiskPoint& pt) { return pt.p * pt.p; });
    return std::sqrt(std::max(0.0, second - m * m));
}

ResolvedMarginal resolve_beta(const MarginalSpec& spec) {
    const double m = spec.first;
    switch (spec.parameterization) {
        case Parameterization::NativeParams:
            if (!(spec.first > 0.0 && spec.second > 0.0)) {
                throw DomainError("Beta parameters must be positive");
            }
            return {MarginalFamily::Beta, spec.first, spec.second};
        case Parameterization::MeanSD: {
            const double s = spec.second;
            if (!(m > 0.0 && m < 1.0) || !(s > 0.0) || s * s >= m * (1.0 - m)) {
                throw DomainError("Beta moments infeasible: need 0 < mean < 1 and SD^2 < mean(1-mean)");
            }
            const double kappa = m * (1.0 - m) / (s * s) - 1.0;
            return {MarginalFamily::Beta, m * kappa, (1.0 - m) * kappa};
        }
        case Parameterization::MeanUpperCI95: {
            const double u = spec.second;
            if (!(m > 0.0 && m < 1.0) || !(u > m && u < 1.0)) {
                throw DomainError("Beta mean/upper bound infeasible: need 0 < mean < upper < 1");
            }
            numeric::RootOptions opt;
            opt.positive = true;
            opt.hard_lo = 1e-6;
            opt.hard_hi = 1e12;
            const double kappa = numeric::solve_monotone(
                [&](double k) { return boost::math::ibeta_inv(m * k, (1.0 - m) * k, 0.975) - u; }, 1.0, 1e3,
                opt);
            return {MarginalFamily::Beta, m * kappa, (1.0 - m) * kappa};
        }
    }
    throw DomainError("unsupported Beta parameterization");
}

ResolvedMarginal resolve_logit_normal(const MarginalSpec& spec) {
    const double m = spec.first;
    switch (spec.parameterization) {
        case Parameterization::NativeParams:
            if (!(spec.second > 0.0)) {
                throw DomainError("logit-normal SD must be positive");
            }
            return {MarginalFamily::LogitNormal, spec.first, spec.second};
        case Parameterization::MeanSD: {
            const double s = spec.second;
            if (!(m > 0.0 && m < 1.0) || !(s > 0.0) || s * s >= m * (1.0 - m)) {
                throw DomainError("logit-normal moments infeasible: need 0 < mean < 1 and SD^2 < mean(1-mean)");
            }
            auto location = [m](double sigma) {
                numeric::RootOptions opt;
                opt.tolerance_bits = 50;
                const double guess = numeric::logit(m) * std::sqrt(1.0 + 0.346 * sigma * sigma);
                return numeric::solve_monotone(
                    [&](double mu) { return mean(RiskDistribution::logit_normal(mu, sigma)) - m; },
                    guess - 0.25, guess + 0.25, opt);
            };
            numeric::RootOptions opt;
            opt.positive = true;
            opt.hard_lo = 1e-10;
            opt.hard_hi = 1e3;
            const double sigma = numeric::solve_monotone(
                [&](double sg) { return logit_normal_sd(location(sg), sg) - s; }, 0.05, 2.0, opt);
            return {MarginalFamily::LogitNormal, location(sigma), sigma};
        }
        case Parameterization::MeanUpperCI95: {
            const double u = spec.second;
            if (!(m > 0.0 && m < 1.0) || !(u > m && u < 1.0)) {
                throw DomainError("logit-normal estimate/upper bound infeasible: need 0 < estimate < upper < 1");
            }
            const double mu = numeric::logit(m);
            return {MarginalFamily::LogitNormal, mu, (numeric::logit(u) - mu) / kZ975};
        }
    }
    throw DomainError("unsupported logit-normal parameterization");
}

ResolvedMarginal resolve_normal(const MarginalSpec& spec) {
    switch (spec.parameterization) {
        case Parameterization::NativeParams:
        case Parameterization::MeanSD:
            if (!(spec.second > 0.0)) {
                throw DomainError("normal SD must be positive");
            }
            return {MarginalFamily::Normal, spec.first, spec.second};
        case Parameterization::MeanUpperCI95:
            if (!(spec.second > spec.first)) {
                throw DomainError("upper 95% bound must exceed the mean");
            }
            return {MarginalFamily::Normal, spec.first, (spec.second - spec.first) / kZ975};
    }
    throw DomainError("unsupported normal parameterization");
}

ResolvedMarginal resolve_log_normal(const MarginalSpec& spec) {
    const double m = spec.first;
    switch (spec.parameterization) {
        case Parameterization::NativeParams:
            if (!(spec.second > 0.0)) {
                throw DomainError("log-normal SD must be positive");
            }
            return {MarginalFamily::LogNormal, spec.first, spec.second};
        case Parameterization::MeanSD: {
            if (!(m > 0.0) || !(spec.second > 0.0)) {
                throw DomainError("log-normal mean and SD must be positive");
            }
            const double var_log = std::log1p(spec.second * spec.second / (m * m));
            return {MarginalFamily::LogNormal, std::log(m) - 0.5 * var_log, std::sqrt(var_log)};
        }
        case Parameterization::MeanUpperCI95:
            if (!(m > 0.0) || !(spec.second > m)) {
                throw DomainError("log-normal estimate/upper bound infeasible: need 0 < estimate < upper");
            }
            return {MarginalFamily::LogNormal, std::log(m), (std::log(spec.second) - std::log(m)) / kZ975};
    }
    throw DomainError("unsupported log-normal parameterization");
}

// Pearson correlation of normal scores that yields the given Spearman rank
// correlation.
Eigen::MatrixXd spearman_to_pearson(const Eigen::MatrixXd& rank_correlation) {
    Eigen::MatrixXd r = rank_correlation;
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
        for (Eigen::Index j = 0; j < r.cols(); ++j) {
            r(i, j) = i == j ? 1.0 : 2.0 * std::sin(std::numbers::pi * rank_correlation(i, j) / 6.0);
        }
    }
    return nearest_correlation(r);
}

// Lower factor L with m = L L^T for a PSD matrix.
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& m) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) {
        return llt.matrixL();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal();
}

bool is_identity(const Eigen::Matrix4d& m) { return m.isApprox(Eigen::Matrix4d::Identity(), 0.0); }

std::optional<ThetaDraw> theta_from_row(const Eigen::MatrixXd& raw, Eigen::Index row,
                                        LocationKind kind, RiskFamily family) {
    const double phi = raw(row, 0);
    const double c = raw(row, 1);
    const double slope = raw(row, 2);
    const double location = raw(row, 3);
    if (!(phi > 0.0 && phi < 1.0) || !(c > 0.5 && c < 1.0) || !(slope > 0.0)) {
        return std::nullopt;
    }
    const CalibrationLocationSpec spec{kind, location};
    if (kind != LocationKind::Intercept) {
        if (kind == LocationKind::OERatio && !(location > 0.0)) {
            return std::nullopt;
        }
        const double e_pi = implied_predicted_mean(spec, phi);
        if (!(e_pi > 0.0 && e_pi < 1.0)) {
            return std::nullopt;
        }
    }
    try {
        return make_theta(phi, c, slope, spec, family);
    } catch (const Error&) {
        return std::nullopt;
    }
}

}  // namespace

std::string_view to_string(MarginalFamily family) {
    switch (family) {
        case MarginalFamily::Beta:
            return "beta";
        case MarginalFamily::Normal:
            return "normal";
        case MarginalFamily::LogNormal:
            return "lognormal";
        case MarginalFamily::LogitNormal:
            return "logitnormal";
        case MarginalFamily::PointMass:
            return "point";
    }
    return "unknown";
}

std::string_view to_string(ParameterTarget target) {
    switch (target) {
        case ParameterTarget::Prevalence:
            return "prevalence";
        case ParameterTarget::CStatistic:
            return "cstat";
        case ParameterTarget::Slope:
            return "slope";
        case ParameterTarget::Location:
            return "location";
    }
    return "unknown";
}

ThetaDraw make_theta(double phi, double cstat, double slope, const CalibrationLocationSpec& location,
                     RiskFamily family) {
    const RiskDistribution risk = identify({phi, cstat}, family);
    const CalibrationModel h = resolve_intercept(location, slope, risk);
    return {phi, cstat, h, risk};
}

double ResolvedMarginal::mean() const {
    switch (family) {
        case MarginalFamily::Beta:
            return param1 / (param1 + param2);
        case MarginalFamily::Normal:
        case MarginalFamily::PointMass:
            return param1;
        case MarginalFamily::LogNormal:
            return std::exp(param1 + 0.5 * param2 * param2);
        case MarginalFamily::LogitNormal:
            return valplan::mean(RiskDistribution::logit_normal(param1, param2));
    }
    return std::numeric_limits<double>::quiet_NaN();
}

double ResolvedMarginal::sd() const {
    switch (family) {
        case MarginalFamily::Beta: {
            const double k = param1 + param2;
            return std::sqrt(param1 * param2 / (k * k * (k + 1.0)));
        }
        case MarginalFamily::Normal:
            return param2;
        case MarginalFamily::PointMass:
            return 0.0;
        case MarginalFamily::LogNormal:
            return std::sqrt(std::expm1(param2 * param2)) * mean();
        case MarginalFamily::LogitNormal:
            return logit_normal_sd(param1, param2);
    }
    return std::numeric_limits<double>::quiet_NaN();
}

double ResolvedMarginal::draw(Engine& rng) const {
    switch (family) {
        case MarginalFamily::Beta: {
            std::gamma_distribution<double> ga(param1);
            std::gamma_distribution<double> gb(param2);
            const double x = ga(rng);
            const double y = gb(rng);
            return x / (x + y);
        }
        case MarginalFamily::Normal: {
            std::normal_distribution<double> z(param1, param2);
            return z(rng);
        }
        case MarginalFamily::LogNormal: {
            std::normal_distribution<double> z(param1, param2);
            return std::exp(z(rng));
        }
        case MarginalFamily::LogitNormal: {
            std::normal_distribution<double> z(param1, param2);
            return numeric::expit(z(rng));
        }
        case MarginalFamily::PointMass:
            return param1;
    }
    return std::numeric_limits<double>::quiet_NaN();
}

ResolvedMarginal marginal_from_moments(const MarginalSpec& spec) {
    switch (spec.family) {
        case MarginalFamily::Beta:
            return resolve_beta(spec);
        case MarginalFamily::LogitNormal:
            return resolve_logit_normal(spec);
        case MarginalFamily::Normal:
            return resolve_normal(spec);
        case MarginalFamily::LogNormal:
            return resolve_log_normal(spec);
        case MarginalFamily::PointMass:
            if (!std::isfinite(spec.first)) {
                throw DomainError("point mass value must be finite");
            }
            return {MarginalFamily::PointMass, spec.first, 0.0};
    }
    throw DomainError("unsupported marginal family");
}

void EvidencePrior::validate() const {
    for (std::size_t i = 0; i < marginals.size(); ++i) {
        const auto& m = marginals[i];
        const bool unit_interval = i == static_cast<std::size_t>(ParameterTarget::Prevalence) ||
                                   i == static_cast<std::size_t>(ParameterTarget::CStatistic);
        if (unit_interval && m.family != MarginalFamily::Beta && m.family != MarginalFamily::LogitNormal &&
            m.family != MarginalFamily::PointMass) {
            throw DomainError(marginal_name(i) + ": distribution must be supported on (0,1)");
        }
        if (m.parameterization == Parameterization::MeanUpperCI95 && !(m.second > m.first)) {
            throw DomainError(marginal_name(i) + ": upper 95% bound must exceed the mean");
        }
        try {
            (void)marginal_from_moments(m);
        } catch (const DomainError& e) {
            throw DomainError(marginal_name(i) + ": " + e.what());
        }
    }
    if (!rank_correlation.isApprox(rank_correlation.transpose())) {
        throw DomainError("rank correlation matrix must be symmetric");
    }
    for (int i = 0; i < 4; ++i) {
        if (rank_correlation(i, i) != 1.0) {
            throw DomainError("rank correlation matrix must have a unit diagonal");
        }
        for (int j = 0; j < 4; ++j) {
            if (std::abs(rank_correlation(i, j)) > 1.0) {
                throw DomainError("rank correlation entries must lie in [-1, 1]");
            }
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(rank_correlation);
    if (es.eigenvalues().minCoeff() < -1e-10) {
        throw DomainError("rank correlation matrix must be positive semi-definite");
    }
}

ThetaDraw point_theta(const EvidencePrior& prior, RiskFamily family) {
    std::array<double, 4> means{};
    for (std::size_t i = 0; i < 4; ++i) {
        means[i] = marginal_from_moments(prior.marginals[i]).mean();
    }
    return make_theta(means[0], means[1], means[2], {prior.location_kind, means[3]}, family);
}

std::size_t default_pilot_size(const EvidencePrior& prior) {
    const auto prev = marginal_from_moments(prior.marginal(ParameterTarget::Prevalence));
    const auto cst = marginal_from_moments(prior.marginal(ParameterTarget::CStatistic));
    std::vector<double> sizes;
    const double phi = prev.mean();
    if (prev.sd() > 0.0) {
        sizes.push_back(phi * (1.0 - phi) / (prev.sd() * prev.sd()) - 1.0);
    }
    if (cst.sd() > 0.0) {
        const double c = cst.mean();
        const double target = cst.sd();
        numeric::RootOptions opt;
        opt.positive = true;
        opt.hard_lo = 4.0;
        opt.hard_hi = 1e9;
        try {
            sizes.push_back(numeric::solve_monotone(
                [&](double n) { return se_cstat(c, phi, n) - target; }, 100.0, 1e4, opt));
        } catch (const NumericError&) {
        }
    }
    if (sizes.empty()) {
        return 1000;
    }
    double inv = 0.0;
    for (double s : sizes) {
        inv += 1.0 / std::max(s, 1.0);
    }
    const double harmonic = static_cast<double>(sizes.size()) / inv;
    return std::max<std::size_t>(50, static_cast<std::size_t>(std::llround(harmonic)));
}

Eigen::MatrixXd nearest_correlation(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    const Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(1e-8);
    Eigen::MatrixXd out = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
    const Eigen::VectorXd scale = out.diagonal().cwiseSqrt().cwiseInverse();
    out = scale.asDiagonal() * out * scale.asDiagonal();
    out.diagonal().setOnes();
    return out;
}

void induce_rank_correlation(Eigen::MatrixXd& samples, const Eigen::MatrixXd& rank_correlation,
                             const Eigen::MatrixXd& normal_scores) {
    const Eigen::Index n = samples.rows();
    const Eigen::Index k = samples.cols();
    if (normal_scores.rows() != n || normal_scores.cols() != k || rank_correlation.rows() != k ||
        rank_correlation.cols() != k) {
        throw DomainError("induce_rank_correlation: dimension mismatch");
    }
    if (n < 2) {
        return;
    }
    const Eigen::MatrixXd target = psd_factor(spearman_to_pearson(rank_correlation));
    Eigen::MatrixXd scores = normal_scores;
    if (n > k + 1) {
        // Remove the sample correlation of the scores before imposing the target.
        const Eigen::RowVectorXd mu = scores.colwise().mean();
        const Eigen::MatrixXd centred = scores.rowwise() - mu;
        Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(n - 1);
        const Eigen::VectorXd inv_sd = cov.diagonal().cwiseSqrt().cwiseInverse();
        cov = inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() == Eigen::Success) {
            const Eigen::MatrixXd lower = llt.matrixL();
            scores = (lower.triangularView<Eigen::Lower>().solve(centred.transpose())).transpose();
        }
    }
    scores = scores * target.transpose();

    for (Eigen::Index c = 0; c < k; ++c) {
        std::vector<double> col(samples.col(c).data(), samples.col(c).data() + n);
        std::sort(col.begin(), col.end());
        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            order[static_cast<std::size_t>(i)] = i;
        }
        std::stable_sort(order.begin(), order.end(),
                         [&](Eigen::Index a, Eigen::Index b) { return scores(a, c) < scores(b, c); });
        for (Eigen::Index r = 0; r < n; ++r) {
            samples(order[static_cast<std::size_t>(r)], c) = col[static_cast<std::size_t>(r)];
        }
    }
}

BootstrapResult bootstrap_correlation(const ThetaDraw& point, LocationKind location, std::size_t n_pilot,
                                      std::size_t replicates, std::uint64_t seed, unsigned workers) {
    if (replicates < 100) {
        throw DomainError("bootstrap_correlation: at least 100 replicates are required");
    }
    if (n_pilot < 50) {
        throw DomainError("bootstrap_correlation: pilot size must be at least 50");
    }
    std::vector<std::optional<std::array<double, 4>>> rows(replicates);
    parallel_for(replicates, workers, [&](std::size_t b) {
        Engine rng = substream(seed, StreamTag::Bootstrap, b);
        try {
            const ValidationSample s = simulate_sample(point, n_pilot, rng);
            const SampleEstimates est = estimate_metrics(s);
            if (!est.fit.converged) {
                return;
            }
            double loc = est.fit.intercept;
            if (location == LocationKind::OERatio) {
                loc = est.oe_hat;
            } else if (location == LocationKind::MeanCalibration) {
                loc = est.mean_calibration_hat;
            }
            rows[b] = std::array<double, 4>{est.phi_hat, est.c_hat, est.fit.slope, loc};
        } catch (const NumericError&) {
        }
    });
    std::array<std::vector<double>, 4> columns;
    std::size_t dropped = 0;
    for (const auto& row : rows) {
        if (!row) {
            ++dropped;
            continue;
        }
        for (std::size_t i = 0; i < 4; ++i) {
            columns[i].push_back((*row)[i]);
        }
    }
    if (static_cast<double>(dropped) > 0.05 * static_cast<double>(replicates)) {
        std::ostringstream os;
        os << "bootstrap_correlation: " << dropped << " of " << replicates
           << " replicates failed to produce estimates (limit 5%)";
        throw NumericError(os.str());
    }
    Eigen::MatrixXd rho = Eigen::MatrixXd::Identity(4, 4);
    for (int i = 0; i < 4; ++i) {
        for (int j = i + 1; j < 4; ++j) {
            rho(i, j) = rho(j, i) = numeric::spearman(columns[i], columns[j]);
        }
    }
    return {nearest_correlation(rho), replicates, dropped};
}

ThetaSample draw_theta(const EvidencePrior& prior, std::size_t count, RiskFamily family, std::uint64_t seed,
                       unsigned workers) {
    if (count == 0) {
        throw DomainError("draw_theta: at least one draw is required");
    }
    prior.validate();
    std::array<ResolvedMarginal, 4> marginals{};
    for (std::size_t i = 0; i < 4; ++i) {
        marginals[i] = marginal_from_moments(prior.marginals[i]);
    }

    ThetaSample out;
    switch (prior.correlation_source) {
        case CorrelationSource::Independent:
            out.correlation.setIdentity();
            break;
        case CorrelationSource::UserSupplied:
            out.correlation = nearest_correlation(prior.rank_correlation);
            break;
        case CorrelationSource::ParametricBootstrap: {
            const std::size_t pilot =
                prior.bootstrap.n_pilot > 0 ? prior.bootstrap.n_pilot : default_pilot_size(prior);
            out.correlation = bootstrap_correlation(point_theta(prior, family), prior.location_kind, pilot,
                                                    prior.bootstrap.replicates, seed, workers)
                                  .correlation;
            break;
        }
    }
    const bool correlated = !is_identity(out.correlation);

    out.draws.reserve(count);
    for (std::uint64_t round = 0; out.draws.size() < count; ++round) {
        if (round >= 100) {
            throw DomainError("prior infeasible: could not collect enough valid draws");
        }
        const std::size_t need = count - out.draws.size();
        const auto rows = static_cast<Eigen::Index>(need);
        Eigen::MatrixXd raw(rows, 4);
        Eigen::MatrixXd scores(rows, 4);
        for (Eigen::Index r = 0; r < rows; ++r) {
            Engine rng = substream(seed, StreamTag::MarginalDraw, static_cast<std::uint64_t>(r), round);
            for (int c = 0; c < 4; ++c) {
                raw(r, c) = marginals[static_cast<std::size_t>(c)].draw(rng);
            }
            std::normal_distribution<double> z;
            for (int c = 0; c < 4; ++c) {
                scores(r, c) = z(rng);
            }
        }
        if (correlated) {
            induce_rank_correlation(raw, out.correlation, scores);
        }

        // Rows identical to their predecessor (point-mass priors) are resolved once.
        std::vector<std::size_t> source(need);
        for (std::size_t r = 0; r < need; ++r) {
            const auto i = static_cast<Eigen::Index>(r);
            source[r] = (r > 0 && raw.row(i) == raw.row(i - 1)) ? source[r - 1] : r;
        }
        std::vector<std::optional<ThetaDraw>> resolved(need);
        parallel_for(need, workers, [&](std::size_t r) {
            if (source[r] == r) {
                resolved[r] = theta_from_row(raw, static_cast<Eigen::Index>(r), prior.location_kind, family);
            }
        });
        for (std::size_t r = 0; r < need; ++r) {
            const auto& t = resolved[source[r]];
            if (t) {
                out.draws.push_back(*t);
            } else {
                ++out.rejected;
            }
        }
        out.generated += need;
        if (out.rejection_rate() > 0.5) {
            std::ostringstream os;
            os << "prior infeasible: " << out.rejected << " of " << out.generated
               << " draws violate the regularity conditions";
            throw DomainError(os.str());
        }
    }
    if (out.rejection_rate() > 0.01) {
        std::ostringstream os;
        os << "rejected " << out.rejected << " of " << out.generated
           << " prior draws outside the valid domain (" << 100.0 * out.rejection_rate() << "%)";
        out.warnings.push_back(os.str());
    }
    return out;
}

}  // namespace valplan
