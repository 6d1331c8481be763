#include "valplan/voi.hpp"

#include "valplan/error.hpp"
#include "valplan/numeric.hpp"
#include "valplan/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/binomial.hpp>

namespace valplan {

namespace {

void check_threshold(double z) {
    if (!(z > 0.0 && z < 1.0)) {
        throw DomainError("net-benefit threshold must lie in (0,1)");
    }
}

struct MeanSe {
    double mean;
    double se;
};

MeanSe mean_se(const std::vector<double>& v) {
    const double m = numeric::mean(v);
    const double se = v.size() > 1 ? numeric::sample_sd(v) / std::sqrt(static_cast<double>(v.size())) : 0.0;
    return {m, se};
}

}  // namespace

std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::TreatNone:
            return "none";
        case Strategy::UseModel:
            return "model";
        case Strategy::TreatAll:
            return "all";
    }
    return "unknown";
}

Strategy strategy_from_string(std::string_view name) {
    if (name == "none") {
        return Strategy::TreatNone;
    }
    if (name == "model") {
        return Strategy::UseModel;
    }
    if (name == "all") {
        return Strategy::TreatAll;
    }
    throw DomainError("unknown strategy '" + std::string(name) + "' (expected none, model or all)");
}

double NBTriple::operator[](Strategy s) const {
    switch (s) {
        case Strategy::TreatNone:
            return nb_none;
        case Strategy::UseModel:
            return nb_model;
        case Strategy::TreatAll:
            return nb_all;
    }
    return std::numeric_limits<double>::quiet_NaN();
}

Strategy NBTriple::best() const {
    Strategy best = Strategy::TreatNone;
    if (nb_model > (*this)[best]) {
        best = Strategy::UseModel;
    }
    if (nb_all > (*this)[best]) {
        best = Strategy::TreatAll;
    }
    return best;
}

NBTriple net_benefit(double phi, double sensitivity, double specificity, double z) {
    check_threshold(z);
    const double w = z / (1.0 - z);
    return {0.0, phi * sensitivity - (1.0 - phi) * (1.0 - specificity) * w, phi - (1.0 - phi) * w};
}

TrueDecision true_decision(const ThetaDraw& theta, double z) {
    check_threshold(z);
    const double p_star = theta.h.apply(z);
    const SensSpec acc = sens_spec_at(theta.risk, p_star);
    return {theta.phi, p_star, acc, net_benefit(theta.phi, acc.sensitivity, acc.specificity, z)};
}

std::uint64_t binomial_quantile(std::uint64_t n, double p, double u) {
    if (n == 0 || p <= 0.0) {
        return 0;
    }
    if (p >= 1.0) {
        return n;
    }
    const boost::math::binomial_distribution<double> bin(static_cast<double>(n), p);
    const double nd = static_cast<double>(n);
    auto k = static_cast<std::uint64_t>(std::min(nd, std::floor((nd + 1.0) * p)));
    double cdf = boost::math::cdf(bin, static_cast<double>(k));
    double pmf = boost::math::pdf(bin, static_cast<double>(k));
    const double odds = p / (1.0 - p);
    if (cdf >= u) {
        // Walk down while the previous cumulative probability still covers u.
        while (k > 0) {
            const double prev = cdf - pmf;
            if (prev < u) {
                break;
            }
            pmf *= static_cast<double>(k) / (static_cast<double>(n - k + 1) * odds);
            cdf = prev;
            --k;
        }
        return k;
    }
    while (k < n && cdf < u) {
        pmf *= static_cast<double>(n - k) / static_cast<double>(k + 1) * odds;
        cdf += pmf;
        ++k;
    }
    return k;
}

ConfusionCounts sample_confusion(const TrueDecision& truth, std::uint64_t n, const std::array<double, 3>& u) {
    const std::uint64_t events = binomial_quantile(n, truth.phi, u[0]);
    const std::uint64_t tp = binomial_quantile(events, truth.accuracy.sensitivity, u[1]);
    const std::uint64_t tn = binomial_quantile(n - events, truth.accuracy.specificity, u[2]);
    return {tp, events - tp, tn, n - events - tn};
}

ConfusionCounts sample_confusion(const ThetaDraw& theta, double z, std::uint64_t n, Engine& rng) {
    const TrueDecision truth = true_decision(theta, z);
    std::array<double, 3> u{};
    for (auto& x : u) {
        x = uniform01(rng);
    }
    return sample_confusion(truth, n, u);
}

NBTriple sample_net_benefit(const ConfusionCounts& c, double z, bool* undefined) {
    const double n = static_cast<double>(c.total());
    const std::uint64_t events = c.n_tp + c.n_fn;
    const std::uint64_t non_events = c.n_tn + c.n_fp;
    if (undefined != nullptr) {
        *undefined = events == 0 || non_events == 0;
    }
    const double phi = n > 0.0 ? static_cast<double>(events) / n : 0.0;
    const double se = events > 0 ? static_cast<double>(c.n_tp) / static_cast<double>(events) : 0.0;
    const double sp = non_events > 0 ? static_cast<double>(c.n_tn) / static_cast<double>(non_events) : 0.0;
    return net_benefit(phi, se, sp, z);
}

VoIContext::VoIContext(std::span<const ThetaDraw> draws, double z, std::uint64_t seed, unsigned workers,
                       StreamTag tag)
    : z_(z), workers_(workers), truth_(draws.size()), uniforms_(draws.size()) {
    check_threshold(z);
    if (draws.empty()) {
        throw DomainError("value-of-information analysis needs at least one theta draw");
    }
    parallel_for(draws.size(), workers, [&](std::size_t j) {
        truth_[j] = true_decision(draws[j], z);
        Engine rng = substream(seed, tag, j);
        for (auto& x : uniforms_[j]) {
            x = uniform01(rng);
        }
    });
    double none = 0.0, model = 0.0, all = 0.0, best = 0.0;
    for (const auto& t : truth_) {
        none += t.nb.nb_none;
        model += t.nb.nb_model;
        all += t.nb.nb_all;
        best += t.nb.max();
    }
    const double s = static_cast<double>(truth_.size());
    expected_ = {none / s, model / s, all / s};
    expected_max_ = best / s;
    current_ = expected_.best();
}

VoIResult VoIContext::evaluate(std::size_t n, const Baseline& baseline) const {
    const std::size_t count = truth_.size();
    const Strategy reference =
        baseline.kind == Baseline::Kind::BestCurrent ? current_ : baseline.default_strategy;

    std::vector<double> optimal(count);
    std::vector<double> gain(count);
    std::vector<double> regret(count);
    std::vector<std::uint8_t> flags(count);
    parallel_for(count, workers_, [&](std::size_t j) {
        const TrueDecision& t = truth_[j];
        Strategy winner = current_;
        if (n > 0) {
            bool undefined = false;
            const ConfusionCounts c = sample_confusion(t, n, uniforms_[j]);
            winner = sample_net_benefit(c, z_, &undefined).best();
            flags[j] = undefined ? 1 : 0;
        }
        const double realized = t.nb[winner];
        optimal[j] = realized >= t.nb.max() ? 1.0 : 0.0;
        gain[j] = realized - t.nb[reference];
        regret[j] = t.nb.max() - t.nb[current_];
    });

    VoIResult r;
    r.n = n;
    r.current_winner = current_;
    const MeanSe a = mean_se(optimal);
    r.assurance = a.mean;
    r.assurance_se = std::sqrt(a.mean * (1.0 - a.mean) / static_cast<double>(count));
    const MeanSe g = mean_se(gain);
    r.evsi = g.mean;
    r.evsi_se = g.se;
    const MeanSe v = mean_se(regret);
    r.evpi = v.mean;
    r.evpi_se = v.se;
    if (r.evpi > 0.0) {
        r.r_evsi = r.evsi / r.evpi;
        // Ratio estimator standard error.
        std::vector<double> lin(count);
        for (std::size_t j = 0; j < count; ++j) {
            lin[j] = (gain[j] - r.r_evsi * regret[j]) / r.evpi;
        }
        r.r_evsi_se = mean_se(lin).se;
    } else {
        r.r_evsi = std::numeric_limits<double>::quiet_NaN();
        r.r_evsi_se = std::numeric_limits<double>::quiet_NaN();
    }
    r.flagged = static_cast<std::size_t>(std::count(flags.begin(), flags.end(), std::uint8_t{1}));
    r.evsi_negative = r.evsi + 3.0 * r.evsi_se < 0.0;
    return r;
}

VoIResult voi_run(std::span<const ThetaDraw> draws, double z, std::size_t n, const Baseline& baseline,
                  std::uint64_t seed, unsigned workers) {
    return VoIContext(draws, z, seed, workers).evaluate(n, baseline);
}

VoIResult voi_run(const EvidencePrior& prior, RiskFamily family, double z, std::size_t n, std::size_t count,
                  const Baseline& baseline, std::uint64_t seed, unsigned workers) {
    const ThetaSample theta = draw_theta(prior, count, family, seed, workers);
    return voi_run(theta.draws, z, n, baseline, seed, workers);
}

std::vector<VoIResult> evsi_curve(std::span<const ThetaDraw> draws, double z, std::span<const std::size_t> n_grid,
                                  const Baseline& baseline, std::uint64_t seed, unsigned workers) {
    if (!std::is_sorted(n_grid.begin(), n_grid.end())) {
        throw DomainError("evsi_curve: sample-size grid must be sorted ascending");
    }
    const VoIContext ctx(draws, z, seed, workers);
    std::vector<VoIResult> out;
    out.reserve(n_grid.size());
    for (std::size_t n : n_grid) {
        out.push_back(ctx.evaluate(n, baseline));
    }
    return out;
}

double enbs(double evsi, double n, double population, double cost_per_participant) {
    return population * evsi - cost_per_participant * n;
}

}  // namespace valplan
