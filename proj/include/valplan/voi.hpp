#pragma once

#include "valplan/evidence.hpp"
#include "valplan/theta.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace valplan {

/// Decision options at a risk threshold, in tie-breaking order.
enum class Strategy : std::size_t { TreatNone = 0, UseModel = 1, TreatAll = 2 };

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view name);

/// Net benefit of each strategy in true-positive units per patient.
struct NBTriple {
    double nb_none = 0.0;
    double nb_model = 0.0;
    double nb_all = 0.0;

    double operator[](Strategy s) const;
    /// argmax; ties go to the smaller strategy index.
    Strategy best() const;
    double max() const { return (*this)[best()]; }
};

NBTriple net_benefit(double phi, double sensitivity, double specificity, double z);

struct ConfusionCounts {
    std::uint64_t n_tp = 0;
    std::uint64_t n_fn = 0;
    std::uint64_t n_tn = 0;
    std::uint64_t n_fp = 0;

    std::uint64_t total() const { return n_tp + n_fn + n_tn + n_fp; }
};

/// True classification accuracy and net benefit of a theta draw at threshold
/// z on the predicted-risk scale.
struct TrueDecision {
    double phi;
    double calibrated_threshold;  ///< h(z)
    SensSpec accuracy;
    NBTriple nb;
};

TrueDecision true_decision(const ThetaDraw& theta, double z);

/// Smallest k with P(Binomial(n, p) <= k) >= u.
std::uint64_t binomial_quantile(std::uint64_t n, double p, double u);

/// Chained binomials N+ ~ Bin(n, phi), TP ~ Bin(N+, se), TN ~ Bin(n - N+, sp),
/// driven by three fixed uniforms so that counts move monotonically with n.
ConfusionCounts sample_confusion(const TrueDecision& truth, std::uint64_t n, const std::array<double, 3>& u);

ConfusionCounts sample_confusion(const ThetaDraw& theta, double z, std::uint64_t n, Engine& rng);

/// Net benefit estimated from a validation sample. `undefined` is set when
/// the sample has no events or no non-events.
NBTriple sample_net_benefit(const ConfusionCounts& counts, double z, bool* undefined = nullptr);

struct Baseline {
    enum class Kind { BestCurrent, ForcedDefault };
    Kind kind = Kind::BestCurrent;
    Strategy default_strategy = Strategy::TreatAll;

    static Baseline best_current() { return {}; }
    static Baseline forced(Strategy s) { return {Kind::ForcedDefault, s}; }
};

struct VoIResult {
    std::size_t n = 0;
    double assurance = 0.0;
    double assurance_se = 0.0;
    double evpi = 0.0;
    double evpi_se = 0.0;
    double evsi = 0.0;
    double evsi_se = 0.0;
    double r_evsi = 0.0;  ///< NaN when EVPI is zero
    double r_evsi_se = 0.0;
    Strategy current_winner = Strategy::TreatNone;
    std::size_t flagged = 0;  ///< samples with undefined sensitivity or specificity
    bool evsi_negative = false;  ///< EVSI below zero beyond Monte Carlo error
};

/// Per-draw true decisions and fixed uniforms, shared by evaluations at
/// different n (common random numbers).
class VoIContext {
public:
    VoIContext(std::span<const ThetaDraw> draws, double z, std::uint64_t seed, unsigned workers = 1,
               StreamTag tag = StreamTag::Confusion);

    VoIResult evaluate(std::size_t n, const Baseline& baseline = {}) const;

    std::size_t size() const noexcept { return truth_.size(); }
    double z() const noexcept { return z_; }
    Strategy current_winner() const noexcept { return current_; }
    const NBTriple& expected_nb() const noexcept { return expected_; }
    double expected_max() const noexcept { return expected_max_; }
    std::span<const TrueDecision> truth() const noexcept { return truth_; }

private:
    double z_;
    unsigned workers_;
    std::vector<TrueDecision> truth_;
    std::vector<std::array<double, 3>> uniforms_;
    NBTriple expected_;
    double expected_max_ = 0.0;
    Strategy current_ = Strategy::TreatNone;
};

VoIResult voi_run(std::span<const ThetaDraw> draws, double z, std::size_t n, const Baseline& baseline,
                  std::uint64_t seed, unsigned workers = 1);

VoIResult voi_run(const EvidencePrior& prior, RiskFamily family, double z, std::size_t n, std::size_t count,
                  const Baseline& baseline, std::uint64_t seed, unsigned workers = 1);

/// One evaluation per grid point with common theta draws and uniforms.
std::vector<VoIResult> evsi_curve(std::span<const ThetaDraw> draws, double z, std::span<const std::size_t> n_grid,
                                  const Baseline& baseline, std::uint64_t seed, unsigned workers = 1);

/// Expected net benefit of sampling: population * EVSI - per-participant cost * n.
double enbs(double evsi, double n, double population, double cost_per_participant);

}  // namespace valplan
