#pragma once

#include "winodds/data_model.hpp"
#include "winodds/pim_fit.hpp"
#include "winodds/win_rule.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace winodds {

enum class Method { Direct, Adjusted };
enum class Sided { One, Two };

std::string to_string(Method m);
std::string to_string(Sided s);

/// Estimate of the marginal probabilistic index nu with its variance.
struct MpiResult {
    double nu_hat = 0.5;
    double variance = 0.0;
    Method method = Method::Direct;
    std::size_t n = 0, n0 = 0, n1 = 0;
    /// Set when the variance estimate is exactly zero (constant win fractions).
    bool degenerate = false;
    /// (wins - losses) / (N0 N1); populated for the direct method.
    std::optional<double> delta_hat;
    /// (2 wins + ties) / (2 losses + ties) from the exact counts; populated
    /// for the direct method and used as theta_hat when present.
    std::optional<double> odds;

    bool operator==(const MpiResult&) const = default;
};

/// Win-odds scale inference derived from an MpiResult.
struct WinOddsResult {
    double theta_hat = 1.0;
    double ci_low = 0.0, ci_high = 0.0;
    double nu_ci_low = 0.0, nu_ci_high = 0.0;
    double z = 0.0;
    double p_two_sided = 1.0;
    /// For H0: theta <= 1.
    double p_one_sided = 0.5;
    double log_theta_variance = 0.0;
    double alpha = 0.05;
    std::optional<double> delta_hat;
    /// True when a nu-scale CI endpoint fell outside (0, 1) and was clamped.
    bool clamped = false;

    bool operator==(const WinOddsResult&) const = default;
};

class InferenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---- point estimates ----------------------------------------------------

/// (wins + ties/2) / (N0 N1), with delta_hat filled in; variance left at 0.
MpiResult direct_mpi(const WinTally& t);

/// Σ_{i≠j} expit(tau_a + tau_x'(X_j - X_i)) / (n(n-1)).
double standardized_mpi(const PimFit& fit, const Dataset& ds, unsigned workers = 0);

/// nu_direct + Σ_{i≠j} (1/(n(n-1)) - (1-A_i)A_j/(N0 N1)) expit(tau_a + tau_x'(X_j - X_i)).
double augmented_mpi(const PimFit& fit, const WinTally& t, const Dataset& ds, unsigned workers = 0);

/// Augmentation with an arbitrary fixed function H(X_i, X_j) in place of
/// the fitted CPI. Intended for checks and small data (plain double loop).
using AugmentationFunction = std::function<double(std::span<const double>, std::span<const double>)>;
double augmented_mpi_with(const AugmentationFunction& h, const WinTally& t, const Dataset& ds);

// ---- variances ----------------------------------------------------------

struct VarianceEstimate {
    double value = 0.0;
    bool degenerate = false;
};

/// Two-sample projection variance S1²/N1 + S0²/N0 of the direct estimator.
VarianceEstimate unadjusted_variance(const WinTally& t);

/// Influence-function variance of the augmented estimator, treating the
/// fitted CPI as a fixed augmentation function.
double adjusted_variance(const PimFit& fit, const WinTally& t, const Dataset& ds, unsigned workers = 0,
                         const ComparisonRule& rule = hierarchical_rule());

enum class BootstrapTarget { Direct, Augmented };

/// Fills `out` with a stratified resample: for each arm, draws that arm's
/// size of row indices from `arm_rows` with replacement.
using Resampler = std::function<void(std::size_t replicate, std::span<const std::size_t> control_rows,
                                     std::span<const std::size_t> treated_rows, std::vector<std::size_t>& out)>;

/// Default resampler: per-replicate mt19937_64 streams keyed by (seed, replicate).
Resampler seeded_resampler(std::uint64_t seed);

struct BootstrapOptions {
    BootstrapTarget target = BootstrapTarget::Augmented;
    PimOptions pim;  // start point is overwritten with the full-data fit
    unsigned workers = 0;
};

/// Stratified nonparametric bootstrap variance of nu_aug (refitting the PIM
/// per resample) or of nu_direct. Requires B >= 100.
double bootstrap_variance(const Dataset& ds, std::size_t B, std::uint64_t seed, const BootstrapOptions& options = {});
/// Same with an injected resampler; requires B >= 2.
double bootstrap_variance(const Dataset& ds, std::size_t B, const Resampler& resampler,
                          const BootstrapOptions& options = {});

// ---- inference ----------------------------------------------------------

/// Wald inference on the nu scale mapped to the win-odds scale.
WinOddsResult win_odds_inference(const MpiResult& m, double alpha);

// ---- orchestration ------------------------------------------------------

struct AnalysisOptions {
    double alpha = 0.05;
    Sided sided = Sided::Two;
    /// 0 disables the bootstrap cross-check.
    std::size_t bootstrap = 0;
    std::uint64_t seed = 1;
    unsigned workers = 0;
    PimOptions pim;
};

struct StageTimings {
    double tally_s = 0.0;
    double fit_s = 0.0;
    double estimate_s = 0.0;
    double variance_s = 0.0;
    double bootstrap_s = 0.0;

    bool operator==(const StageTimings&) const = default;
};

struct AnalysisReport {
    EventSummary summary;
    std::vector<std::string> adjusted_for;
    std::uint64_t wins = 0, losses = 0, ties = 0;
    PimFit fit;
    MpiResult unadjusted;
    WinOddsResult unadjusted_inference;
    MpiResult adjusted;
    WinOddsResult adjusted_inference;
    double nu_standardized = 0.5;
    double nu_augmented = 0.5;
    /// |nu_standardized - nu_augmented|.
    double identity_residual = 0.0;
    double alpha = 0.05;
    Sided sided = Sided::Two;
    std::optional<double> bootstrap_unadjusted_variance;
    std::optional<double> bootstrap_adjusted_variance;
    std::size_t bootstrap_replicates = 0;
    StageTimings timings;

    bool operator==(const AnalysisReport&) const = default;
};

/// Tally, PIM fit on the selected covariates, both estimators, variances
/// and win-odds inference. Errors propagate (DataError, FitError,
/// InferenceError); no partial report is returned.
AnalysisReport analyze(const Dataset& ds, std::span<const std::string> adjust, const AnalysisOptions& options = {});

}  // namespace winodds
