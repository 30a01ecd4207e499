#pragma once

#include "winodds/data_model.hpp"
#include "winodds/estimators.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace winodds {

enum class Scenario { A, B, C };

std::string to_string(Scenario s);
/// "A", "B" or "C" (case-insensitive); throws std::invalid_argument otherwise.
Scenario parse_scenario(const std::string& name);

constexpr std::size_t kSimCovariates = 10;

/// Unit-norm prognostic weights of the ten simulated covariates.
struct ScenarioWeights {
    std::array<double, kSimCovariates> gamma{};
};

ScenarioWeights scenario_weights(Scenario s);

/// How the null-hypothesis treatment labels are produced.
enum class FlipMode {
    Redraw,   // fresh independent Bernoulli(1/2) labels
    Permute,  // random permutation of the realised labels (keeps N1)
};

struct TrialOptions {
    double event_fraction = 0.35;
    double scale = 7500.0;
    FlipMode flip_mode = FlipMode::Redraw;
};

/// Seeded generator stream for (master seed, replicate, purpose).
std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t replicate, std::uint32_t purpose);

/// Draws one trial from the exponential latent failure time model with
/// administrative censoring at the empirical event_fraction-quantile of
/// min(T1, T2). Labels are redrawn until both arms have at least two
/// subjects. `replicate` selects an independent substream of `seed`.
Dataset simulate_trial(std::size_t n, const ScenarioWeights& weights, double effect, bool null_flip,
                       std::uint64_t seed, const TrialOptions& options = {}, std::uint64_t replicate = 0);

/// ⌈q·n⌉-th order statistic (left-continuous inverse of the empirical CDF).
double empirical_quantile(std::span<const double> values, double q);

struct StudyConfig {
    std::size_t n = 1000;
    std::size_t reps = 1000;
    Scenario scenario = Scenario::A;
    double treatment_effect = 0.3;
    bool null_flip = false;
    FlipMode flip_mode = FlipMode::Redraw;
    double alpha = 0.025;
    std::vector<std::size_t> adjustment_sets{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::uint64_t seed = 1;
    double event_fraction = 0.35;
    double scale = 7500.0;
};

void validate(const StudyConfig& cfg);

struct StudyRow {
    std::size_t adjustment_size = 0;
    Method method = Method::Direct;
    std::size_t rejections = 0;
    std::size_t failures = 0;
    std::size_t effective_reps = 0;
    double rate = 0.0;
    double mc_halfwidth = 0.0;

    bool operator==(const StudyRow&) const = default;
};

struct StudyResult {
    StudyConfig config;
    /// Unadjusted row first, then adjusted rows by increasing prefix size.
    std::vector<StudyRow> rows;

    const StudyRow& unadjusted() const;
    /// Adjusted row for the given prefix size; throws if absent.
    const StudyRow& adjusted(std::size_t prefix) const;
};

class StudyAbort : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Called after each finished replicate with (done, total).
using ProgressCallback = std::function<void(std::size_t, std::size_t)>;

/// Monte-Carlo rejection rates of the one-sided test of H0: theta <= 1.
/// Replicate r uses substream r of the master seed, so the result does not
/// depend on the worker count. Throws StudyAbort when more than 1% of the
/// replicates of any row fail to fit.
StudyResult run_study(const StudyConfig& cfg, unsigned workers = 0, const ProgressCallback& progress = {});

/// Header plus one line per row:
/// scenario,n,adjustment_size,method,rate,mc_halfwidth,reps,seed
std::string study_csv(const StudyResult& result);

struct IncidencePoint {
    double time = 0.0;
    double composite = 0.0;
    double fatal = 0.0;
    double nonfatal = 0.0;
};

/// Observed-event cumulative fractions at each grid time.
std::vector<IncidencePoint> emit_incidence_curve(const Dataset& ds, std::span<const double> grid);
/// `points` equally spaced times from 0 to the largest u1.
std::vector<double> default_incidence_grid(const Dataset& ds, std::size_t points = 101);

}  // namespace winodds
