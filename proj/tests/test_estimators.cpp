#include "support.hpp"

#include "winodds/estimators.hpp"
#include "winodds/sim_engine.hpp"

#include "doctest.h"

#include <cmath>
#include <string>
#include <vector>

using namespace winodds;

namespace {

double expit(double t) { return 1.0 / (1.0 + std::exp(-t)); }

WinTally tally_of(std::uint64_t wins, std::uint64_t losses, std::uint64_t ties, std::size_t n0, std::size_t n1) {
    WinTally t;
    t.wins = wins;
    t.losses = losses;
    t.ties = ties;
    t.n0 = n0;
    t.n1 = n1;
    return t;
}

MpiResult mpi(double nu, double variance) {
    MpiResult m;
    m.nu_hat = nu;
    m.variance = variance;
    return m;
}

}  // namespace

TEST_SUITE("estimators") {

TEST_CASE("direct estimate arithmetic") {
    const MpiResult m = direct_mpi(tally_of(3, 1, 2, 2, 3));
    CHECK(m.nu_hat == doctest::Approx(4.0 / 6.0).epsilon(1e-15));
    REQUIRE(m.delta_hat.has_value());
    CHECK(*m.delta_hat == doctest::Approx(2.0 / 6.0).epsilon(1e-15));
    CHECK(direct_mpi(tally_of(0, 0, 6, 2, 3)).nu_hat == 0.5);
}

TEST_CASE("point estimates match double-loop oracles") {
    for (std::uint64_t seed = 100; seed < 110; ++seed) {
        const Dataset ds = testing::random_dataset(seed, {.n = 40 + seed % 7, .p = 2});
        const WinTally t = pairwise_tally(ds, 1);
        CHECK(std::abs(direct_mpi(t).nu_hat - testing::oracle_direct(ds)) <= 1e-15);
        const PimFit fit = fit_pim(ds, {});
        CHECK(std::abs(standardized_mpi(fit, ds, 2) - testing::oracle_standardized(fit, ds)) <= 1e-12);
        CHECK(std::abs(augmented_mpi(fit, t, ds, 2) - testing::oracle_augmented(fit, ds)) <= 1e-12);
        CHECK(std::abs(adjusted_variance(fit, t, ds, 2) / testing::oracle_adjusted_variance(fit, ds) - 1.0) <= 1e-10);
    }
}

TEST_CASE("standardized and augmented estimates coincide at the fit") {
    for (std::uint64_t seed = 120; seed < 130; ++seed) {
        const Dataset ds = testing::random_dataset(seed, {.n = 80, .p = 1 + seed % 4});
        const WinTally t = pairwise_tally(ds, 1);
        const PimFit fit = fit_pim(ds, {});
        CHECK(std::abs(standardized_mpi(fit, ds) - augmented_mpi(fit, t, ds)) <= 1e-8);
    }
}

TEST_CASE("reductions without covariates") {
    const Dataset ds = testing::random_dataset(131, {.n = 50, .p = 0});
    const WinTally t = pairwise_tally(ds, 1);
    const PimFit fit = fit_pim(ds, {});
    const double direct = direct_mpi(t).nu_hat;
    CHECK(std::abs(augmented_mpi(fit, t, ds) - direct) <= 1e-12);
    CHECK(std::abs(standardized_mpi(fit, ds) - expit(fit.tau_a)) <= 1e-14);

    PimFit zero;
    zero.tau_x = {0.0, 0.0};
    const Dataset two = testing::random_dataset(132, {.n = 20, .p = 2});
    CHECK(standardized_mpi(zero, two) == 0.5);
}

TEST_CASE("augmentation with an arbitrary function stays consistent under the null") {
    const Dataset ds = simulate_trial(5000, scenario_weights(Scenario::A), 0.0, false, 77);
    const WinTally t = pairwise_tally(ds);
    auto h = [](std::span<const double> xi, std::span<const double> xj) {
        return expit(1.5 * (xj[0] - xi[0]) - 0.8 * (xj[3] - xi[3]) + 0.3);
    };
    CHECK(std::abs(augmented_mpi_with(h, t, ds) - 0.5) < 0.02);
}

TEST_CASE("unadjusted variance") {
    const Dataset ties = testing::make_dataset({{0, 5, 0, 5, 0}, {0, 6, 0, 6, 0}, {1, 7, 0, 7, 0}, {1, 8, 0, 8, 0}});
    const VarianceEstimate v = unadjusted_variance(pairwise_tally(ties, 1));
    CHECK(v.value == 0.0);
    CHECK(v.degenerate);

    const Dataset ds = testing::random_dataset(140, {.n = 100, .p = 0});
    std::vector<std::size_t> twice;
    for (std::size_t i = 0; i < ds.size(); ++i) twice.insert(twice.end(), {i, i});
    const double once = unadjusted_variance(pairwise_tally(ds, 1)).value;
    const double doubled = unadjusted_variance(pairwise_tally(ds.resample(twice), 1)).value;
    CHECK(doubled / once == doctest::Approx(0.5).epsilon(0.2));
}

TEST_CASE("adjusted variance without covariates is close to the unadjusted one") {
    const Dataset ds = simulate_trial(500, scenario_weights(Scenario::A), 0.3, false, 141).covariate_prefix(0);
    const WinTally t = pairwise_tally(ds);
    const PimFit fit = fit_pim(ds, {});
    const double adj = adjusted_variance(fit, t, ds);
    const double unadj = unadjusted_variance(t).value;
    CHECK(std::abs(adj / unadj - 1.0) < 0.05);
}

TEST_CASE("prognostic adjustment lowers variance and p-values") {
    int smaller_variance = 0, smaller_p = 0;
    const int reps = 200;
    const std::vector<std::string> all{"x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "x9", "x10"};
    for (int r = 0; r < reps; ++r) {
        const Dataset ds = simulate_trial(1000, scenario_weights(Scenario::A), 0.3, false, 9000, {},
                                          static_cast<std::uint64_t>(r));
        const AnalysisReport rep = analyze(ds, all);
        smaller_variance += rep.adjusted.variance < rep.unadjusted.variance;
        smaller_p += rep.adjusted_inference.p_one_sided <= rep.unadjusted_inference.p_one_sided;
    }
    CHECK(smaller_variance >= 160);
    CHECK(smaller_p > 120);
}

TEST_CASE("bootstrap") {
    const Dataset ds = testing::random_dataset(150, {.n = 60, .p = 1});
    // a resampler that always returns the original rows
    const Resampler identity = [](std::size_t, std::span<const std::size_t> c, std::span<const std::size_t> t,
                                  std::vector<std::size_t>& out) {
        out.assign(c.begin(), c.end());
        out.insert(out.end(), t.begin(), t.end());
    };
    CHECK(bootstrap_variance(ds, 2, identity) == 0.0);
    CHECK_THROWS_AS((void)bootstrap_variance(ds, 1, identity), std::invalid_argument);
    CHECK_THROWS_AS((void)bootstrap_variance(ds, 50, 1), std::invalid_argument);

    BootstrapOptions one, many;
    one.workers = 1;
    many.workers = 4;
    const double a = bootstrap_variance(ds, 100, 9, one);
    CHECK(a > 0.0);
    CHECK(bootstrap_variance(ds, 100, 9, many) == a);
    CHECK(bootstrap_variance(ds, 100, 10, one) != a);
}

TEST_CASE("bootstrap variance scales like 1/n") {
    BootstrapOptions opt;
    const auto small = simulate_trial(500, scenario_weights(Scenario::A), 0.3, false, 151).covariate_prefix(2);
    const auto large = simulate_trial(2000, scenario_weights(Scenario::A), 0.3, false, 152).covariate_prefix(2);
    const double ratio = bootstrap_variance(large, 100, 3, opt) / bootstrap_variance(small, 100, 3, opt);
    CHECK(ratio >= 0.15);
    CHECK(ratio <= 0.4);
}

TEST_CASE("win-odds inference") {
    const WinOddsResult half = win_odds_inference(mpi(0.5, 0.01), 0.05);
    CHECK(half.theta_hat == 1.0);
    CHECK(half.p_two_sided == 1.0);
    CHECK(half.p_one_sided == 0.5);
    CHECK(win_odds_inference(mpi(0.6, 0.01), 0.05).theta_hat == doctest::Approx(1.5).epsilon(1e-15));

    const double z975 = 1.959963984540054;
    const double sd = 0.02 / z975;
    const WinOddsResult ci = win_odds_inference(mpi(0.51, sd * sd), 0.05);
    CHECK(ci.nu_ci_low == doctest::Approx(0.49).epsilon(1e-12));
    CHECK(ci.nu_ci_high == doctest::Approx(0.53).epsilon(1e-12));
    CHECK(ci.ci_low == doctest::Approx(0.9608).epsilon(1e-4));
    CHECK(ci.ci_high == doctest::Approx(1.1277).epsilon(1e-4));

    const double nu = 0.5 + z975 * 0.01;
    const WinOddsResult edge = win_odds_inference(mpi(nu, 1e-4), 0.05);
    CHECK(edge.p_two_sided == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(edge.p_one_sided == doctest::Approx(0.025).epsilon(1e-9));
    CHECK(edge.log_theta_variance == doctest::Approx(1e-4 / std::pow(nu * (1.0 - nu), 2)).epsilon(1e-12));

    const WinOddsResult clamp = win_odds_inference(mpi(0.99, 0.05 * 0.05), 0.05);
    CHECK(clamp.clamped);
    CHECK(clamp.nu_ci_high < 1.0);
    CHECK(std::isfinite(clamp.ci_high));

    CHECK_THROWS_AS((void)win_odds_inference(mpi(1.0, 0.01), 0.05), InferenceError);
    CHECK_THROWS_AS((void)win_odds_inference(mpi(0.0, 0.01), 0.05), InferenceError);
    CHECK_THROWS_AS((void)win_odds_inference(mpi(0.6, 0.0), 0.05), InferenceError);
}

TEST_CASE("arm flip inverts the win odds") {
    for (std::uint64_t seed = 160; seed < 165; ++seed) {
        const Dataset ds = testing::random_dataset(seed, {.n = 70, .p = 2});
        const std::vector<std::string> adjust{"x1", "x2"};
        const AnalysisReport a = analyze(ds, adjust);
        const AnalysisReport b = analyze(ds.with_flipped_arms(), adjust);
        CHECK(a.unadjusted_inference.theta_hat * b.unadjusted_inference.theta_hat == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(a.adjusted_inference.theta_hat * b.adjusted_inference.theta_hat == doctest::Approx(1.0).epsilon(1e-8));
        CHECK(std::abs(a.adjusted_inference.p_two_sided - b.adjusted_inference.p_two_sided) <= 1e-10);
    }
}

TEST_CASE("analysis orchestration") {
    const Dataset ds = testing::random_dataset(170, {.n = 90, .p = 3});
    const AnalysisReport none = analyze(ds, std::vector<std::string>{});
    CHECK(std::abs(none.adjusted.nu_hat - none.unadjusted.nu_hat) <= 1e-10);
    CHECK(none.adjusted_for.empty());

    const std::vector<std::string> two{"x3", "x1"};
    AnalysisOptions opt;
    opt.bootstrap = 100;
    const AnalysisReport rep = analyze(ds, two, opt);
    CHECK(rep.adjusted_for == two);
    CHECK(rep.fit.tau_x.size() == 2);
    CHECK(rep.identity_residual <= 1e-8);
    CHECK(rep.wins + rep.losses + rep.ties == ds.n0() * ds.n1());
    CHECK(rep.bootstrap_replicates == 100);
    CHECK(rep.bootstrap_adjusted_variance.has_value());
    CHECK(rep.bootstrap_unadjusted_variance.has_value());

    std::vector<SubjectRecord> rows = ds.records();
    for (auto& r : rows) r.covariates.push_back(r.covariates[0]);
    const Dataset dup = validate_dataset(std::move(rows), {"x1", "x2", "x3", "copy"});
    const std::vector<std::string> all{"x1", "x2", "x3", "copy"};
    CHECK_THROWS_AS((void)analyze(dup, all), FitError);
}

}
