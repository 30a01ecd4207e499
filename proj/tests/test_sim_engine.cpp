#include "winodds/sim_engine.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

using namespace winodds;

namespace {

double pooled_ks(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double t = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= t) ++i;
        while (j < b.size() && b[j] <= t) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
    }
    return d;
}

// u1 relative to the administrative censoring time of its own sample
std::vector<double> scaled_u1(const Dataset& ds) {
    double cens = 0.0;
    for (const auto& r : ds.records()) cens = std::max(cens, r.u1);
    std::vector<double> u;
    for (const auto& r : ds.records()) u.push_back(r.u1 / cens);
    return u;
}

}  // namespace

TEST_SUITE("sim_engine") {

TEST_CASE("scenario weights") {
    const auto a = scenario_weights(Scenario::A).gamma;
    const auto b = scenario_weights(Scenario::B).gamma;
    const auto c = scenario_weights(Scenario::C).gamma;
    CHECK(a[0] == doctest::Approx(0.316228).epsilon(1e-6));
    CHECK(a[9] == a[0]);
    CHECK(b[0] == doctest::Approx(0.509647).epsilon(1e-6));
    CHECK(b[9] == doctest::Approx(0.1 * b[0]).epsilon(1e-12));
    CHECK(c[0] == doctest::Approx(0.96209).epsilon(1e-5));
    CHECK(c[0] == doctest::Approx(1.0 / std::sqrt(1.0 + 1.0 / 16 + 1.0 / 81 + 1.0 / 256 + 1.0 / 625)).epsilon(1e-14));
    for (std::size_t j = 5; j < kSimCovariates; ++j) CHECK(c[j] == 0.0);
    for (const auto& g : {a, b, c}) {
        double ss = 0.0;
        for (double v : g) ss += v * v;
        CHECK(ss == doctest::Approx(1.0).epsilon(1e-14));
    }
    CHECK(parse_scenario("b") == Scenario::B);
    CHECK_THROWS_AS((void)parse_scenario("D"), std::invalid_argument);
}

TEST_CASE("empirical quantile") {
    const std::vector<double> v{4, 1, 3, 2};
    CHECK(empirical_quantile(v, 0.35) == 2.0);
    CHECK(empirical_quantile(v, 0.999999) == 4.0);
    CHECK(empirical_quantile(v, 0.25) == 1.0);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unit;
    std::vector<double> u(100000);
    for (double& x : u) x = unit(rng);
    CHECK(std::abs(empirical_quantile(u, 0.35) - 0.35) < 0.01);
}

TEST_CASE("simulated trial structure") {
    const Dataset ds = simulate_trial(500, scenario_weights(Scenario::A), 0.3, false, 1);
    CHECK(ds.size() == 500);
    CHECK(ds.p() == kSimCovariates);
    CHECK(ds.covariate_names().front() == "x1");
    std::size_t events = 0;
    for (const auto& r : ds.records()) {
        events += (r.d1 == 1 || r.d2 == 1);
        CHECK(r.u2 <= r.u1);
    }
    CHECK(std::abs(static_cast<double>(events) / 500.0 - 0.35) <= 1.0 / 500.0 + 1e-12);
    CHECK(simulate_trial(500, scenario_weights(Scenario::A), 0.3, false, 1) == ds);
    CHECK(!(simulate_trial(500, scenario_weights(Scenario::A), 0.3, false, 2) == ds));
    CHECK(!(simulate_trial(500, scenario_weights(Scenario::A), 0.3, false, 1, {}, 1) == ds));
}

TEST_CASE("exchangeable arms without effect or covariates") {
    ScenarioWeights zero;
    const Dataset ds = simulate_trial(5000, zero, 0.0, false, 3);
    const double nu = direct_mpi(pairwise_tally(ds)).nu_hat;
    CHECK(std::abs(nu - 0.5) < 0.03);
}

TEST_CASE("null flip keeps outcomes and changes labels") {
    const auto w = scenario_weights(Scenario::A);
    const Dataset base = simulate_trial(300, w, 0.3, false, 8);
    const Dataset redraw = simulate_trial(300, w, 0.3, true, 8);
    TrialOptions permute;
    permute.flip_mode = FlipMode::Permute;
    const Dataset perm = simulate_trial(300, w, 0.3, true, 8, permute);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK(redraw[i].u1 == base[i].u1);
        CHECK(redraw[i].covariates == base[i].covariates);
        changed += redraw[i].arm != base[i].arm;
    }
    CHECK(changed > 50);
    CHECK(perm.n1() == base.n1());
}

TEST_CASE("pooled outcome law does not depend on the scenario") {
    const auto a = simulate_trial(5000, scenario_weights(Scenario::A), 0.3, false, 10);
    const auto c = simulate_trial(5000, scenario_weights(Scenario::C), 0.3, false, 11);
    CHECK(pooled_ks(scaled_u1(a), scaled_u1(c)) < 0.05);
}

TEST_CASE("study shape and determinism") {
    StudyConfig cfg;
    cfg.n = 120;
    cfg.reps = 10;
    cfg.adjustment_sets = {0, 1, 5};
    cfg.seed = 4;
    const StudyResult r = run_study(cfg, 1);
    REQUIRE(r.rows.size() == 3);
    CHECK(r.rows[0].method == Method::Direct);
    CHECK(r.adjusted(5).adjustment_size == 5);
    CHECK_THROWS((void)r.adjusted(7));
    for (const auto& row : r.rows) CHECK(row.effective_reps + row.failures == 10);

    const std::string csv = study_csv(r);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    CHECK(csv.rfind("scenario,n,adjustment_size,method,rate,mc_halfwidth,reps,seed\n", 0) == 0);
    CHECK(study_csv(run_study(cfg, 3)) == csv);
    CHECK(study_csv(run_study(cfg, 8)) == csv);

    StudyConfig single = cfg;
    single.reps = 1;
    for (const auto& row : run_study(single, 1).rows) CHECK((row.rate == 0.0 || row.rate == 1.0));

    StudyConfig bad = cfg;
    bad.adjustment_sets = {11};
    CHECK_THROWS((void)validate(bad));
    bad = cfg;
    bad.reps = 0;
    CHECK_THROWS((void)validate(bad));
}

TEST_CASE("incidence curves") {
    const Dataset ds = simulate_trial(400, scenario_weights(Scenario::B), 0.3, false, 12);
    const auto grid = default_incidence_grid(ds, 50);
    const auto curve = emit_incidence_curve(ds, grid);
    REQUIRE(curve.size() == 50);
    CHECK(curve.front().time == 0.0);
    CHECK(curve.front().composite == 0.0);
    for (std::size_t k = 1; k < curve.size(); ++k) {
        CHECK(curve[k].composite >= curve[k - 1].composite);
        CHECK(curve[k].fatal >= curve[k - 1].fatal);
    }
    CHECK(std::abs(curve.back().composite - 0.35) <= 1.0 / 400.0 + 1e-12);
}

}
