#include "winodds/estimators.hpp"

#include "logistic_kernel.hpp"
#include "winodds/parallel.hpp"

#include <boost/math/distributions/normal.hpp>

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace winodds {

namespace {

constexpr std::size_t kRowChunk = 32;

std::vector<double> centered_scores(const Dataset& ds, std::span<const double> tau_x) {
    const detail::CenteredDesign z(ds, false);
    return z.linear_predictor(tau_x);
}

void require_fit_matches(const PimFit& fit, const Dataset& ds) {
    if (fit.tau_x.size() != ds.p())
        throw std::invalid_argument("PIM fit has " + std::to_string(fit.tau_x.size()) +
                                    " covariate coefficients but the dataset has " + std::to_string(ds.p()));
}

double sample_variance(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    CompensatedSum sum;
    for (double x : v) sum += x;
    const double mean = sum.value() / static_cast<double>(v.size());
    CompensatedSum ss;
    for (double x : v) ss += (x - mean) * (x - mean);
    return ss.value() / static_cast<double>(v.size() - 1);
}

// Sums over ordered pairs of the fitted CPI H(X_i, X_j), split into all
// pairs and control-i / treated-j pairs.
struct CpiSums {
    CompensatedSum all;
    CompensatedSum mixed;
};

CpiSums cpi_sums(const PimFit& fit, const Dataset& ds, unsigned workers) {
    const std::size_t n = ds.size();
    const detail::ExpitRows h(centered_scores(ds, fit.tau_x), fit.tau_a);
    return deterministic_reduce(
        n, kRowChunk, workers, CpiSums{},
        [&](std::size_t begin, std::size_t end) {
            CpiSums part;
            std::vector<double> row(n);
            for (std::size_t i = begin; i < end; ++i) {
                h.row(i, row);
                row[i] = 0.0;
                double all = 0.0, mixed = 0.0;
                const bool control = ds[i].arm == 0;
                for (std::size_t j = 0; j < n; ++j) {
                    all += row[j];
                    if (control && ds[j].arm == 1) mixed += row[j];
                }
                part.all += all;
                part.mixed += mixed;
            }
            return part;
        },
        [](CpiSums& acc, const CpiSums& part) {
            acc.all.merge(part.all);
            acc.mixed.merge(part.mixed);
        });
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::string to_string(Method m) { return m == Method::Direct ? "direct" : "adjusted"; }
std::string to_string(Sided s) { return s == Sided::One ? "one" : "two"; }

MpiResult direct_mpi(const WinTally& t) {
    const double pairs = static_cast<double>(t.comparisons());
    MpiResult m;
    m.method = Method::Direct;
    m.n0 = t.n0;
    m.n1 = t.n1;
    m.n = t.n0 + t.n1;
    m.nu_hat = (static_cast<double>(t.wins) + 0.5 * static_cast<double>(t.ties)) / pairs;
    m.delta_hat = (static_cast<double>(t.wins) - static_cast<double>(t.losses)) / pairs;
    if (t.losses + t.ties > 0)
        m.odds = static_cast<double>(2 * t.wins + t.ties) / static_cast<double>(2 * t.losses + t.ties);
    return m;
}

double standardized_mpi(const PimFit& fit, const Dataset& ds, unsigned workers) {
    require_fit_matches(fit, ds);
    const double n = static_cast<double>(ds.size());
    return cpi_sums(fit, ds, workers).all.value() / (n * (n - 1.0));
}

double augmented_mpi(const PimFit& fit, const WinTally& t, const Dataset& ds, unsigned workers) {
    require_fit_matches(fit, ds);
    const double n = static_cast<double>(ds.size());
    const CpiSums sums = cpi_sums(fit, ds, workers);
    const double nu_direct = direct_mpi(t).nu_hat;
    return nu_direct + sums.all.value() / (n * (n - 1.0)) -
           sums.mixed.value() / static_cast<double>(t.comparisons());
}

double augmented_mpi_with(const AugmentationFunction& h, const WinTally& t, const Dataset& ds) {
    const std::size_t n = ds.size();
    const double all_weight = 1.0 / (static_cast<double>(n) * static_cast<double>(n - 1));
    const double mixed_weight = 1.0 / static_cast<double>(t.comparisons());
    CompensatedSum aug;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double w = all_weight - ((ds[i].arm == 0 && ds[j].arm == 1) ? mixed_weight : 0.0);
            aug += w * h(ds[i].covariates, ds[j].covariates);
        }
    }
    return direct_mpi(t).nu_hat + aug.value();
}

VarianceEstimate unadjusted_variance(const WinTally& t) {
    if (t.n0 < 2 || t.n1 < 2) throw std::invalid_argument("unadjusted variance needs at least 2 subjects per arm");
    VarianceEstimate v;
    v.value = sample_variance(t.treated_winfrac) / static_cast<double>(t.n1) +
              sample_variance(t.control_winfrac) / static_cast<double>(t.n0);
    v.degenerate = v.value == 0.0;
    return v;
}

double adjusted_variance(const PimFit& fit, const WinTally& t, const Dataset& ds, unsigned workers,
                         const ComparisonRule& rule) {
    require_fit_matches(fit, ds);
    const std::size_t n = ds.size();
    const double n0 = static_cast<double>(t.n0), n1 = static_cast<double>(t.n1);
    std::vector<double> eta = centered_scores(ds, fit.tau_x);
    const detail::ExpitRows forward(eta, fit.tau_a);  // (l, m) -> H(X_l, X_m)
    for (double& e : eta) e = -e;
    const detail::ExpitRows backward(std::move(eta), fit.tau_a);  // (l, m) -> H(X_m, X_l)
    const PairScorer scorer(ds, rule);

    // g[l]: mean residual s - H over the opposite arm, oriented control -> treated
    // h[l]: mean of the symmetrised H over all other subjects
    std::vector<double> g(n), h(n);
    parallel_chunks(n, kRowChunk, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
        std::vector<double> s(n), fwd(n), bwd(n);
        for (std::size_t l = begin; l < end; ++l) {
            scorer.row(l, s);
            forward.row(l, fwd);
            backward.row(l, bwd);
            double resid = 0.0, sym = 0.0;
            const bool control = ds[l].arm == 0;
            for (std::size_t m = 0; m < n; ++m) {
                if (m == l) continue;
                sym += 0.5 * (fwd[m] + bwd[m]);
                if (control && ds[m].arm == 1)
                    resid += s[m] - fwd[m];
                else if (!control && ds[m].arm == 0)
                    resid += (1.0 - s[m]) - bwd[m];
            }
            g[l] = resid / (control ? n1 : n0);
            h[l] = sym / static_cast<double>(n - 1);
        }
    });

    CompensatedSum kbar_sum, hbar_sum;
    for (std::size_t l = 0; l < n; ++l) {
        if (ds[l].arm == 0) kbar_sum += g[l];
        hbar_sum += h[l];
    }
    const double kbar = kbar_sum.value() / n0;
    const double hbar = hbar_sum.value() / static_cast<double>(n);
    const double dn = static_cast<double>(n);
    CompensatedSum ss;
    for (std::size_t l = 0; l < n; ++l) {
        const double arm_scale = ds[l].arm == 1 ? dn / n1 : dn / n0;
        const double phi = arm_scale * (g[l] - kbar) + 2.0 * (h[l] - hbar);
        ss += phi * phi;
    }
    return ss.value() / (dn * dn);
}

Resampler seeded_resampler(std::uint64_t seed) {
    return [seed](std::size_t replicate, std::span<const std::size_t> control_rows,
                  std::span<const std::size_t> treated_rows, std::vector<std::size_t>& out) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(replicate >> 32),
                          0xB007u};
        std::mt19937_64 rng(seq);
        out.clear();
        for (auto rows : {control_rows, treated_rows}) {
            std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
            for (std::size_t k = 0; k < rows.size(); ++k) out.push_back(rows[pick(rng)]);
        }
    };
}

double bootstrap_variance(const Dataset& ds, std::size_t B, std::uint64_t seed, const BootstrapOptions& options) {
    if (B < 100) throw std::invalid_argument("bootstrap needs B >= 100 replicates");
    return bootstrap_variance(ds, B, seeded_resampler(seed), options);
}

double bootstrap_variance(const Dataset& ds, std::size_t B, const Resampler& resampler,
                          const BootstrapOptions& options) {
    if (B < 2) throw std::invalid_argument("bootstrap needs at least 2 replicates");
    std::vector<std::size_t> control_rows, treated_rows;
    for (std::size_t i = 0; i < ds.size(); ++i) (ds[i].arm == 1 ? treated_rows : control_rows).push_back(i);

    PimOptions pim = options.pim;
    pim.workers = 1;
    if (options.target == BootstrapTarget::Augmented) {
        const PimFit full = fit_pim(ds, options.pim);
        std::vector<double> start{full.tau_a};
        start.insert(start.end(), full.tau_x.begin(), full.tau_x.end());
        pim.start = std::move(start);
    }

    std::vector<double> estimates(B);
    parallel_chunks(B, 1, options.workers, [&](std::size_t, std::size_t begin, std::size_t end) {
        std::vector<std::size_t> rows;
        for (std::size_t b = begin; b < end; ++b) {
            resampler(b, control_rows, treated_rows, rows);
            const Dataset boot = ds.resample(rows);
            const WinTally tally = pairwise_tally(boot, 1);
            if (options.target == BootstrapTarget::Direct) {
                estimates[b] = direct_mpi(tally).nu_hat;
            } else {
                const PimFit fit = fit_pim(boot, pim);
                estimates[b] = augmented_mpi(fit, tally, boot, 1);
            }
        }
    });
    return sample_variance(estimates);
}

WinOddsResult win_odds_inference(const MpiResult& m, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    if (!(m.nu_hat > 0.0 && m.nu_hat < 1.0))
        throw InferenceError("win odds undefined: nu estimate is " + std::to_string(m.nu_hat));
    if (!(m.variance > 0.0) || !std::isfinite(m.variance))
        throw InferenceError("variance estimate is zero or invalid; Wald inference unavailable");

    const boost::math::normal_distribution<double> normal;
    const double nu = m.nu_hat;
    const double se = std::sqrt(m.variance);
    const double crit = boost::math::quantile(normal, 1.0 - alpha / 2.0);

    WinOddsResult r;
    r.alpha = alpha;
    r.theta_hat = m.odds ? *m.odds : nu / (1.0 - nu);
    r.z = (nu - 0.5) / se;
    r.p_two_sided = std::erfc(std::abs(r.z) / std::sqrt(2.0));
    r.p_one_sided = 0.5 * std::erfc(r.z / std::sqrt(2.0));
    r.log_theta_variance = m.variance / ((nu * (1.0 - nu)) * (nu * (1.0 - nu)));
    r.delta_hat = m.delta_hat;

    const double lo_open = std::nextafter(0.0, 1.0);
    const double hi_open = std::nextafter(1.0, 0.0);
    double lo = nu - crit * se, hi = nu + crit * se;
    if (lo < lo_open) {
        lo = lo_open;
        r.clamped = true;
    }
    if (hi > hi_open) {
        hi = hi_open;
        r.clamped = true;
    }
    r.nu_ci_low = lo;
    r.nu_ci_high = hi;
    r.ci_low = lo / (1.0 - lo);
    r.ci_high = hi / (1.0 - hi);
    return r;
}

AnalysisReport analyze(const Dataset& ds, std::span<const std::string> adjust, const AnalysisOptions& options) {
    using clock = std::chrono::steady_clock;
    AnalysisReport rep;
    rep.alpha = options.alpha;
    rep.sided = options.sided;
    rep.summary = summarize_events(ds);
    rep.adjusted_for.assign(adjust.begin(), adjust.end());

    const Dataset design = ds.select_covariates(adjust);
    PimOptions pim = options.pim;
    pim.workers = options.workers;

    auto t0 = clock::now();
    const WinTally tally = pairwise_tally(ds, options.workers);
    rep.timings.tally_s = seconds_since(t0);
    rep.wins = tally.wins;
    rep.losses = tally.losses;
    rep.ties = tally.ties;

    t0 = clock::now();
    rep.fit = fit_pim(design, pim);
    rep.timings.fit_s = seconds_since(t0);

    t0 = clock::now();
    rep.unadjusted = direct_mpi(tally);
    rep.nu_standardized = standardized_mpi(rep.fit, design, options.workers);
    rep.nu_augmented = augmented_mpi(rep.fit, tally, design, options.workers);
    rep.identity_residual = std::abs(rep.nu_standardized - rep.nu_augmented);
    rep.timings.estimate_s = seconds_since(t0);

    t0 = clock::now();
    const VarianceEstimate unadj_var = unadjusted_variance(tally);
    rep.unadjusted.variance = unadj_var.value;
    rep.unadjusted.degenerate = unadj_var.degenerate;
    rep.adjusted.method = Method::Adjusted;
    rep.adjusted.n = ds.size();
    rep.adjusted.n0 = ds.n0();
    rep.adjusted.n1 = ds.n1();
    rep.adjusted.nu_hat = rep.nu_augmented;
    rep.adjusted.variance = adjusted_variance(rep.fit, tally, design, options.workers);
    rep.adjusted.degenerate = rep.adjusted.variance == 0.0;
    rep.timings.variance_s = seconds_since(t0);

    rep.unadjusted_inference = win_odds_inference(rep.unadjusted, options.alpha);
    rep.adjusted_inference = win_odds_inference(rep.adjusted, options.alpha);

    if (options.bootstrap > 0) {
        t0 = clock::now();
        BootstrapOptions boot;
        boot.workers = options.workers;
        boot.pim = options.pim;
        boot.target = BootstrapTarget::Direct;
        rep.bootstrap_unadjusted_variance = bootstrap_variance(ds, options.bootstrap, options.seed, boot);
        boot.target = BootstrapTarget::Augmented;
        rep.bootstrap_adjusted_variance = bootstrap_variance(design, options.bootstrap, options.seed, boot);
        rep.bootstrap_replicates = options.bootstrap;
        rep.timings.bootstrap_s = seconds_since(t0);
    }
    return rep;
}

}  // namespace winodds
