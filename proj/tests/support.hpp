#pragma once

#include "winodds/data_model.hpp"
#include "winodds/pim_fit.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace testing {

struct RandomSpec {
    std::size_t n = 40;
    std::size_t p = 2;
    double fatal_rate = 0.3;
    double nonfatal_rate = 0.3;
    int time_grid = 25;       // integer follow-up times in 1..time_grid (creates exact ties)
    double signal = 0.6;      // covariate and arm effect on event risk
};

// Random dataset with integer times (ties in time are common), every
// event pattern and both arms non-empty.
inline winodds::Dataset random_dataset(std::uint64_t seed, const RandomSpec& spec = {}) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unit;
    std::uniform_int_distribution<int> time(1, spec.time_grid);

    std::vector<winodds::SubjectRecord> rows(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        auto& r = rows[i];
        r.id = "p" + std::to_string(i + 1);
        r.arm = i < 4 ? static_cast<int>(i % 2) : (unit(rng) < 0.5 ? 1 : 0);
        double risk = spec.signal * (r.arm == 1 ? -0.5 : 0.0);
        for (std::size_t k = 0; k < spec.p; ++k) {
            r.covariates.push_back(normal(rng));
            risk += spec.signal * r.covariates.back() / std::sqrt(static_cast<double>(k + 1));
        }
        const double bump = 1.0 / (1.0 + std::exp(-risk));
        r.u1 = time(rng);
        r.d1 = unit(rng) < spec.fatal_rate * 2.0 * bump ? 1 : 0;
        r.u2 = r.u1;
        r.d2 = 0;
        if (r.u1 > 1 && unit(rng) < spec.nonfatal_rate * 2.0 * bump) {
            r.u2 = std::uniform_int_distribution<int>(1, static_cast<int>(r.u1) - 1)(rng);
            r.d2 = 1;
        }
    }
    return winodds::validate_dataset(std::move(rows));
}

// Builds a dataset from (arm, u1, d1, u2, d2) tuples without covariates.
struct Row {
    int arm;
    double u1;
    int d1;
    double u2;
    int d2;
};

inline winodds::Dataset make_dataset(const std::vector<Row>& in) {
    std::vector<winodds::SubjectRecord> rows;
    for (std::size_t i = 0; i < in.size(); ++i) {
        winodds::SubjectRecord r;
        r.id = "r" + std::to_string(i);
        r.arm = in[i].arm;
        r.u1 = in[i].u1;
        r.d1 = in[i].d1;
        r.u2 = in[i].u2;
        r.d2 = in[i].d2;
        rows.push_back(r);
    }
    return winodds::validate_dataset(std::move(rows));
}

// ---- oracles ----------------------------------------------------------

// 1 when b is at least as good as a and strictly better, 0 when worse, 1/2 on a tie.
inline double oracle_s(const winodds::SubjectRecord& a, const winodds::SubjectRecord& b) {
    if (a.d1 == 1 && a.u1 < b.u1) return 1.0;
    if (b.d1 == 1 && b.u1 < a.u1) return 0.0;
    if (a.d2 == 1 && a.u2 < b.u2) return 1.0;
    if (b.d2 == 1 && b.u2 < a.u2) return 0.0;
    return 0.5;
}

struct OracleTally {
    std::uint64_t wins = 0, losses = 0, ties = 0;
};

inline OracleTally oracle_tally(const winodds::Dataset& ds) {
    OracleTally t;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds[i].arm != 0) continue;
        for (std::size_t j = 0; j < ds.size(); ++j) {
            if (ds[j].arm != 1) continue;
            const double s = oracle_s(ds[i], ds[j]);
            if (s == 1.0) ++t.wins;
            else if (s == 0.0) ++t.losses;
            else ++t.ties;
        }
    }
    return t;
}

inline double oracle_direct(const winodds::Dataset& ds) {
    long double sum = 0.0L;
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t j = 0; j < ds.size(); ++j)
            sum += (1 - ds[i].arm) * ds[j].arm * oracle_s(ds[i], ds[j]);
    return static_cast<double>(sum / (static_cast<long double>(ds.n0()) * ds.n1()));
}

inline long double oracle_expit(long double t) { return 1.0L / (1.0L + std::exp(-t)); }

inline long double oracle_cpi(const winodds::PimFit& fit, const winodds::SubjectRecord& a,
                              const winodds::SubjectRecord& b) {
    long double eta = fit.tau_a;
    for (std::size_t k = 0; k < fit.tau_x.size(); ++k)
        eta += static_cast<long double>(fit.tau_x[k]) * (b.covariates[k] - a.covariates[k]);
    return oracle_expit(eta);
}

inline double oracle_standardized(const winodds::PimFit& fit, const winodds::Dataset& ds) {
    long double sum = 0.0L;
    const std::size_t n = ds.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) sum += oracle_cpi(fit, ds[i], ds[j]);
    return static_cast<double>(sum / (static_cast<long double>(n) * (n - 1)));
}

inline double oracle_augmented(const winodds::PimFit& fit, const winodds::Dataset& ds) {
    const std::size_t n = ds.size();
    const long double all = 1.0L / (static_cast<long double>(n) * (n - 1));
    const long double mixed = 1.0L / (static_cast<long double>(ds.n0()) * ds.n1());
    long double sum = oracle_direct(ds);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) sum += (all - (1 - ds[i].arm) * ds[j].arm * mixed) * oracle_cpi(fit, ds[i], ds[j]);
    return static_cast<double>(sum);
}

// Σ_{i≠j} d_ij (s_ij - expit(d_ij'β)) with d_ij = (A_j - A_i, X_j - X_i).
inline std::vector<double> oracle_score(const winodds::Dataset& ds, double tau_a, const std::vector<double>& tau_x) {
    const std::size_t n = ds.size();
    std::vector<long double> u(1 + tau_x.size(), 0.0L);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            std::vector<long double> d{static_cast<long double>(ds[j].arm - ds[i].arm)};
            long double eta = tau_a * d[0];
            for (std::size_t k = 0; k < tau_x.size(); ++k) {
                d.push_back(static_cast<long double>(ds[j].covariates[k]) - ds[i].covariates[k]);
                eta += tau_x[k] * d.back();
            }
            const long double e = oracle_s(ds[i], ds[j]) - oracle_expit(eta);
            for (std::size_t k = 0; k < d.size(); ++k) u[k] += d[k] * e;
        }
    return {u.begin(), u.end()};
}

// Influence-function variance computed literally from its definition.
inline double oracle_adjusted_variance(const winodds::PimFit& fit, const winodds::Dataset& ds) {
    const std::size_t n = ds.size();
    const double n0 = static_cast<double>(ds.n0()), n1 = static_cast<double>(ds.n1());
    auto H = [&](std::size_t i, std::size_t j) { return static_cast<double>(oracle_cpi(fit, ds[i], ds[j])); };
    double kbar = 0.0;
    std::vector<double> g(n, 0.0), h(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (ds[i].arm == 0 && ds[j].arm == 1) {
                const double k = oracle_s(ds[i], ds[j]) - H(i, j);
                kbar += k;
                g[j] += k / n0;  // treated j: average over controls
                g[i] += k / n1;  // control i: average over treated
            }
            if (i != j) h[i] += 0.5 * (H(i, j) + H(j, i)) / static_cast<double>(n - 1);
        }
    kbar /= n0 * n1;
    double hbar = 0.0;
    for (double v : h) hbar += v;
    hbar /= static_cast<double>(n);
    double sum = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
        const double phi = (ds[l].arm == 1 ? static_cast<double>(n) / n1 : static_cast<double>(n) / n0) * (g[l] - kbar) +
                           2.0 * (h[l] - hbar);
        sum += phi * phi;
    }
    return sum / (static_cast<double>(n) * static_cast<double>(n));
}

}  // namespace testing
