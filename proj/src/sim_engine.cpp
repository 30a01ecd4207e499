#include "winodds/sim_engine.hpp"

#include "winodds/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>

namespace winodds {

namespace {

enum Purpose : std::uint32_t { kCovariates = 1, kArms = 2, kTimes = 3, kFlip = 4 };

std::array<double, kSimCovariates> normalized(std::array<double, kSimCovariates> delta) {
    double ss = 0.0;
    for (double d : delta) ss += d * d;
    const double norm = std::sqrt(ss);
    for (double& d : delta) d /= norm;
    return delta;
}

template <class Rng>
std::vector<int> draw_arms(std::size_t n, Rng& rng) {
    std::bernoulli_distribution coin(0.5);
    std::vector<int> arms(n);
    for (;;) {
        std::size_t treated = 0;
        for (auto& a : arms) treated += static_cast<std::size_t>(a = coin(rng) ? 1 : 0);
        if (treated >= 2 && n - treated >= 2) return arms;
    }
}

}  // namespace

std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::A: return "A";
        case Scenario::B: return "B";
        case Scenario::C: return "C";
    }
    return "?";
}

Scenario parse_scenario(const std::string& name) {
    if (name.size() == 1) {
        switch (std::toupper(static_cast<unsigned char>(name[0]))) {
            case 'A': return Scenario::A;
            case 'B': return Scenario::B;
            case 'C': return Scenario::C;
            default: break;
        }
    }
    throw std::invalid_argument("unknown scenario '" + name + "' (expected A, B or C)");
}

ScenarioWeights scenario_weights(Scenario s) {
    std::array<double, kSimCovariates> delta{};
    for (std::size_t j = 0; j < kSimCovariates; ++j) {
        const double jj = static_cast<double>(j + 1);
        switch (s) {
            case Scenario::A: delta[j] = 1.0; break;
            case Scenario::B: delta[j] = 1.0 - (jj - 1.0) / 10.0; break;
            case Scenario::C: delta[j] = j < 5 ? 1.0 / (jj * jj) : 0.0; break;
        }
    }
    return ScenarioWeights{normalized(delta)};
}

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t replicate, std::uint32_t purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(replicate >> 32), purpose};
    return std::mt19937_64(seq);
}

double empirical_quantile(std::span<const double> values, double q) {
    if (values.empty()) throw std::invalid_argument("empirical quantile of an empty sample");
    if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("quantile level must lie in (0, 1)");
    const auto n = static_cast<double>(values.size());
    auto rank = static_cast<std::size_t>(std::ceil(q * n));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    std::vector<double> v(values.begin(), values.end());
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(rank - 1), v.end());
    return v[rank - 1];
}

Dataset simulate_trial(std::size_t n, const ScenarioWeights& weights, double effect, bool null_flip,
                       std::uint64_t seed, const TrialOptions& options, std::uint64_t replicate) {
    if (n < 4) throw std::invalid_argument("simulated trials need n >= 4");
    if (!(options.event_fraction > 0.0 && options.event_fraction < 1.0))
        throw std::invalid_argument("event fraction must lie in (0, 1)");

    auto cov_rng = make_stream(seed, replicate, kCovariates);
    auto arm_rng = make_stream(seed, replicate, kArms);
    auto time_rng = make_stream(seed, replicate, kTimes);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::exponential_distribution<double> expo(1.0);

    std::vector<std::vector<double>> x(n, std::vector<double>(kSimCovariates));
    for (auto& row : x)
        for (double& v : row) v = gauss(cov_rng);
    std::vector<int> arms = draw_arms(n, arm_rng);

    std::vector<double> t1(n), t2(n), first(n);
    for (std::size_t i = 0; i < n; ++i) {
        double lp = effect * arms[i];
        for (std::size_t k = 0; k < kSimCovariates; ++k) lp += weights.gamma[k] * x[i][k];
        const double scale = options.scale * std::exp(lp);
        t1[i] = scale * expo(time_rng);
        t2[i] = scale * expo(time_rng);
        first[i] = std::min(t1[i], t2[i]);
    }
    const double cens = empirical_quantile(first, options.event_fraction);

    if (null_flip) {
        auto flip_rng = make_stream(seed, replicate, kFlip);
        if (options.flip_mode == FlipMode::Permute)
            std::shuffle(arms.begin(), arms.end(), flip_rng);
        else
            arms = draw_arms(n, flip_rng);
    }

    std::vector<SubjectRecord> records(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& r = records[i];
        r.id = "s" + std::to_string(i + 1);
        r.arm = arms[i];
        r.covariates = std::move(x[i]);
        r.u1 = std::min(t1[i], cens);
        r.d1 = t1[i] < cens ? 1 : 0;
        r.u2 = std::min({t2[i], t1[i], cens});
        r.d2 = t2[i] < std::min(t1[i], cens) ? 1 : 0;
    }
    return validate_dataset(std::move(records));
}

void validate(const StudyConfig& cfg) {
    if (cfg.reps < 1) throw std::invalid_argument("reps must be >= 1");
    if (cfg.n < 4) throw std::invalid_argument("n must be >= 4");
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    if (!(cfg.event_fraction > 0.0 && cfg.event_fraction < 1.0))
        throw std::invalid_argument("event fraction must lie in (0, 1)");
    for (std::size_t k : cfg.adjustment_sets)
        if (k > kSimCovariates) throw std::invalid_argument("adjustment prefix sizes must be in 0..10");
}

const StudyRow& StudyResult::unadjusted() const {
    for (const auto& r : rows)
        if (r.method == Method::Direct) return r;
    throw std::out_of_range("study has no unadjusted row");
}

const StudyRow& StudyResult::adjusted(std::size_t prefix) const {
    for (const auto& r : rows)
        if (r.method == Method::Adjusted && r.adjustment_size == prefix) return r;
    throw std::out_of_range("study has no adjusted row for prefix " + std::to_string(prefix));
}

StudyResult run_study(const StudyConfig& cfg, unsigned workers, const ProgressCallback& progress) {
    validate(cfg);
    // prefix 0 is the unadjusted (direct) path and is always reported
    const std::set<std::size_t> unique(cfg.adjustment_sets.begin(), cfg.adjustment_sets.end());
    std::vector<std::size_t> prefixes;
    for (std::size_t k : unique)
        if (k > 0) prefixes.push_back(k);
    const std::size_t nrows = 1 + prefixes.size();

    const ScenarioWeights weights = scenario_weights(cfg.scenario);
    TrialOptions trial;
    trial.event_fraction = cfg.event_fraction;
    trial.scale = cfg.scale;
    trial.flip_mode = cfg.flip_mode;

    // per replicate and row: 1 reject, 0 accept, -1 failed
    std::vector<std::int8_t> outcome(cfg.reps * nrows, 0);
    std::atomic<std::size_t> done{0};
    std::mutex progress_mutex;

    parallel_chunks(cfg.reps, 1, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t rep = begin; rep < end; ++rep) {
            const Dataset ds =
                simulate_trial(cfg.n, weights, cfg.treatment_effect, cfg.null_flip, cfg.seed, trial, rep);
            const WinTally tally = pairwise_tally(ds, 1);
            std::int8_t* out = &outcome[rep * nrows];

            try {
                MpiResult m = direct_mpi(tally);
                m.variance = unadjusted_variance(tally).value;
                out[0] = win_odds_inference(m, cfg.alpha).p_one_sided < cfg.alpha ? 1 : 0;
            } catch (const InferenceError&) {
                out[0] = -1;
            }

            PimOptions pim;
            pim.workers = 1;
            std::vector<double> previous;  // last converged (tau_a, tau_x) of a smaller prefix
            for (std::size_t r = 0; r < prefixes.size(); ++r) {
                try {
                    const Dataset sub = ds.covariate_prefix(prefixes[r]);
                    if (!previous.empty() && previous.size() <= prefixes[r] + 1) {
                        previous.resize(prefixes[r] + 1, 0.0);
                        pim.start = previous;
                    } else {
                        pim.start.reset();
                    }
                    const PimFit fit = fit_pim(sub, pim);
                    previous.assign(1, fit.tau_a);
                    previous.insert(previous.end(), fit.tau_x.begin(), fit.tau_x.end());
                    MpiResult m;
                    m.method = Method::Adjusted;
                    m.nu_hat = augmented_mpi(fit, tally, sub, 1);
                    m.variance = adjusted_variance(fit, tally, sub, 1);
                    out[r + 1] = win_odds_inference(m, cfg.alpha).p_one_sided < cfg.alpha ? 1 : 0;
                } catch (const FitError&) {
                    out[r + 1] = -1;
                } catch (const InferenceError&) {
                    out[r + 1] = -1;
                }
            }
            const std::size_t finished = ++done;
            if (progress) {
                std::lock_guard lock(progress_mutex);
                progress(finished, cfg.reps);
            }
        }
    });

    StudyResult result;
    result.config = cfg;
    for (std::size_t r = 0; r < nrows; ++r) {
        StudyRow row;
        row.method = r == 0 ? Method::Direct : Method::Adjusted;
        row.adjustment_size = r == 0 ? 0 : prefixes[r - 1];
        for (std::size_t rep = 0; rep < cfg.reps; ++rep) {
            const std::int8_t o = outcome[rep * nrows + r];
            if (o < 0)
                ++row.failures;
            else
                row.rejections += static_cast<std::size_t>(o);
        }
        if (static_cast<double>(row.failures) > 0.01 * static_cast<double>(cfg.reps)) {
            std::ostringstream msg;
            msg << row.failures << " of " << cfg.reps << " replicates failed for "
                << (r == 0 ? std::string("the unadjusted analysis")
                           : "adjustment prefix " + std::to_string(row.adjustment_size))
                << " (more than 1%)";
            throw StudyAbort(msg.str());
        }
        row.effective_reps = cfg.reps - row.failures;
        if (row.effective_reps > 0) {
            row.rate = static_cast<double>(row.rejections) / static_cast<double>(row.effective_reps);
            row.mc_halfwidth = 1.96 * std::sqrt(row.rate * (1.0 - row.rate) / static_cast<double>(row.effective_reps));
        }
        result.rows.push_back(row);
    }
    return result;
}

std::string study_csv(const StudyResult& result) {
    const auto& cfg = result.config;
    std::ostringstream out;
    out << "scenario,n,adjustment_size,method,rate,mc_halfwidth,reps,seed\n";
    char buf[64];
    for (const auto& row : result.rows) {
        out << to_string(cfg.scenario) << ',' << cfg.n << ',' << row.adjustment_size << ','
            << (row.method == Method::Direct ? "unadjusted" : "adjusted") << ',';
        std::snprintf(buf, sizeof buf, "%.10g", row.rate);
        out << buf << ',';
        std::snprintf(buf, sizeof buf, "%.10g", row.mc_halfwidth);
        out << buf << ',' << row.effective_reps << ',' << cfg.seed << '\n';
    }
    return out.str();
}

std::vector<IncidencePoint> emit_incidence_curve(const Dataset& ds, std::span<const double> grid) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> composite, fatal, nonfatal;
    for (const auto& r : ds.records()) {
        if (r.d1) fatal.push_back(r.u1);
        if (r.d2) nonfatal.push_back(r.u2);
        const double first = r.d2 ? r.u2 : (r.d1 ? r.u1 : inf);
        if (first < inf) composite.push_back(first);
    }
    for (auto* v : {&composite, &fatal, &nonfatal}) std::sort(v->begin(), v->end());
    const double n = static_cast<double>(ds.size());
    auto frac = [n](const std::vector<double>& v, double t) {
        return static_cast<double>(std::upper_bound(v.begin(), v.end(), t) - v.begin()) / n;
    };
    std::vector<IncidencePoint> out;
    out.reserve(grid.size());
    for (double t : grid) out.push_back({t, frac(composite, t), frac(fatal, t), frac(nonfatal, t)});
    return out;
}

std::vector<double> default_incidence_grid(const Dataset& ds, std::size_t points) {
    double tmax = 0.0;
    for (const auto& r : ds.records()) tmax = std::max(tmax, r.u1);
    points = std::max<std::size_t>(points, 2);
    std::vector<double> grid(points);
    for (std::size_t k = 0; k < points; ++k)
        grid[k] = tmax * static_cast<double>(k) / static_cast<double>(points - 1);
    return grid;
}

}  // namespace winodds
