#include "winodds/win_rule.hpp"

#include "winodds/parallel.hpp"

namespace winodds {

const ComparisonRule& hierarchical_rule() {
    static const HierarchicalRule rule;
    return rule;
}

PairScorer::PairScorer(const Dataset& ds, const ComparisonRule& rule)
    : ds_(&ds), rule_(&rule), fast_(dynamic_cast<const HierarchicalRule*>(&rule) != nullptr), n_(ds.size()) {
    if (!fast_) return;
    u1_.resize(n_);
    d1_.resize(n_);
    u2_.resize(n_);
    d2_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) {
        const auto& r = ds[i];
        u1_[i] = r.u1;
        d1_[i] = r.d1;
        u2_[i] = r.u2;
        d2_[i] = r.d2;
    }
}

void PairScorer::row(std::size_t i, std::span<double> out, std::size_t from) const {
    if (!fast_) {
        const auto& a = (*ds_)[i];
        for (std::size_t j = from; j < n_; ++j) out[j - from] = win_indicator(rule_->compare(a, (*ds_)[j]));
        if (i >= from) out[i - from] = 0.5;
        return;
    }
    const double u1i = u1_[i], u2i = u2_[i];
    const double d1i = d1_[i], d2i = d2_[i];
    const double* u1 = u1_.data() + from;
    const double* u2 = u2_.data() + from;
    const double* d1 = d1_.data() + from;
    const double* d2 = d2_.data() + from;
    double* s = out.data();
    // indicator arithmetic on 0/1 doubles; win and loss at one level are exclusive
    for (std::size_t j = 0; j < n_ - from; ++j) {
        const double win1 = static_cast<double>(u1i < u1[j]) * d1i;
        const double loss1 = static_cast<double>(u1[j] < u1i) * d1[j];
        const double win2 = static_cast<double>(u2i < u2[j]) * d2i;
        const double loss2 = static_cast<double>(u2[j] < u2i) * d2[j];
        const double open = 1.0 - win1 - loss1;
        s[j] = 0.5 + 0.5 * ((win1 - loss1) + open * (win2 - loss2));
    }
    if (i >= from) out[i - from] = 0.5;
}

double PairScorer::operator()(std::size_t i, std::size_t j) const {
    return win_indicator(rule_->compare((*ds_)[i], (*ds_)[j]));
}

WinTally pairwise_tally(const Dataset& ds, unsigned workers, const ComparisonRule& rule) {
    const std::size_t n = ds.size();
    WinTally t;
    t.n0 = ds.n0();
    t.n1 = ds.n1();
    t.treated_winfrac.resize(t.n1);
    t.control_winfrac.resize(t.n0);

    // position of each subject inside its own arm
    std::vector<std::size_t> slot(n);
    {
        std::size_t c0 = 0, c1 = 0;
        for (std::size_t i = 0; i < n; ++i) slot[i] = ds[i].arm == 1 ? c1++ : c0++;
    }

    std::vector<double> treated(n);
    for (std::size_t i = 0; i < n; ++i) treated[i] = ds[i].arm == 1 ? 1.0 : 0.0;

    struct Counts {
        std::uint64_t wins = 0, losses = 0, ties = 0;
    };
    const PairScorer scorer(ds, rule);
    auto counts = deterministic_reduce(
        n, 64, workers, Counts{},
        [&](std::size_t begin, std::size_t end) {
            Counts c;
            std::vector<double> s(n);
            for (std::size_t i = begin; i < end; ++i) {
                scorer.row(i, s);
                const double own = treated[i];
                // 2·Σ s and the tie count over the opposite arm; both are
                // small integers, so the double sums are exact in any order
                double twice = 0.0, tie = 0.0, opposite = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double other = static_cast<double>(treated[j] != own);
                    twice += other * 2.0 * s[j];
                    tie += static_cast<double>(s[j] == 0.5) * other;
                    opposite += other;
                }
                const auto twice_n = static_cast<std::uint64_t>(twice);
                const auto tie_n = static_cast<std::uint64_t>(tie);
                const auto up = (twice_n - tie_n) / 2;  // pairs with s_ij = 1
                const auto down = static_cast<std::uint64_t>(opposite) - up - tie_n;
                if (own == 0.0) {
                    // control row: s_ij = 1 means the treated subject j wins
                    c.wins += up;
                    c.losses += down;
                    c.ties += tie_n;
                    t.control_winfrac[slot[i]] = twice / (2.0 * static_cast<double>(t.n1));
                } else {
                    // treated row: the treated subject i wins when s_ij = 0
                    t.treated_winfrac[slot[i]] = static_cast<double>(2 * down + tie_n) / (2.0 * static_cast<double>(t.n0));
                }
            }
            return c;
        },
        [](Counts& acc, const Counts& c) {
            acc.wins += c.wins;
            acc.losses += c.losses;
            acc.ties += c.ties;
        });
    t.wins = counts.wins;
    t.losses = counts.losses;
    t.ties = counts.ties;
    return t;
}

void for_each_pseudo_pair(const Dataset& ds, const std::function<void(const PseudoPair&)>& visit,
                          const ComparisonRule& rule) {
    const std::size_t n = ds.size();
    const std::size_t p = ds.p();
    const PairScorer scorer(ds, rule);
    std::vector<double> s(n);
    std::vector<double> dx(p);
    PseudoPair pair;
    for (std::size_t i = 0; i < n; ++i) {
        scorer.row(i, s);
        const auto& xi = ds[i].covariates;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const auto& xj = ds[j].covariates;
            for (std::size_t k = 0; k < p; ++k) dx[k] = xj[k] - xi[k];
            pair.i = i;
            pair.j = j;
            pair.response = s[j];
            pair.arm_diff = ds[j].arm - ds[i].arm;
            pair.covariate_diff = dx;
            visit(pair);
        }
    }
}

}  // namespace winodds
