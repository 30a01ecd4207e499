#pragma once

#include "winodds/data_model.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace winodds {

/// Result of comparing two subjects, always read as "does the second
/// argument beat the first".
enum class Outcome : std::int8_t { Loss = -1, Tie = 0, Win = 1 };

constexpr Outcome reversed(Outcome o) noexcept { return static_cast<Outcome>(-static_cast<int>(o)); }

/// I(a ⪯ b): 1 for a win of b, 1/2 for a tie, 0 for a loss.
constexpr double win_indicator(Outcome o) noexcept { return 0.5 + 0.5 * static_cast<int>(o); }

/// Any total, antisymmetric three-way comparison of subjects. No
/// transitivity is assumed anywhere downstream.
class ComparisonRule {
public:
    virtual ~ComparisonRule() = default;
    virtual Outcome compare(const SubjectRecord& a, const SubjectRecord& b) const = 0;
};

/// Two-level hierarchy: the fatal event decides first, then the first
/// nonfatal event. An event at level k decides only when it happens
/// strictly before the other subject's last observed time at that level;
/// equal times fall through to the next level.
class HierarchicalRule final : public ComparisonRule {
public:
    Outcome compare(const SubjectRecord& a, const SubjectRecord& b) const override { return apply(a, b); }

    static Outcome apply(const SubjectRecord& a, const SubjectRecord& b) noexcept {
        if (a.d1 == 1 && a.u1 < b.u1) return Outcome::Win;
        if (b.d1 == 1 && b.u1 < a.u1) return Outcome::Loss;
        if (a.d2 == 1 && a.u2 < b.u2) return Outcome::Win;
        if (b.d2 == 1 && b.u2 < a.u2) return Outcome::Loss;
        return Outcome::Tie;
    }
};

const ComparisonRule& hierarchical_rule();

/// Does b beat a under the two-level hierarchical rule.
inline Outcome compare(const SubjectRecord& a, const SubjectRecord& b) noexcept {
    return HierarchicalRule::apply(a, b);
}

/// Row-wise access to the pairwise indicators s_ij = I(Y_i ⪯ Y_j).
///
/// The built-in hierarchical rule runs on a structure-of-arrays copy of the
/// event data with a branch-free kernel; other rules go through the virtual
/// comparison. Holds a reference to the dataset, which must outlive it.
class PairScorer {
public:
    explicit PairScorer(const Dataset& ds, const ComparisonRule& rule = hierarchical_rule());

    std::size_t size() const noexcept { return n_; }
    /// out[j - from] = s_ij for every j >= from; s_ii is reported as 1/2.
    void row(std::size_t i, std::span<double> out, std::size_t from = 0) const;
    double operator()(std::size_t i, std::size_t j) const;

private:
    const Dataset* ds_;
    const ComparisonRule* rule_;
    bool fast_;
    std::size_t n_;
    std::vector<double> u1_, d1_, u2_, d2_;
};

/// Cross-arm win/loss/tie counts plus per-subject win fractions.
struct WinTally {
    std::uint64_t wins = 0;    // treated beats control
    std::uint64_t losses = 0;
    std::uint64_t ties = 0;
    std::size_t n0 = 0, n1 = 0;
    /// Per treated subject j (record order): (1/N0) Σ_controls s_ij.
    std::vector<double> treated_winfrac;
    /// Per control subject i (record order): (1/N1) Σ_treated s_ij.
    std::vector<double> control_winfrac;

    std::uint64_t comparisons() const noexcept { return static_cast<std::uint64_t>(n0) * n1; }
};

/// Tallies every control/treated pair. Counts are exact integers and the
/// win fractions are exact multiples of 1/(2·N), so the result is
/// bit-identical for every worker count.
WinTally pairwise_tally(const Dataset& ds, unsigned workers = 0, const ComparisonRule& rule = hierarchical_rule());

/// One ordered pseudo-observation: response s_ij with design row
/// (A_j - A_i, X_j - X_i).
struct PseudoPair {
    std::size_t i = 0, j = 0;
    double response = 0.5;
    int arm_diff = 0;
    std::span<const double> covariate_diff;
};

/// Visits all n(n-1) ordered pairs (i outer, j inner, i != j) without
/// materialising the pseudo-design. The span in each PseudoPair is only
/// valid during the callback.
void for_each_pseudo_pair(const Dataset& ds, const std::function<void(const PseudoPair&)>& visit,
                          const ComparisonRule& rule = hierarchical_rule());

}  // namespace winodds
