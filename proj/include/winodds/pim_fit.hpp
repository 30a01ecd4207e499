#pragma once

#include "winodds/data_model.hpp"
#include "winodds/win_rule.hpp"

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace winodds {

/// Fitted probabilistic index model on the logit scale:
/// logit P(Y_i ⪯ Y_j) = tau_a (A_j - A_i) + tau_x' (X_j - X_i).
struct PimFit {
    double tau_a = 0.0;
    std::vector<double> tau_x;
    int iterations = 0;
    /// Final infinity norm of the estimating-equation vector divided by n(n-1).
    double score_norm = 0.0;
    bool converged = false;

    bool operator==(const PimFit&) const = default;
};

struct PimOptions {
    double score_tol = 1e-10;
    double coef_rel_tol = 1e-8;
    int max_iterations = 100;
    /// Coefficient norm beyond which the fit is declared separated.
    double divergence_bound = 30.0;
    unsigned workers = 0;
    /// Starting point (tau_a, tau_x...); zero when absent.
    std::optional<std::vector<double>> start;
};

class FitError : public std::runtime_error {
public:
    enum class Kind { NonConvergence, Separation, Singular };

    FitError(Kind kind, const std::string& what, std::vector<std::string> columns = {})
        : std::runtime_error(what), kind_(kind), columns_(std::move(columns)) {}

    Kind kind() const noexcept { return kind_; }
    /// Design columns involved in a singularity ("arm" or covariate names).
    const std::vector<std::string>& columns() const noexcept { return columns_; }

private:
    Kind kind_;
    std::vector<std::string> columns_;
};

/// Solves the pairwise logistic estimating equations by Newton/IRLS with
/// step halving, streaming over all ordered pairs. Memory is O(n·p + p²).
PimFit fit_pim(const Dataset& ds, const PimOptions& options = {}, const ComparisonRule& rule = hierarchical_rule());

/// Left-hand side of the estimating equations,
/// Σ_{i≠j} (A_j - A_i, X_j - X_i) (s_ij - expit(...)), evaluated at the
/// given coefficients. Entry 0 is the arm component.
std::vector<double> pim_score(const Dataset& ds, double tau_a, std::span<const double> tau_x, unsigned workers = 0,
                              const ComparisonRule& rule = hierarchical_rule());

/// expit(tau_a (a_j - a_i) + tau_x' (x_j - x_i)).
double cpi_predict(const PimFit& fit, std::span<const double> x_i, std::span<const double> x_j, int a_i, int a_j);

}  // namespace winodds
