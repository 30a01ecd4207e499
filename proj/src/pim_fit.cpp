#include "winodds/pim_fit.hpp"

#include "logistic_kernel.hpp"
#include "winodds/parallel.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

namespace winodds {

namespace {

constexpr std::size_t kRowChunk = 32;

std::string column_name(const Dataset& ds, std::size_t k) { return k == 0 ? "arm" : ds.covariate_names()[k - 1]; }

// Columns whose centred values are (numerically) a linear combination of
// earlier columns, found by modified Gram-Schmidt in design order.
std::vector<std::size_t> dependent_columns(const detail::CenteredDesign& z) {
    std::vector<std::vector<double>> basis;
    std::vector<std::size_t> bad;
    for (std::size_t k = 0; k < z.q; ++k) {
        std::vector<double> v = z.cols[k];
        double norm0 = 0.0;
        for (double x : v) norm0 += x * x;
        for (const auto& b : basis) {
            double dot = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i) dot += b[i] * v[i];
            for (std::size_t i = 0; i < v.size(); ++i) v[i] -= dot * b[i];
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        if (norm0 == 0.0 || norm <= 1e-10 * norm0) {
            bad.push_back(k);
            continue;
        }
        const double inv = 1.0 / std::sqrt(norm);
        for (double& x : v) x *= inv;
        basis.push_back(std::move(v));
    }
    return bad;
}

struct Evaluation {
    Eigen::VectorXd score;    // Σ_{i≠j} d_ij e_ij
    Eigen::MatrixXd hessian;  // Σ_{i≠j} d_ij d_ij' w_ij
};

// One streaming pass over the pairs i < j. With e_ij = s_ij - mu_ij
// antisymmetric and w_ij symmetric,
//   score   = -2 Σ_i z_i r_i,                  r_i = Σ_j e_ij
//   hessian =  2 Σ_i W_i z_i z_i' - 2 Σ_{i≠j} w_ij z_i z_j',  W_i = Σ_j w_ij
// Each block of rows covers the columns to its right; the off-diagonal
// term of the block is one dense (rows x m)(m x q) product.
Evaluation evaluate(const Eigen::MatrixXd& z, const PairScorer& scorer, std::span<const double> beta,
                    bool with_hessian, unsigned workers) {
    const std::size_t n = static_cast<std::size_t>(z.rows());
    const Eigen::Index q = z.cols();
    const auto nn = static_cast<Eigen::Index>(n);
    const Eigen::Map<const Eigen::VectorXd> b(beta.data(), q);
    const Eigen::VectorXd eta = z * b;
    const detail::ExpitRows mu(std::vector<double>(eta.data(), eta.data() + eta.size()), 0.0);

    struct Partial {
        Eigen::VectorXd resid;    // r_i
        Eigen::VectorXd wsum;     // W_i
        Eigen::MatrixXd cross;    // Σ_{i<j} w_ij z_i z_j'
    };
    const Partial init{Eigen::VectorXd::Zero(nn), Eigen::VectorXd::Zero(with_hessian ? nn : 0),
                       Eigen::MatrixXd::Zero(q, with_hessian ? q : 0)};
    Partial total = deterministic_reduce(
        n, kRowChunk, workers, init,
        [&](std::size_t begin, std::size_t end) {
            Partial part = init;
            const auto rows = static_cast<Eigen::Index>(end - begin);
            const auto b0 = static_cast<Eigen::Index>(begin);
            const Eigen::Index m = nn - b0;
            // row-major, one contiguous pair row each
            using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
            thread_local RowMajor e, w;
            e.resize(rows, m);
            w.resize(rows, m);
            for (Eigen::Index r = 0; r < rows; ++r) {
                const std::size_t i = begin + static_cast<std::size_t>(r);
                scorer.row(i, {e.row(r).data(), static_cast<std::size_t>(m)}, begin);
                mu.row(i, {w.row(r).data(), static_cast<std::size_t>(m)}, begin);
                // keep j > i only
                e.row(r).head(r + 1).setZero();
                w.row(r).head(r + 1).setZero();
            }
            e -= w;
            part.resid.segment(b0, rows) += e.rowwise().sum();
            part.resid.segment(b0, m) -= e.colwise().sum().transpose();
            if (!with_hessian) return part;
            w = w.array() * (1.0 - w.array());
            part.wsum.segment(b0, rows) += w.rowwise().sum();
            part.wsum.segment(b0, m) += w.colwise().sum().transpose();
            const Eigen::MatrixXd wz = w * z.middleRows(b0, m);  // rows x q
            part.cross.noalias() += z.middleRows(b0, rows).transpose() * wz;
            return part;
        },
        [](Partial& acc, const Partial& part) {
            acc.resid += part.resid;
            acc.wsum += part.wsum;
            acc.cross += part.cross;
        });

    Evaluation ev;
    ev.score = -2.0 * (z.transpose() * total.resid);
    if (with_hessian) {
        ev.hessian = 2.0 * (z.transpose() * total.wsum.asDiagonal() * z);
        ev.hessian -= 2.0 * (total.cross + total.cross.transpose());
        ev.hessian = 0.5 * (ev.hessian + ev.hessian.transpose());
    }
    return ev;
}

Eigen::MatrixXd design_matrix(const detail::CenteredDesign& d) {
    Eigen::MatrixXd z(static_cast<Eigen::Index>(d.n), static_cast<Eigen::Index>(d.q));
    for (std::size_t k = 0; k < d.q; ++k)
        for (std::size_t i = 0; i < d.n; ++i) z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = d.cols[k][i];
    return z;
}

double scaled_norm(const Eigen::VectorXd& score, double pairs) {
    return score.size() == 0 ? 0.0 : score.lpNorm<Eigen::Infinity>() / pairs;
}

}  // namespace

PimFit fit_pim(const Dataset& ds, const PimOptions& options, const ComparisonRule& rule) {
    const detail::CenteredDesign centered(ds, true);
    const std::size_t q = centered.q;
    const Eigen::MatrixXd z = design_matrix(centered);
    const double pairs = static_cast<double>(ds.size()) * static_cast<double>(ds.size() - 1);

    if (auto bad = dependent_columns(centered); !bad.empty()) {
        std::vector<std::string> names;
        std::ostringstream msg;
        msg << "singular PIM design: column(s)";
        for (std::size_t k : bad) {
            names.push_back(column_name(ds, k));
            msg << " '" << names.back() << "'";
        }
        msg << " are constant or collinear with earlier columns";
        throw FitError(FitError::Kind::Singular, msg.str(), std::move(names));
    }

    const PairScorer scorer(ds, rule);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(q));
    if (options.start) {
        if (options.start->size() != q) throw std::invalid_argument("PIM start vector has wrong length");
        for (std::size_t k = 0; k < q; ++k) beta(static_cast<Eigen::Index>(k)) = (*options.start)[k];
    }

    auto as_span = [](const Eigen::VectorXd& v) { return std::span<const double>(v.data(), static_cast<std::size_t>(v.size())); };

    Evaluation ev = evaluate(z, scorer, as_span(beta), true, options.workers);
    double norm = scaled_norm(ev.score, pairs);

    PimFit fit;
    auto finish = [&](bool converged) {
        fit.tau_a = beta(0);
        fit.tau_x.assign(beta.data() + 1, beta.data() + beta.size());
        fit.score_norm = norm;
        fit.converged = converged;
        return fit;
    };
    if (norm <= options.score_tol) return finish(true);

    for (int iter = 1; iter <= options.max_iterations; ++iter) {
        Eigen::LLT<Eigen::MatrixXd> llt(ev.hessian);
        if (llt.info() != Eigen::Success)
            throw FitError(FitError::Kind::Singular, "PIM weighted normal equations are not positive definite");
        const Eigen::VectorXd step = llt.solve(ev.score);
        if (!step.allFinite())
            throw FitError(FitError::Kind::Singular, "PIM Newton step is not finite");

        double scale = 1.0;
        Eigen::VectorXd trial;
        Evaluation next;
        double next_norm = 0.0;
        for (int halving = 0; halving <= 30; ++halving, scale *= 0.5) {
            trial = beta + scale * step;
            next = evaluate(z, scorer, as_span(trial), true, options.workers);
            next_norm = scaled_norm(next.score, pairs);
            if (next_norm <= norm || !std::isfinite(norm)) break;
        }
        const double change = (scale * step).lpNorm<Eigen::Infinity>() /
                              std::max(1.0, beta.lpNorm<Eigen::Infinity>());
        beta = trial;
        ev = std::move(next);
        norm = next_norm;
        fit.iterations = iter;

        if (beta.norm() > options.divergence_bound) {
            std::ostringstream msg;
            msg << "PIM coefficients diverging (norm " << beta.norm() << " > " << options.divergence_bound
                << "); the comparisons are separated by the design";
            throw FitError(FitError::Kind::Separation, msg.str());
        }
        // small step, or small score with a moderately small step
        if (change <= options.coef_rel_tol || (norm <= options.score_tol && change <= std::sqrt(options.coef_rel_tol)))
            return finish(true);
    }
    std::ostringstream msg;
    msg << "PIM solver did not converge in " << options.max_iterations << " iterations (score norm " << norm << ")";
    throw FitError(FitError::Kind::NonConvergence, msg.str());
}

std::vector<double> pim_score(const Dataset& ds, double tau_a, std::span<const double> tau_x, unsigned workers,
                              const ComparisonRule& rule) {
    if (tau_x.size() != ds.p()) throw std::invalid_argument("tau_x length does not match covariate dimension");
    const Eigen::MatrixXd z = design_matrix(detail::CenteredDesign(ds, true));
    const PairScorer scorer(ds, rule);
    std::vector<double> beta{tau_a};
    beta.insert(beta.end(), tau_x.begin(), tau_x.end());
    const Evaluation ev = evaluate(z, scorer, beta, false, workers);
    return {ev.score.data(), ev.score.data() + ev.score.size()};
}

double cpi_predict(const PimFit& fit, std::span<const double> x_i, std::span<const double> x_j, int a_i, int a_j) {
    if (x_i.size() != fit.tau_x.size() || x_j.size() != fit.tau_x.size())
        throw std::invalid_argument("covariate vector length does not match the fitted model");
    double eta = fit.tau_a * static_cast<double>(a_j - a_i);
    for (std::size_t k = 0; k < x_i.size(); ++k) eta += fit.tau_x[k] * (x_j[k] - x_i[k]);
    return detail::expit(eta);
}

}  // namespace winodds
