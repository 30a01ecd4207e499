#pragma once

// Internal helpers shared by the PIM solver and the estimators.

#include "winodds/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace winodds::detail {

inline double expit(double t) noexcept {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

/// Column-major design with columns (A, X_1..X_p), each centred at its
/// mean. Pair differences are unaffected by the centring.
struct CenteredDesign {
    std::size_t n = 0;
    std::size_t q = 0;  // 1 + p when the arm column is included
    std::vector<std::vector<double>> cols;

    CenteredDesign(const Dataset& ds, bool with_arm) : n(ds.size()), q(ds.p() + (with_arm ? 1 : 0)) {
        cols.assign(q, std::vector<double>(n));
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t k = 0;
            if (with_arm) cols[k++][i] = ds[i].arm;
            for (double x : ds[i].covariates) cols[k++][i] = x;
        }
        for (auto& c : cols) {
            double mean = 0.0;
            for (double v : c) mean += v;
            mean /= static_cast<double>(n);
            for (double& v : c) v -= mean;
        }
    }

    /// eta_i = beta' z_i
    std::vector<double> linear_predictor(std::span<const double> beta) const {
        std::vector<double> eta(n, 0.0);
        for (std::size_t k = 0; k < q; ++k)
            for (std::size_t i = 0; i < n; ++i) eta[i] += beta[k] * cols[k][i];
        return eta;
    }
};

/// Rows of expit(offset + eta_j - eta_i). When the exponents are moderate
/// the per-pair exponential is replaced by a product of per-subject
/// factors, 1 / (1 + e^{eta_i} e^{-offset-eta_j}).
class ExpitRows {
public:
    ExpitRows(std::vector<double> eta, double offset) : eta_(std::move(eta)), offset_(offset) {
        double lo = 0.0, hi = 0.0;
        for (double e : eta_) {
            lo = std::min(lo, e);
            hi = std::max(hi, e);
        }
        factored_ = std::max(-lo, hi) <= 300.0 && std::max(std::abs(offset_ + lo), std::abs(offset_ + hi)) <= 300.0;
        if (factored_) {
            a_.resize(eta_.size());
            b_.resize(eta_.size());
            for (std::size_t i = 0; i < eta_.size(); ++i) {
                a_[i] = std::exp(eta_[i]);
                b_[i] = std::exp(-offset_ - eta_[i]);
            }
        }
    }

    std::size_t size() const noexcept { return eta_.size(); }

    /// out[j - from] = expit(offset + eta_j - eta_i) for j >= from.
    void row(std::size_t i, std::span<double> out, std::size_t from = 0) const {
        const std::size_t n = eta_.size();
        if (factored_) {
            const double ai = a_[i];
            const double* b = b_.data() + from;
            double* o = out.data();
            for (std::size_t j = 0; j < n - from; ++j) o[j] = 1.0 / (1.0 + ai * b[j]);
        } else {
            for (std::size_t j = from; j < n; ++j) out[j - from] = expit(offset_ + eta_[j] - eta_[i]);
        }
    }

    double operator()(std::size_t i, std::size_t j) const {
        return factored_ ? 1.0 / (1.0 + a_[i] * b_[j]) : expit(offset_ + eta_[j] - eta_[i]);
    }

private:
    std::vector<double> eta_;
    double offset_;
    bool factored_ = false;
    std::vector<double> a_, b_;
};

}  // namespace winodds::detail
