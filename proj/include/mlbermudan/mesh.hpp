#pragma once

// Stochastic mesh estimator:
//   C_{k,j}(z) = (1/k) sum_i zeta_{k,j+1}(Z_{j+1}^i) w_ij(z),
//   w_ij(z)    = p_{j+1}(z, Z_{j+1}^i) / ((1/k) sum_l p_{j+1}(Z_j^l, Z_{j+1}^i)).
// Denominators are computed once per training point, in log space.
//
// With an inner control h (h(j, Z_j) a martingale, h(J, .) = g_J) the
// estimator becomes
//   C_{k,j}(z) = (1/k) sum_i (zeta_{k,j+1}(Z_{j+1}^i) - h(j+1, Z_{j+1}^i)) w_ij(z) + h(j, z).
// Experimental; off unless a control is passed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "mlbermudan/cost.hpp"
#include "mlbermudan/estimator.hpp"
#include "mlbermudan/model.hpp"
#include "mlbermudan/parallel.hpp"
#include "mlbermudan/payoff.hpp"

namespace mlb {

using InnerControl = std::function<double(std::size_t, std::span<const double>)>;

template <MarkovChain M>
class MeshEstimator {
public:
    template <Payoff P>
    static MeshEstimator train(const M& model, const PathSet& training, const P& payoff, std::size_t threads = 1,
                               InnerControl inner = {}) {
        return MeshEstimator(model, training, payoff, threads, std::move(inner));
    }

    double continuation(std::size_t j, std::span<const double> z) const {
        if (j > last_) throw std::out_of_range("MeshEstimator: date index out of range");
        if (j == last_) return 0.0;
        std::vector<double> px(pdim_);
        model_.prepare(j, z, px);
        eval_ops_.add(k_);
        return weighted_sum(j, px) + (inner_ ? inner_(j, z) : 0.0);
    }

    /// w_ij(z) for every training index i.
    std::vector<double> weights(std::size_t j, std::span<const double> z) const {
        if (j >= last_) throw std::out_of_range("MeshEstimator::weights: no weights at the last date");
        std::vector<double> px(pdim_);
        model_.prepare(j, z, px);
        std::vector<double> w(k_);
        for (std::size_t i = 0; i < k_; ++i) w[i] = weight(j, px, i);
        return w;
    }

    std::size_t last_date() const noexcept { return last_; }
    std::size_t training_size() const noexcept { return k_; }
    const PathSet& training_paths() const noexcept { return training_; }
    /// zeta_{k,j+1}(Z_{j+1}^i), i = 0..k-1.
    std::span<const double> zeta(std::size_t j) const { return zeta_.at(j); }
    std::span<const double> log_denominators(std::size_t j) const { return log_denom_.at(j); }

    double eval_units() const noexcept { return static_cast<double>(k_); }
    /// k^{1+kappa1} with kappa1 = 1. The loop counter train_ops() is
    /// (2J - 1) k^2: J denominator passes plus J - 1 continuation passes.
    double train_units() const noexcept { return unit_train_cost(k_); }
    static double unit_train_cost(std::size_t k) {
        const double kk = static_cast<double>(k);
        return kk * kk;
    }
    std::uint64_t train_ops() const noexcept { return train_ops_; }
    std::uint64_t eval_ops() const noexcept { return eval_ops_.value(); }
    std::uint64_t degenerate_weights() const noexcept { return degenerate_.value(); }
    bool inner_control() const noexcept { return static_cast<bool>(inner_); }

private:
    template <Payoff P>
    MeshEstimator(const M& model, const PathSet& training, const P& payoff, std::size_t threads, InnerControl inner)
        : model_(model), training_(training), k_(training.count()), last_(model.grid().last()),
          pdim_(model.prepared_dim()), inner_(std::move(inner)) {
        if (k_ < 1) throw std::invalid_argument("MeshEstimator: need at least one training path");
        if (training.dates() != last_ + 1) throw std::invalid_argument("MeshEstimator: path length does not match grid");

        prepared_.assign(last_ + 1, std::vector<double>(k_ * pdim_));
        for (std::size_t j = 0; j <= last_; ++j)
            for (std::size_t i = 0; i < k_; ++i)
                model_.prepare(j, training.state(i, j), std::span<double>(prepared_[j]).subspan(i * pdim_, pdim_));

        zeta_.assign(last_, std::vector<double>(k_));
        if (inner_) shifted_.assign(last_, std::vector<double>(k_));
        log_denom_.assign(last_, std::vector<double>(k_));
        std::vector<double> cont_next(k_, 0.0); // C_{k,j+1}(Z_{j+1}^i)
        const double log_k = std::log(static_cast<double>(k_));

        for (std::size_t jj = last_; jj-- > 0;) {
            const std::size_t j = jj;
            for (std::size_t i = 0; i < k_; ++i)
                zeta_[j][i] = std::max(static_cast<double>(payoff(j + 1, training.state(i, j + 1))), cont_next[i]);
            if (inner_)
                parallel_for(
                    k_, [&](std::size_t i) { shifted_[j][i] = zeta_[j][i] - inner_(j + 1, training.state(i, j + 1)); },
                    threads);

            parallel_for(
                k_,
                [&](std::size_t i) {
                    std::vector<double> terms(k_);
                    const auto py = target(j, i);
                    double peak = -std::numeric_limits<double>::infinity();
                    for (std::size_t l = 0; l < k_; ++l) {
                        terms[l] = model_.log_density(j + 1, source(j, l), py);
                        peak = std::max(peak, terms[l]);
                    }
                    if (peak == -std::numeric_limits<double>::infinity()) {
                        log_denom_[j][i] = peak;
                        return;
                    }
                    double s = 0.0;
                    for (double t : terms) s += std::exp(t - peak);
                    log_denom_[j][i] = peak + (std::log(s) - log_k);
                },
                threads);
            train_ops_ += static_cast<std::uint64_t>(k_) * k_;

            if (j > 0) {
                parallel_for(
                    k_,
                    [&](std::size_t l) {
                        cont_next[l] = weighted_sum(j, source(j, l)) + (inner_ ? inner_(j, training.state(l, j)) : 0.0);
                    },
                    threads);
                train_ops_ += static_cast<std::uint64_t>(k_) * k_;
            }
        }
        for (const auto& dates : log_denom_)
            for (double v : dates)
                if (v == -std::numeric_limits<double>::infinity()) degenerate_.add(1);
    }

    std::span<const double> source(std::size_t j, std::size_t l) const {
        return std::span<const double>(prepared_[j]).subspan(l * pdim_, pdim_);
    }
    std::span<const double> target(std::size_t j, std::size_t i) const {
        return std::span<const double>(prepared_[j + 1]).subspan(i * pdim_, pdim_);
    }

    double weight(std::size_t j, std::span<const double> px, std::size_t i) const {
        const double ld = log_denom_[j][i];
        if (ld == -std::numeric_limits<double>::infinity()) return 0.0; // degenerate density, reported
        return std::exp(model_.log_density(j + 1, px, target(j, i)) - ld);
    }

    double weighted_sum(std::size_t j, std::span<const double> px) const {
        double acc = 0.0;
        const auto& z = inner_ ? shifted_[j] : zeta_[j];
        for (std::size_t i = 0; i < k_; ++i) acc += z[i] * weight(j, px, i);
        return acc / static_cast<double>(k_);
    }

    M model_;
    PathSet training_;
    std::size_t k_;
    std::size_t last_;
    std::size_t pdim_;
    std::vector<std::vector<double>> prepared_;
    InnerControl inner_;
    std::vector<std::vector<double>> zeta_;
    std::vector<std::vector<double>> shifted_; // zeta - h(j+1, .) when an inner control is set
    std::vector<std::vector<double>> log_denom_;
    std::uint64_t train_ops_ = 0;
    OpCounter eval_ops_;
    OpCounter degenerate_;
};

template <MarkovChain M, Payoff P>
MeshEstimator<M> train_mesh(const M& model, const PathSet& training, const P& payoff, std::size_t threads = 1,
                            InnerControl inner = {}) {
    return MeshEstimator<M>::train(model, training, payoff, threads, std::move(inner));
}

} // namespace mlb
