#pragma once

// Local constant regression with the indicator kernel K(u) = 1(|u| <= 1):
// C_{k,j}(z) is the average of zeta_{k,j+1}(Z_{j+1}^i) over the training
// points Z_j^i within Euclidean distance delta_k of z, and 0 when there are
// none.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "mlbermudan/cost.hpp"
#include "mlbermudan/estimator.hpp"
#include "mlbermudan/model.hpp"
#include "mlbermudan/parallel.hpp"
#include "mlbermudan/payoff.hpp"

namespace mlb {

/// delta_k = scale * k^{-1/(d+2)}; scale defaults to 100.
inline double local_bandwidth(std::size_t k, std::size_t d, double scale = 100.0) {
    if (k < 1) throw std::invalid_argument("local_bandwidth: k must be >= 1");
    return scale * std::pow(static_cast<double>(k), -1.0 / static_cast<double>(d + 2));
}

class LocalEstimator {
public:
    template <Payoff P>
    static LocalEstimator train(const PathSet& training, const P& payoff, double bandwidth, std::size_t threads = 1) {
        return LocalEstimator(training, payoff, bandwidth, threads);
    }

    double continuation(std::size_t j, std::span<const double> z) const {
        if (j > last_) throw std::out_of_range("LocalEstimator: date index out of range");
        if (j == last_) return 0.0;
        if (z.size() != dim_) throw std::invalid_argument("LocalEstimator: dimension mismatch");
        eval_ops_.add(k_);
        return neighbourhood_mean(j, z);
    }

    std::size_t neighbours(std::size_t j, std::span<const double> z) const {
        std::size_t count = 0;
        for (std::size_t i = 0; i < k_; ++i) count += within(j, i, z) ? 1 : 0;
        return count;
    }

    double bandwidth() const noexcept { return bandwidth_; }
    std::size_t last_date() const noexcept { return last_; }
    std::size_t training_size() const noexcept { return k_; }
    std::span<const double> zeta(std::size_t j) const { return zeta_.at(j); }
    const PathSet& training_paths() const noexcept { return training_; }

    double eval_units() const noexcept { return static_cast<double>(k_); }
    /// k^{1+kappa1} with kappa1 = 1; train_ops() counts (J - 1) k^2 kernel tests.
    double train_units() const noexcept { return unit_train_cost(k_); }
    static double unit_train_cost(std::size_t k) {
        const double kk = static_cast<double>(k);
        return kk * kk;
    }
    std::uint64_t train_ops() const noexcept { return train_ops_; }
    std::uint64_t eval_ops() const noexcept { return eval_ops_.value(); }

private:
    template <Payoff P>
    LocalEstimator(const PathSet& training, const P& payoff, double bandwidth, std::size_t threads)
        : training_(training), k_(training.count()), last_(training.dates() - 1), dim_(training.dim()),
          bandwidth_(bandwidth), bandwidth_sq_(bandwidth * bandwidth) {
        if (k_ < 1) throw std::invalid_argument("LocalEstimator: need at least one training path");
        if (!(bandwidth > 0.0)) throw std::invalid_argument("LocalEstimator: bandwidth must be > 0");
        zeta_.assign(last_, std::vector<double>(k_));
        std::vector<double> cont_next(k_, 0.0);
        for (std::size_t jj = last_; jj-- > 0;) {
            const std::size_t j = jj;
            for (std::size_t i = 0; i < k_; ++i)
                zeta_[j][i] = std::max(static_cast<double>(payoff(j + 1, training.state(i, j + 1))), cont_next[i]);
            if (j > 0) {
                parallel_for(k_, [&](std::size_t l) { cont_next[l] = neighbourhood_mean(j, training_.state(l, j)); },
                             threads);
                train_ops_ += static_cast<std::uint64_t>(k_) * k_;
            }
        }
    }

    bool within(std::size_t j, std::size_t i, std::span<const double> z) const {
        const auto x = training_.state(i, j);
        double d2 = 0.0;
        for (std::size_t c = 0; c < dim_; ++c) {
            const double u = x[c] - z[c];
            d2 += u * u;
        }
        return d2 <= bandwidth_sq_;
    }

    double neighbourhood_mean(std::size_t j, std::span<const double> z) const {
        double acc = 0.0;
        std::size_t count = 0;
        const auto& zeta = zeta_[j];
        for (std::size_t i = 0; i < k_; ++i) {
            if (within(j, i, z)) {
                acc += zeta[i];
                ++count;
            }
        }
        return count == 0 ? 0.0 : acc / static_cast<double>(count);
    }

    PathSet training_;
    std::size_t k_;
    std::size_t last_;
    std::size_t dim_;
    double bandwidth_;
    double bandwidth_sq_;
    std::vector<std::vector<double>> zeta_;
    std::uint64_t train_ops_ = 0;
    OpCounter eval_ops_;
};

template <Payoff P>
LocalEstimator train_local(const PathSet& training, const P& payoff, double bandwidth, std::size_t threads = 1) {
    return LocalEstimator::train(training, payoff, bandwidth, threads);
}

} // namespace mlb
