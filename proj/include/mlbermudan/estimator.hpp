#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>

#include "mlbermudan/payoff.hpp"

namespace mlb {

/// Quality and cost exponents of an estimator family: gamma_k = k^{-mu},
/// training cost k^{1+kappa1}, evaluation cost k^{kappa2}, margin exponent alpha.
struct EstimatorProfile {
    double mu = 1.0;
    double kappa1 = 1.0;
    double kappa2 = 1.0;
    double alpha = 1.0;

    void validate() const {
        if (!(mu > 0 && kappa1 > 0 && kappa2 > 0 && alpha > 0))
            throw std::invalid_argument("EstimatorProfile: mu, kappa1, kappa2, alpha must all be > 0");
    }

    static constexpr EstimatorProfile mesh() { return {1.0, 1.0, 1.0, 1.0}; }
    static constexpr EstimatorProfile local_constant() { return {1.0 / 6.0, 1.0, 1.0, 1.0}; }
    static constexpr EstimatorProfile global(double rho) { return {1.0, 2.0 * rho, rho, 1.0}; }
};

/// A trained family C_{k,0..J}. continuation(J, z) must return 0.
template <class E>
concept ContinuationEstimator = requires(const E& e, std::size_t j, std::span<const double> z) {
    { e.continuation(j, z) } -> std::convertible_to<double>;
    { e.last_date() } -> std::convertible_to<std::size_t>;
    { e.training_size() } -> std::convertible_to<std::size_t>;
    { e.eval_units() } -> std::convertible_to<double>;
    { e.train_units() } -> std::convertible_to<double>;
    { e.train_ops() } -> std::convertible_to<std::uint64_t>;
    { e.eval_ops() } -> std::convertible_to<std::uint64_t>;
};

/// zeta_{k,j}(z) = max(g_j(z), C_{k,j}(z)), with C_{k,J} = 0.
template <ContinuationEstimator E, Payoff P>
double continuation_target(const E& est, const P& payoff, std::size_t j, std::span<const double> z) {
    const double g = payoff(j, z);
    if (j >= est.last_date()) return g;
    return std::max(g, static_cast<double>(est.continuation(j, z)));
}

} // namespace mlb
