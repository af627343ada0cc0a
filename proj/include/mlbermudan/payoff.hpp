#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mlbermudan/model.hpp"

namespace mlb {

/// Discounted exercise payoff g_j(z) >= 0.
template <class P>
concept Payoff = requires(const P& g, std::size_t j, std::span<const double> z) {
    { g(j, z) } -> std::convertible_to<double>;
};

/// g_j(z) = exp(-r t_j) (max_i z_i - kappa)^+.
class MaxCallPayoff {
public:
    MaxCallPayoff(double kappa, double r, const TimeGrid& grid) : kappa_(kappa), r_(r) {
        if (!(kappa >= 0.0)) throw std::invalid_argument("MaxCallPayoff: kappa must be >= 0");
        discount_.reserve(grid.size());
        for (double t : grid.times()) discount_.push_back(std::exp(-r * t));
    }

    double operator()(std::size_t j, std::span<const double> z) const {
        if (j >= discount_.size()) throw std::out_of_range("MaxCallPayoff: date index out of range");
        const double m = *std::max_element(z.begin(), z.end());
        return m > kappa_ ? discount_[j] * (m - kappa_) : 0.0;
    }

    double kappa() const noexcept { return kappa_; }
    double rate() const noexcept { return r_; }
    std::size_t last() const noexcept { return discount_.size() - 1; }

private:
    double kappa_;
    double r_;
    std::vector<double> discount_;
};

/// Arbitrary payoff, e.g. bounded test payoffs.
class FunctionPayoff {
public:
    using Fn = std::function<double(std::size_t, std::span<const double>)>;
    explicit FunctionPayoff(Fn fn) : fn_(std::move(fn)) {}
    double operator()(std::size_t j, std::span<const double> z) const { return fn_(j, z); }

private:
    Fn fn_;
};

} // namespace mlb
