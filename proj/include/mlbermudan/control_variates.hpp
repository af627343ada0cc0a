#pragma once

// European max-call value E(x, t, T) = E[exp(-rT) (max_i X_T^i - kappa)^+ | X_t = x]
// for independent GBM assets, and its use as a control variate.
//
// With independent assets P(max_i X_T^i <= y) = prod_i F_i(y), so
//   E(x, t, T) = exp(-rT) * int_kappa^inf (1 - prod_i F_i(y)) dy,
// integrated adaptively in u = log y.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "mlbermudan/model.hpp"
#include "mlbermudan/stats.hpp"

namespace mlb {

struct QuadratureValue {
    double value = 0.0;
    double error_bound = 0.0;
    bool converged = true;
};

/// Value and achieved error bound. Requires t <= T.
inline QuadratureValue european_max_call_detailed(std::span<const double> x, double t, double maturity, double kappa,
                                                  const ModelParams& params, double rel_tol = 1e-12) {
    if (!(t <= maturity)) throw std::invalid_argument("european_max_call: requires t <= T");
    if (x.size() != params.d) throw std::invalid_argument("european_max_call: dimension mismatch");
    if (!(kappa >= 0.0)) throw std::invalid_argument("european_max_call: kappa must be >= 0");
    const double disc = std::exp(-params.r * maturity);
    const double tau = maturity - t;
    const double growth = std::exp((params.r - params.delta) * tau);
    if (tau == 0.0 || params.sigma == 0.0) {
        const double m = *std::max_element(x.begin(), x.end()) * growth;
        return {disc * std::max(m - kappa, 0.0), 0.0, true};
    }

    const double s = params.sigma * std::sqrt(tau);
    std::vector<double> centre(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0)) throw std::invalid_argument("european_max_call: state components must be > 0");
        centre[i] = std::log(x[i]) + (params.r - params.delta - 0.5 * params.sigma * params.sigma) * tau;
    }
    const double width = 9.0 * s; // tails beyond this are below 1e-18
    const double u_hi = *std::max_element(centre.begin(), centre.end()) + width;
    const double u_lo = *std::min_element(centre.begin(), centre.end()) - width;

    // 1 - prod_i F_i(e^u), computed from the upper tails to avoid cancellation
    auto survival = [&](double u) {
        double log_prod = 0.0;
        for (double c : centre) {
            const double upper = 0.5 * std::erfc((u - c) / (s * std::numbers::sqrt2));
            if (upper >= 1.0) return 1.0;
            log_prod += std::log1p(-upper);
        }
        return -std::expm1(log_prod);
    };

    double result = 0.0;
    double lower = u_lo;
    if (kappa > 0.0 && std::log(kappa) > u_lo) {
        lower = std::log(kappa);
    } else {
        result += std::exp(u_lo) - kappa; // below u_lo the maximum exceeds y almost surely
    }
    QuadratureValue q;
    if (lower < u_hi) {
        double err = 0.0;
        const double integral = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
            [&](double u) { return survival(u) * std::exp(u); }, lower, u_hi, 25, rel_tol, &err);
        result += integral;
        q.error_bound = disc * err;
        q.converged = err <= std::max(1e-8 * std::abs(integral), 1e-12);
    }
    q.value = disc * result;
    return q;
}

/// Throws with the achieved error bound if the quadrature did not converge.
inline double european_max_call(std::span<const double> x, double t, double maturity, double kappa,
                                const ModelParams& params) {
    const auto q = european_max_call_detailed(x, t, maturity, kappa, params);
    if (!q.converged) {
        std::ostringstream msg;
        msg << "european_max_call: quadrature did not converge, error bound " << q.error_bound;
        throw std::runtime_error(msg.str());
    }
    return q.value;
}

/// Classical dividend-adjusted call, discounted to time 0 like the payoff.
inline double black_scholes_call(double x, double t, double maturity, double kappa, const ModelParams& params) {
    const double tau = maturity - t;
    const double s = params.sigma * std::sqrt(tau);
    const double fwd = x * std::exp((params.r - params.delta) * tau);
    const double d1 = (std::log(fwd / kappa) + 0.5 * s * s) / s;
    const double d2 = d1 - s;
    auto ncdf = [](double v) { return 0.5 * std::erfc(-v / std::numbers::sqrt2); };
    return std::exp(-params.r * maturity) * (fwd * ncdf(d1) - kappa * ncdf(d2));
}

using ControlFunction = std::function<double(std::size_t, std::span<const double>)>;

/// Outer control variate: a function of (tau, Z_tau) with known mean.
struct ControlSpec {
    ControlFunction value;
    double mean = 0.0;
    bool estimate_beta = false; // false: beta = 1

    explicit operator bool() const noexcept { return static_cast<bool>(value); }
};

/// The discounted European price process t -> E(Z_t, t, T) is a martingale,
/// so E(Z_tau, t_tau, T) has mean E(x0, 0, T) for any stopping date tau.
inline ControlFunction european_control_function(const ModelParams& params, const TimeGrid& grid, double kappa) {
    return [params, grid, kappa](std::size_t j, std::span<const double> z) {
        return european_max_call(z, grid[j], grid.maturity(), kappa, params);
    };
}

inline ControlSpec european_control(const ModelParams& params, const TimeGrid& grid, double kappa,
                                    bool estimate_beta = false) {
    ControlSpec spec;
    spec.value = european_control_function(params, grid, kappa);
    spec.mean = european_max_call(params.x0, 0.0, grid.maturity(), kappa, params);
    spec.estimate_beta = estimate_beta;
    return spec;
}

struct CvAdjusted {
    std::vector<double> samples;
    double beta = 0.0;
};

/// adjusted_r = raw_r - beta (cv_r - cv_mean). Without a fixed beta the
/// regression-optimal Cov/Var of the same sample is used; zero control
/// variance gives beta = 0.
inline CvAdjusted cv_adjust(std::span<const double> raw, std::span<const double> cv, double cv_mean,
                            std::optional<double> beta = std::nullopt) {
    if (raw.size() != cv.size()) throw std::invalid_argument("cv_adjust: sample size mismatch");
    CvAdjusted out;
    if (beta) {
        out.beta = *beta;
    } else if (raw.size() >= 2) {
        const auto mr = moments(raw);
        const auto mc = moments(cv);
        std::vector<double> cross(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) cross[i] = (raw[i] - mr.mean) * (cv[i] - mc.mean);
        const double cov = pairwise_sum(cross) / static_cast<double>(raw.size() - 1);
        out.beta = mc.variance > 0.0 ? cov / mc.variance : 0.0;
    }
    out.samples.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) out.samples[i] = raw[i] - out.beta * (cv[i] - cv_mean);
    return out;
}

} // namespace mlb
