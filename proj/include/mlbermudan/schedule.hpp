#pragma once

// Closed-form (k, n) and (L, k_l, n_l) schedules and the complexity
// exponents they imply.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlbermudan/estimator.hpp"

namespace mlb {

/// ceil that snaps values within relative 1e-12 of an integer onto it, so
/// that (0.24 / 2.4)^{-1} yields 10 rather than 11.
inline double snapped_ceil(double x) {
    const double r = std::round(x);
    return std::abs(x - r) <= 1e-12 * std::max(1.0, std::abs(x)) ? r : std::ceil(x);
}

inline std::size_t ceil_count(double x) {
    if (!std::isfinite(x)) throw std::overflow_error("ceil_count: non-finite schedule value");
    const double c = snapped_ceil(x);
    return c < 1.0 ? 1 : static_cast<std::size_t>(c);
}

/// Same rounding, but allows 0 (for the level count).
inline std::size_t ceil_level(double x) {
    if (!std::isfinite(x)) throw std::overflow_error("ceil_level: non-finite schedule value");
    const double c = snapped_ceil(x);
    return c < 0.0 ? 0 : static_cast<std::size_t>(c);
}

/// k = ceil((eps / c_k)^{-2/(mu(1+alpha))}), n = ceil((eps / c_n)^{-2}).
struct SingleLevelConstants {
    double c_k = 1.0;
    double c_n = 1.0;

    static constexpr SingleLevelConstants mesh() { return {2.4, 2.4}; }
    static constexpr SingleLevelConstants local_constant() { return {1.2, 1.2}; }
};

struct SingleLevelSchedule {
    double epsilon = 0.0;
    std::size_t k = 0;
    std::size_t n = 0;
    double k_real = 0.0;
    double n_real = 0.0;
};

inline SingleLevelSchedule single_level_schedule(double epsilon, const EstimatorProfile& profile,
                                                 const SingleLevelConstants& c = {}) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("single_level_schedule: epsilon must be > 0");
    profile.validate();
    const double m = profile.mu * (1.0 + profile.alpha);
    SingleLevelSchedule s;
    s.epsilon = epsilon;
    s.k_real = std::pow(epsilon / c.c_k, -2.0 / m);
    s.n_real = std::pow(epsilon / c.c_n, -2.0);
    s.k = ceil_count(s.k_real);
    s.n = ceil_count(s.n_real);
    return s;
}

/// L = ceil((2/(mu(1+alpha))) log_theta((c_L/eps) k0^{k0_power})),
/// n_l = c_n (c_eps/eps)^2 (sum_{i=1}^L k_i^{(kappa2 - mu alpha/2)/2}) k_l^{(-kappa2 - mu alpha/2)/2}.
/// k0_power defaults (NaN) to -mu(1+alpha)/2.
struct MultilevelConstants {
    std::size_t k0 = 1;
    double theta = 2.0;
    double c_L = 1.0;
    double k0_power = std::nan("");
    double c_eps = 1.0;
    double c_n = 1.0;

    static MultilevelConstants mesh() { return {5, 2.0, 8.0, 1.0, 8.0, 1.0}; }
    static MultilevelConstants local_constant() { return {100, 2.0, 3.0, -1.0 / 6.0, 3.0, 10.0}; }
};

struct LevelSchedule {
    double epsilon = 0.0;
    std::size_t L = 0;
    double theta = 2.0;
    std::vector<std::size_t> k;
    std::vector<std::size_t> n;
    double L_real = 0.0;
    std::vector<double> n_real;
    EstimatorProfile profile;
};

inline LevelSchedule multilevel_schedule(double epsilon, const EstimatorProfile& profile,
                                         const MultilevelConstants& c) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("multilevel_schedule: epsilon must be > 0");
    if (!(c.theta > 1.0)) throw std::invalid_argument("multilevel_schedule: theta must be > 1");
    if (c.k0 < 1) throw std::invalid_argument("multilevel_schedule: k0 must be >= 1");
    profile.validate();
    const double m = profile.mu * (1.0 + profile.alpha);
    const double p = std::isnan(c.k0_power) ? -m / 2.0 : c.k0_power;

    LevelSchedule s;
    s.epsilon = epsilon;
    s.theta = c.theta;
    s.profile = profile;
    s.L_real = (2.0 / m) * std::log((c.c_L / epsilon) * std::pow(static_cast<double>(c.k0), p)) / std::log(c.theta);
    s.L = ceil_level(s.L_real);

    for (std::size_t l = 0; l <= s.L; ++l)
        s.k.push_back(ceil_count(static_cast<double>(c.k0) * std::pow(c.theta, static_cast<double>(l))));

    const double pre = c.c_n * (c.c_eps / epsilon) * (c.c_eps / epsilon);
    const double up = (profile.kappa2 - profile.mu * profile.alpha / 2.0) / 2.0;
    const double down = (-profile.kappa2 - profile.mu * profile.alpha / 2.0) / 2.0;
    double sum = 0.0;
    for (std::size_t i = 1; i <= s.L; ++i) sum += std::pow(static_cast<double>(s.k[i]), up);
    for (std::size_t l = 0; l <= s.L; ++l) {
        const double nl = s.L == 0 ? pre : pre * sum * std::pow(static_cast<double>(s.k[l]), down);
        s.n_real.push_back(nl);
        s.n.push_back(ceil_count(nl));
    }
    return s;
}

/// sum_l (k_l^{1+kappa1} + n_l k_l^{kappa2}).
inline double predicted_cost(std::span<const std::size_t> k, std::span<const std::size_t> n,
                             const EstimatorProfile& profile) {
    if (k.size() != n.size()) throw std::invalid_argument("predicted_cost: k and n differ in length");
    double c = 0.0;
    for (std::size_t l = 0; l < k.size(); ++l) {
        const double kk = static_cast<double>(k[l]);
        c += std::pow(kk, 1.0 + profile.kappa1) + static_cast<double>(n[l]) * std::pow(kk, profile.kappa2);
    }
    return c;
}

inline double predicted_cost(const LevelSchedule& s) { return predicted_cost(s.k, s.n, s.profile); }

inline double predicted_cost(const SingleLevelSchedule& s, const EstimatorProfile& profile) {
    const std::size_t k[] = {s.k};
    const std::size_t n[] = {s.n};
    return predicted_cost(k, n, profile);
}

/// Cost ~ eps^{-exponent} for the single-level schedule.
inline double single_level_exponent(const EstimatorProfile& p) {
    const double m = p.mu * (1.0 + p.alpha);
    return 2.0 * std::max((p.kappa1 + 1.0) / m, 1.0 + p.kappa2 / m);
}

enum class ComplexityCase { kappa_below, kappa_equal_training, kappa_equal_log, kappa_above };

struct ComplexityResult {
    ComplexityCase kind = ComplexityCase::kappa_above;
    std::string label;
    double exponent = 0.0;        // multilevel cost ~ eps^{-exponent}, times log^2 in the log case
    double single_exponent = 0.0; // single-level cost exponent
    double gain = 0.0;            // single_exponent - exponent
    bool log_squared = false;
    bool no_superiority = false;  // mu(1+alpha) <= 1
};

inline ComplexityResult complexity_case(const EstimatorProfile& p) {
    p.validate();
    const double m = p.mu * (1.0 + p.alpha);
    const double train = (p.kappa1 + 1.0) / m;
    const double lhs = 2.0 * p.kappa2;
    const double rhs = p.mu * p.alpha;
    const double tol = 1e-12 * std::max(1.0, std::abs(rhs));

    ComplexityResult r;
    if (lhs < rhs - tol) {
        r.kind = ComplexityCase::kappa_below;
        r.label = "2*kappa2<mu*alpha";
        r.exponent = 2.0 * std::max(train, 1.0);
    } else if (std::abs(lhs - rhs) <= tol && train > 1.0) {
        r.kind = ComplexityCase::kappa_equal_training;
        r.label = "2*kappa2=mu*alpha,training-dominated";
        r.exponent = 2.0 * train;
    } else if (std::abs(lhs - rhs) <= tol) {
        r.kind = ComplexityCase::kappa_equal_log;
        r.label = "2*kappa2=mu*alpha,log-squared";
        r.exponent = 2.0;
        r.log_squared = true;
    } else {
        r.kind = ComplexityCase::kappa_above;
        r.label = "2*kappa2>mu*alpha";
        r.exponent = 2.0 * std::max(train, 1.0 + (p.kappa2 - p.mu * p.alpha / 2.0) / m);
    }
    r.single_exponent = single_level_exponent(p);
    r.gain = r.single_exponent - r.exponent;
    r.no_superiority = m <= 1.0;
    return r;
}

inline double multilevel_exponent(const EstimatorProfile& p) { return complexity_case(p).exponent; }

/// level,k,n,n_real,predicted_cost (cumulative last row) as CSV.
inline void write_schedule_csv(std::ostream& out, const LevelSchedule& s) {
    const auto cc = complexity_case(s.profile);
    const auto old = out.precision(17);
    out << "# epsilon=" << s.epsilon << " L=" << s.L << " L_real=" << s.L_real << " theta=" << s.theta
        << " case=" << cc.label << " exponent=" << cc.exponent << '\n';
    out << "level,k,n,n_real,level_cost\n";
    for (std::size_t l = 0; l <= s.L; ++l) {
        const double kk = static_cast<double>(s.k[l]);
        const double cost = std::pow(kk, 1.0 + s.profile.kappa1) + static_cast<double>(s.n[l]) * std::pow(kk, s.profile.kappa2);
        out << l << ',' << s.k[l] << ',' << s.n[l] << ',' << s.n_real[l] << ',' << cost << '\n';
    }
    out << "total,,,," << predicted_cost(s) << '\n';
    out.precision(old);
}

} // namespace mlb
