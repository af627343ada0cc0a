#pragma once

// Stopping rule tau_k = min{j : g_j(Z_j) >= C_{k,j}(Z_j)} and the low-biased
// estimator V_0^{n,k} = (1/n) sum_r g_{tau^(r)}(Z^(r)_{tau^(r)}) on testing
// paths that are independent of the training set.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mlbermudan/control_variates.hpp"
#include "mlbermudan/cost.hpp"
#include "mlbermudan/estimator.hpp"
#include "mlbermudan/model.hpp"
#include "mlbermudan/parallel.hpp"
#include "mlbermudan/payoff.hpp"
#include "mlbermudan/rng.hpp"
#include "mlbermudan/stats.hpp"

namespace mlb {

/// A trajectory held in a PathSet.
class StoredPath {
public:
    StoredPath(const PathSet& set, std::size_t index) : set_(&set), index_(index) {}
    std::size_t last() const noexcept { return set_->dates() - 1; }
    std::span<const double> state(std::size_t j) { return set_->state(index_, j); }

private:
    const PathSet* set_;
    std::size_t index_;
};

/// A trajectory generated date by date from its own stream; draws exactly
/// what simulate_paths would draw for the same (key, index).
template <MarkovChain M>
class LazyPath {
public:
    LazyPath(const M& model, const StreamKey& key, std::size_t index)
        : model_(&model), rng_(path_stream(key, index)), dim_(model.dim()),
          states_((model.grid().last() + 1) * model.dim()) {
        const auto x0 = model.start();
        std::copy(x0.begin(), x0.end(), states_.begin());
    }

    std::size_t last() const noexcept { return model_->grid().last(); }

    std::span<const double> state(std::size_t j) {
        while (generated_ < j) {
            ++generated_;
            model_->step(generated_, slot(generated_ - 1), std::span<double>(states_).subspan(generated_ * dim_, dim_),
                         rng_);
        }
        return slot(j);
    }

private:
    std::span<const double> slot(std::size_t j) const {
        return std::span<const double>(states_).subspan(j * dim_, dim_);
    }

    const M* model_;
    CounterRng rng_;
    std::size_t dim_;
    std::vector<double> states_;
    std::size_t generated_ = 0;
};

/// Ties g_j = C_{k,j} count as exercise.
template <ContinuationEstimator E, Payoff P, class Path>
std::size_t stopping_time(const E& est, const P& payoff, Path& path) {
    const std::size_t last = path.last();
    for (std::size_t j = 0; j < last; ++j) {
        const auto z = path.state(j);
        if (payoff(j, z) >= est.continuation(j, z)) return j;
    }
    return last;
}

struct PathOutcome {
    std::size_t tau = 0;
    double payoff = 0.0;
    double control = 0.0;
};

struct PriceEstimate {
    double value = 0.0;
    double std_error = 0.0;
    double variance = 0.0; // unbiased sample variance of the (adjusted) per-path values
    std::size_t n = 0;
    std::size_t k = 0;
    double beta = 0.0;
    CostTally cost;
};

struct PricingOptions {
    std::size_t threads = 1;
    ControlSpec control;
};

namespace detail {

template <ContinuationEstimator E, Payoff P, class MakePath>
std::vector<PathOutcome> run_paths(const E& est, const P& payoff, std::size_t n, MakePath make_path,
                                   const PricingOptions& options) {
    std::vector<PathOutcome> out(n);
    parallel_for(
        n,
        [&](std::size_t r) {
            auto path = make_path(r);
            PathOutcome o;
            o.tau = stopping_time(est, payoff, path);
            const auto z = path.state(o.tau);
            o.payoff = payoff(o.tau, z);
            if (options.control) o.control = options.control.value(o.tau, z);
            out[r] = o;
        },
        options.threads);
    return out;
}

inline std::vector<double> payoffs_of(const std::vector<PathOutcome>& outcomes) {
    std::vector<double> v(outcomes.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = outcomes[i].payoff;
    return v;
}

inline std::vector<double> controls_of(const std::vector<PathOutcome>& outcomes) {
    std::vector<double> v(outcomes.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = outcomes[i].control;
    return v;
}

template <ContinuationEstimator E>
PriceEstimate summarize(const E& est, const std::vector<PathOutcome>& outcomes, const PricingOptions& options) {
    PriceEstimate p;
    p.n = outcomes.size();
    p.k = est.training_size();
    std::vector<double> samples = payoffs_of(outcomes);
    if (options.control) {
        const auto adj = cv_adjust(samples, controls_of(outcomes), options.control.mean,
                                   options.control.estimate_beta ? std::nullopt : std::optional<double>(1.0));
        samples = adj.samples;
        p.beta = adj.beta;
    }
    const auto m = moments(samples);
    p.value = m.mean;
    p.variance = m.variance;
    p.std_error = std::sqrt(m.variance / static_cast<double>(m.n));
    return p;
}

inline std::uint64_t evaluation_calls(const std::vector<PathOutcome>& outcomes, std::size_t last) {
    std::uint64_t calls = 0;
    for (const auto& o : outcomes) calls += (o.tau < last) ? o.tau + 1 : last;
    return calls;
}

} // namespace detail

/// Per-path stopping dates and payoffs on a stored testing set.
template <ContinuationEstimator E, Payoff P>
std::vector<PathOutcome> evaluate_paths(const E& est, const PathSet& testing, const P& payoff,
                                        const PricingOptions& options = {}) {
    return detail::run_paths(est, payoff, testing.count(),
                             [&](std::size_t r) { return StoredPath(testing, r); }, options);
}

template <ContinuationEstimator E, Payoff P>
PriceEstimate price_single_level(const E& est, const PathSet& testing, const P& payoff,
                                 const PricingOptions& options = {}) {
    if (testing.count() == 0) throw std::invalid_argument("price_single_level: empty testing set");
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t ops0 = est.eval_ops();
    const auto outcomes = evaluate_paths(est, testing, payoff, options);
    PriceEstimate p = detail::summarize(est, outcomes, options);
    p.cost.eval_calls = detail::evaluation_calls(outcomes, testing.dates() - 1);
    p.cost.eval_units = static_cast<double>(p.cost.eval_calls) * est.eval_units();
    p.cost.eval_ops = est.eval_ops() - ops0;
    p.cost.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return p;
}

/// Same estimator, testing paths generated on the fly from `key`; path r
/// matches simulate_paths(model, n, key) row r.
template <ContinuationEstimator E, MarkovChain M, Payoff P>
PriceEstimate price_single_level(const E& est, const M& model, const P& payoff, std::size_t n, const StreamKey& key,
                                 const PricingOptions& options = {}) {
    if (n == 0) throw std::invalid_argument("price_single_level: empty testing set");
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t ops0 = est.eval_ops();
    const auto outcomes =
        detail::run_paths(est, payoff, n, [&](std::size_t r) { return LazyPath<M>(model, key, r); }, options);
    PriceEstimate p = detail::summarize(est, outcomes, options);
    p.cost.eval_calls = detail::evaluation_calls(outcomes, model.grid().last());
    p.cost.eval_units = static_cast<double>(p.cost.eval_calls) * est.eval_units();
    p.cost.eval_ops = est.eval_ops() - ops0;
    p.cost.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return p;
}

struct BiasPoint {
    std::size_t k = 0;
    double mean = 0.0;
    double ci_half_width = 0.0; // 1.96 standard errors over repetitions
    double bias = 0.0;          // reference - mean
};

struct BiasCurve {
    std::vector<BiasPoint> points;
    LineFit fit; // log|bias| against log k
};

/// Empirical bias per training size. `estimate(k, rep)` returns one price
/// estimate built from an independent training set.
inline BiasCurve estimate_bias_curve(std::span<const std::size_t> ks, std::size_t repetitions, double reference,
                                     const std::function<double(std::size_t, std::size_t)>& estimate) {
    if (repetitions < 1) throw std::invalid_argument("estimate_bias_curve: need at least one repetition");
    BiasCurve curve;
    std::vector<double> xs, ys;
    for (std::size_t k : ks) {
        std::vector<double> vals(repetitions);
        for (std::size_t r = 0; r < repetitions; ++r) vals[r] = estimate(k, r);
        const auto m = moments(vals);
        BiasPoint pt;
        pt.k = k;
        pt.mean = m.mean;
        pt.ci_half_width = 1.96 * std::sqrt(m.variance / static_cast<double>(repetitions));
        pt.bias = reference - m.mean;
        curve.points.push_back(pt);
        if (std::abs(pt.bias) > 0.0) {
            xs.push_back(static_cast<double>(k));
            ys.push_back(std::abs(pt.bias));
        }
    }
    if (xs.size() >= 2) curve.fit = fit_loglog(xs, ys);
    return curve;
}

} // namespace mlb
