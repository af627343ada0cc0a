#pragma once

// Finite-state Bermudan problems with exact dynamic-programming solutions,
// used as ground truth for the estimators and pricers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlbermudan/estimator.hpp"
#include "mlbermudan/model.hpp"
#include "mlbermudan/rng.hpp"

namespace mlb {

/// Transition probabilities from one state to the contiguous target range
/// [first, first + prob.size()).
struct BandedRow {
    std::size_t first = 0;
    std::vector<double> prob;
    std::vector<double> log_prob;
    std::vector<double> cumulative;

    BandedRow() = default;
    BandedRow(std::size_t first_target, std::vector<double> p) : first(first_target), prob(std::move(p)) {
        log_prob.resize(prob.size());
        cumulative.resize(prob.size());
        double c = 0.0;
        for (std::size_t i = 0; i < prob.size(); ++i) {
            log_prob[i] = prob[i] > 0.0 ? std::log(prob[i]) : -std::numeric_limits<double>::infinity();
            c += prob[i];
            cumulative[i] = c;
        }
    }

    double at(std::size_t target) const {
        if (target < first || target >= first + prob.size()) return 0.0;
        return prob[target - first];
    }
};

/// A Markov chain with finitely many states per date. State values are
/// positive reals, strictly increasing in the state index at each date.
struct FiniteChain {
    TimeGrid grid = TimeGrid({0.0});
    std::vector<std::vector<double>> values;          // values[j][s]
    std::vector<std::vector<BandedRow>> transitions;  // transitions[j][s]: date j -> j+1
    std::vector<std::vector<double>> payoffs;         // g_j(s), discounted

    std::size_t last() const noexcept { return values.size() - 1; }

    void validate() const {
        const std::size_t dates = values.size();
        if (dates == 0 || dates != grid.size()) throw std::invalid_argument("FiniteChain: dates do not match grid");
        if (values[0].size() != 1) throw std::invalid_argument("FiniteChain: needs a single start state");
        if (payoffs.size() != dates || transitions.size() + 1 != dates)
            throw std::invalid_argument("FiniteChain: table sizes do not match");
        for (std::size_t j = 0; j < dates; ++j) {
            if (payoffs[j].size() != values[j].size()) throw std::invalid_argument("FiniteChain: payoff table size");
            for (std::size_t s = 0; s < values[j].size(); ++s) {
                if (!(values[j][s] > 0.0)) throw std::invalid_argument("FiniteChain: state values must be > 0");
                if (s > 0 && !(values[j][s] > values[j][s - 1]))
                    throw std::invalid_argument("FiniteChain: state values must increase");
                if (!(payoffs[j][s] >= 0.0)) throw std::invalid_argument("FiniteChain: payoffs must be >= 0");
            }
        }
        for (std::size_t j = 0; j + 1 < dates; ++j) {
            if (transitions[j].size() != values[j].size())
                throw std::invalid_argument("FiniteChain: transition rows do not match states");
            for (std::size_t s = 0; s < values[j].size(); ++s) {
                const auto& row = transitions[j][s];
                if (row.first + row.prob.size() > values[j + 1].size())
                    throw std::invalid_argument("FiniteChain: transition target out of range");
                double total = 0.0;
                for (double p : row.prob) {
                    if (!(p >= 0.0)) throw std::invalid_argument("FiniteChain: negative transition probability");
                    total += p;
                }
                if (std::abs(total - 1.0) > 1e-12)
                    throw std::invalid_argument("FiniteChain: row " + std::to_string(s) + " at date " +
                                                std::to_string(j) + " is not stochastic");
            }
        }
    }

    std::size_t index_of(std::size_t j, double value) const {
        const auto& v = values.at(j);
        auto it = std::lower_bound(v.begin(), v.end(), value * (1.0 - 1e-12));
        if (it == v.end() || std::abs(*it - value) > 1e-9 * std::abs(value))
            throw std::invalid_argument("FiniteChain: value is not a state of date " + std::to_string(j));
        return static_cast<std::size_t>(it - v.begin());
    }
};

struct DpSolution {
    std::vector<std::vector<double>> value;        // V_j^*(s)
    std::vector<std::vector<double>> continuation; // C_j^*(s), zero at J
    double value0() const { return value.front().front(); }
};

/// Exact backward recursion C_j^* = E[max(g_{j+1}, C_{j+1}^*) | Z_j], V_j^* = max(g_j, C_j^*).
inline DpSolution dp_solve(const FiniteChain& chain) {
    chain.validate();
    const std::size_t last = chain.last();
    DpSolution sol;
    sol.value.resize(last + 1);
    sol.continuation.resize(last + 1);
    sol.continuation[last].assign(chain.values[last].size(), 0.0);
    sol.value[last] = chain.payoffs[last];
    for (std::size_t jj = last; jj-- > 0;) {
        const std::size_t j = jj;
        const std::size_t states = chain.values[j].size();
        sol.continuation[j].resize(states);
        sol.value[j].resize(states);
        for (std::size_t s = 0; s < states; ++s) {
            const auto& row = chain.transitions[j][s];
            double c = 0.0;
            for (std::size_t t = 0; t < row.prob.size(); ++t) c += row.prob[t] * sol.value[j + 1][row.first + t];
            sol.continuation[j][s] = c;
            sol.value[j][s] = std::max(chain.payoffs[j][s], c);
        }
    }
    return sol;
}

/// Exact value E[g_tau(Z_tau)] of the rule "stop at the first j with exercise(j, s)";
/// the last date always exercises.
inline double policy_value(const FiniteChain& chain, const std::function<bool(std::size_t, std::size_t)>& exercise) {
    const std::size_t last = chain.last();
    std::vector<double> next = chain.payoffs[last];
    for (std::size_t jj = last; jj-- > 0;) {
        const std::size_t j = jj;
        std::vector<double> cur(chain.values[j].size());
        for (std::size_t s = 0; s < cur.size(); ++s) {
            if (exercise(j, s)) {
                cur[s] = chain.payoffs[j][s];
            } else {
                const auto& row = chain.transitions[j][s];
                double c = 0.0;
                for (std::size_t t = 0; t < row.prob.size(); ++t) c += row.prob[t] * next[row.first + t];
                cur[s] = c;
            }
        }
        next = std::move(cur);
    }
    return next.front();
}

/// Brute force over every exercise set on the non-terminal states: the best
/// value among all 2^m first-entry rules. Only for tiny chains.
inline double enumerate_optimal_value(const FiniteChain& chain, std::size_t max_states = 24) {
    chain.validate();
    std::vector<std::size_t> offset(chain.last() + 1, 0);
    std::size_t m = 0;
    for (std::size_t j = 0; j < chain.last(); ++j) {
        offset[j] = m;
        m += chain.values[j].size();
    }
    if (m > max_states) throw std::invalid_argument("enumerate_optimal_value: too many states to enumerate");
    double best = -std::numeric_limits<double>::infinity();
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
        const double v = policy_value(chain, [&](std::size_t j, std::size_t s) { return (mask >> (offset[j] + s)) & 1u; });
        best = std::max(best, v);
    }
    return best;
}

/// Exact value of the stopping rule induced by a trained estimator.
template <ContinuationEstimator E>
double policy_value(const FiniteChain& chain, const E& est) {
    return policy_value(chain, [&](std::size_t j, std::size_t s) {
        const double z = chain.values[j][s];
        return chain.payoffs[j][s] >= est.continuation(j, std::span<const double>(&z, 1));
    });
}

/// MarkovChain adapter: one-dimensional states holding the state value.
class ChainModel {
public:
    explicit ChainModel(std::shared_ptr<const FiniteChain> chain) : chain_(std::move(chain)) {
        chain_->validate();
        start_ = {chain_->values[0][0]};
    }

    const FiniteChain& chain() const noexcept { return *chain_; }
    std::size_t dim() const noexcept { return 1; }
    const TimeGrid& grid() const noexcept { return chain_->grid; }
    std::span<const double> start() const noexcept { return start_; }

    template <class Rng>
    void step(std::size_t j, std::span<const double> x, std::span<double> out, Rng& rng) const {
        const auto& row = chain_->transitions[j - 1][chain_->index_of(j - 1, x[0])];
        const double u = rng.uniform() * row.cumulative.back();
        auto it = std::upper_bound(row.cumulative.begin(), row.cumulative.end(), u);
        std::size_t t = static_cast<std::size_t>(it - row.cumulative.begin());
        if (t >= row.prob.size()) t = row.prob.size() - 1;
        while (row.prob[t] == 0.0 && t > 0) --t;
        out[0] = chain_->values[j][row.first + t];
    }

    std::size_t prepared_dim() const noexcept { return 1; }
    void prepare(std::size_t j, std::span<const double> x, std::span<double> out) const {
        out[0] = static_cast<double>(chain_->index_of(j, x[0]));
    }

    /// Log transition probability, i.e. the density against counting measure.
    double log_density(std::size_t j, std::span<const double> from, std::span<const double> to) const {
        const auto& row = chain_->transitions[j - 1][static_cast<std::size_t>(from[0])];
        const auto target = static_cast<std::size_t>(to[0]);
        if (target < row.first || target >= row.first + row.prob.size())
            return -std::numeric_limits<double>::infinity();
        return row.log_prob[target - row.first];
    }

private:
    std::shared_ptr<const FiniteChain> chain_;
    std::vector<double> start_;
};

/// g_j read from the chain's payoff table.
class ChainPayoff {
public:
    explicit ChainPayoff(std::shared_ptr<const FiniteChain> chain) : chain_(std::move(chain)) {}
    double operator()(std::size_t j, std::span<const double> z) const {
        if (j > chain_->last()) throw std::out_of_range("ChainPayoff: date index out of range");
        return chain_->payoffs[j][chain_->index_of(j, z[0])];
    }

private:
    std::shared_ptr<const FiniteChain> chain_;
};

/// The exact continuation values C_j^* as an estimator.
class ExactEstimator {
public:
    ExactEstimator(std::shared_ptr<const FiniteChain> chain, DpSolution solution)
        : chain_(std::move(chain)), solution_(std::move(solution)) {}

    double continuation(std::size_t j, std::span<const double> z) const {
        if (j >= chain_->last()) return 0.0;
        return solution_.continuation[j][chain_->index_of(j, z[0])];
    }
    std::size_t last_date() const noexcept { return chain_->last(); }
    std::size_t training_size() const noexcept { return 0; }
    double eval_units() const noexcept { return 0.0; }
    double train_units() const noexcept { return 0.0; }
    std::uint64_t train_ops() const noexcept { return 0; }
    std::uint64_t eval_ops() const noexcept { return 0; }
    const DpSolution& solution() const noexcept { return solution_; }

private:
    std::shared_ptr<const FiniteChain> chain_;
    DpSolution solution_;
};

struct LatticeSpec {
    double spot = 100.0;
    double strike = 100.0;
    double r = 0.05;
    double delta = 0.1;
    double sigma = 0.2;
    double maturity = 3.0;
    std::size_t exercise_dates = 3;
    std::size_t steps_per_period = 600;

    /// Strike 90, otherwise the defaults; used for bias-rate studies.
    static LatticeSpec in_the_money() {
        LatticeSpec s;
        s.strike = 90.0;
        return s;
    }
};

/// Bermudan call on a recombining CRR binomial tree, observed only on the
/// exercise grid: between two exercise dates the node index moves up by a
/// Binomial(m, p) amount.
inline FiniteChain binomial_fixture(const LatticeSpec& spec = {}) {
    const std::size_t m = spec.steps_per_period;
    const std::size_t last = spec.exercise_dates;
    if (m < 1 || last < 1) throw std::invalid_argument("binomial_fixture: need >= 1 step and >= 1 exercise date");
    FiniteChain chain;
    chain.grid = TimeGrid::uniform(spec.maturity, last);
    const double h = spec.maturity / static_cast<double>(last * m);
    const double log_up = spec.sigma * std::sqrt(h);
    const double up = std::exp(log_up);
    const double down = 1.0 / up;
    const double p = (std::exp((spec.r - spec.delta) * h) - down) / (up - down);
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("binomial_fixture: risk-neutral probability outside (0,1)");

    std::vector<double> pmf(m + 1);
    for (std::size_t u = 0; u <= m; ++u) {
        const double mu = static_cast<double>(m), uu = static_cast<double>(u);
        pmf[u] = std::exp(std::lgamma(mu + 1) - std::lgamma(uu + 1) - std::lgamma(mu - uu + 1) + uu * std::log(p) +
                          (mu - uu) * std::log1p(-p));
    }
    double total = 0.0;
    for (double v : pmf) total += v;
    for (double& v : pmf) v /= total;

    chain.values.resize(last + 1);
    chain.payoffs.resize(last + 1);
    chain.transitions.resize(last);
    for (std::size_t j = 0; j <= last; ++j) {
        const std::size_t nodes = j * m + 1;
        const double disc = std::exp(-spec.r * chain.grid[j]);
        chain.values[j].resize(nodes);
        chain.payoffs[j].resize(nodes);
        for (std::size_t i = 0; i < nodes; ++i) {
            const double offset = 2.0 * static_cast<double>(i) - static_cast<double>(j * m);
            chain.values[j][i] = spec.spot * std::exp(offset * log_up);
            chain.payoffs[j][i] = disc * std::max(chain.values[j][i] - spec.strike, 0.0);
        }
        if (j < last) {
            chain.transitions[j].reserve(nodes);
            for (std::size_t i = 0; i < nodes; ++i) chain.transitions[j].emplace_back(i, pmf);
        }
    }
    chain.validate();
    return chain;
}

/// A chain with one start state and `states` states per later date, random
/// transition rows and random payoffs in [0, payoff_scale).
inline FiniteChain random_chain_fixture(std::uint64_t seed = 7, std::size_t states = 5, std::size_t last = 3,
                                        double payoff_scale = 10.0) {
    if (states < 1 || last < 1) throw std::invalid_argument("random_chain_fixture: need >= 1 state and date");
    CounterRng rng(hash_combine(seed, 0x5eedULL));
    FiniteChain chain;
    chain.grid = TimeGrid::uniform(static_cast<double>(last), last);
    chain.values.resize(last + 1);
    chain.payoffs.resize(last + 1);
    chain.transitions.resize(last);
    for (std::size_t j = 0; j <= last; ++j) {
        const std::size_t n = (j == 0) ? 1 : states;
        for (std::size_t s = 0; s < n; ++s) {
            chain.values[j].push_back(static_cast<double>(s + 1));
            chain.payoffs[j].push_back(payoff_scale * rng.uniform());
        }
    }
    for (std::size_t j = 0; j < last; ++j) {
        for (std::size_t s = 0; s < chain.values[j].size(); ++s) {
            std::vector<double> w(states);
            double total = 0.0;
            for (double& v : w) {
                v = 0.05 + rng.uniform();
                total += v;
            }
            for (double& v : w) v /= total;
            chain.transitions[j].emplace_back(0, std::move(w));
        }
    }
    chain.validate();
    return chain;
}

} // namespace mlb
