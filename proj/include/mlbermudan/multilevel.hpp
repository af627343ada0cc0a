#pragma once

// Multilevel estimator over approximation quality:
//   V^{n,k} = (1/n_0) sum_r g_{tau_{k_0}} + sum_{l>=1} (1/n_l) sum_r [g_{tau_{k_l}} - g_{tau_{k_{l-1}}}],
// where for l >= 1 both C_{k_l} and C_{k_{l-1}} are trained on one set of
// k_l trajectories (the coarse one on its first k_{l-1} rows) and both
// stopping rules are applied to the same testing path.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "mlbermudan/control_variates.hpp"
#include "mlbermudan/cost.hpp"
#include "mlbermudan/estimator.hpp"
#include "mlbermudan/model.hpp"
#include "mlbermudan/parallel.hpp"
#include "mlbermudan/payoff.hpp"
#include "mlbermudan/pricer.hpp"
#include "mlbermudan/rng.hpp"
#include "mlbermudan/stats.hpp"

namespace mlb {

template <class E>
struct LevelPair {
    E fine;
    E coarse;
    PathSet paths; // the fine set; coarse was trained on paths.prefix(coarse k)
};

template <class E>
struct CoupledEstimators {
    std::vector<std::size_t> ks;
    std::vector<E> base; // level 0 estimator, held in a vector so E need not be default-constructible
    std::vector<LevelPair<E>> pairs;

    const E& level0() const { return base.front(); }
    std::size_t levels() const noexcept { return ks.size(); }
};

struct CouplingOptions {
    std::size_t threads = 1;
    /// Draw every level's training paths from one namespace so that level
    /// l's set is a prefix of level l+1's. Diagnostic mode for the
    /// telescoping identity.
    bool shared_training = false;
};

/// `trainer(const PathSet&)` returns a trained estimator. Level 0 trains on
/// its own k_0 paths; level l >= 1 simulates k_l paths once and trains the
/// fine estimator on all of them and the coarse one on the first k_{l-1}.
/// Equal consecutive k are accepted (degenerate coupling, zero corrections).
template <MarkovChain M, class Trainer>
auto train_coupled(std::span<const std::size_t> ks, const M& model, Trainer&& trainer, const StreamKey& key,
                   const CouplingOptions& options = {}) {
    using E = std::decay_t<decltype(trainer(std::declval<const PathSet&>()))>;
    if (ks.empty()) throw std::invalid_argument("train_coupled: need at least one level");
    for (std::size_t l = 1; l < ks.size(); ++l)
        if (ks[l] < ks[l - 1]) throw std::invalid_argument("train_coupled: k sequence must be nondecreasing");
    if (ks[0] < 1) throw std::invalid_argument("train_coupled: k_0 must be >= 1");

    const StreamKey train_key = key.with_purpose(Purpose::training);
    auto level_key = [&](std::size_t l) { return options.shared_training ? train_key : train_key.with_level(l); };

    CoupledEstimators<E> out;
    out.ks.assign(ks.begin(), ks.end());
    out.base.push_back(trainer(simulate_paths(model, ks[0], level_key(0), options.threads)));
    for (std::size_t l = 1; l < ks.size(); ++l) {
        PathSet paths = simulate_paths(model, ks[l], level_key(l), options.threads);
        E fine = trainer(paths);
        E coarse = trainer(paths.prefix(ks[l - 1]));
        out.pairs.push_back(LevelPair<E>{std::move(fine), std::move(coarse), std::move(paths)});
    }
    return out;
}

struct LevelStats {
    std::size_t level = 0;
    std::size_t k = 0;
    std::size_t n = 0;
    double mean = 0.0;     // mean of g_{tau_{k_0}} at level 0, of the correction otherwise
    double variance = 0.0; // unbiased sample variance of the same quantity
    double beta = 0.0;
    std::size_t disagreements = 0; // paths with tau_fine != tau_coarse
    CostTally cost;
};

struct MultilevelEstimate {
    double value = 0.0;
    double variance = 0.0; // sum_l variance_l / n_l
    double std_error = 0.0;
    std::vector<LevelStats> levels;
    CostTally cost;
};

struct MultilevelOptions {
    std::size_t threads = 1;
    ControlSpec control; // applied to each level; corrections use the control difference with mean 0
    /// Evaluate every level on the same testing paths (telescoping diagnostic).
    bool shared_testing = false;
};

struct CorrectionOutcome {
    std::size_t tau_fine = 0;
    std::size_t tau_coarse = 0;
    double fine = 0.0;
    double coarse = 0.0;
    double control = 0.0;
};

/// Per-path stopping decisions of a level pair on its testing paths.
template <ContinuationEstimator E, MarkovChain M, Payoff P>
std::vector<CorrectionOutcome> evaluate_correction(const LevelPair<E>& pair, const M& model, const P& payoff,
                                                   std::size_t n, const StreamKey& key,
                                                   const MultilevelOptions& options = {}) {
    std::vector<CorrectionOutcome> out(n);
    parallel_for(
        n,
        [&](std::size_t r) {
            LazyPath<M> path(model, key, r);
            CorrectionOutcome o;
            o.tau_fine = stopping_time(pair.fine, payoff, path);
            o.tau_coarse = stopping_time(pair.coarse, payoff, path);
            const auto zf = path.state(o.tau_fine);
            o.fine = payoff(o.tau_fine, zf);
            double cf = 0.0;
            if (options.control) cf = options.control.value(o.tau_fine, zf);
            const auto zc = path.state(o.tau_coarse);
            o.coarse = payoff(o.tau_coarse, zc);
            if (options.control) o.control = cf - options.control.value(o.tau_coarse, zc);
            out[r] = o;
        },
        options.threads);
    return out;
}

/// `ns` holds n_0..n_L. Level l's testing paths come from
/// key.with_purpose(testing).with_level(l), independent across levels.
template <ContinuationEstimator E, MarkovChain M, Payoff P>
MultilevelEstimate price_multilevel(const CoupledEstimators<E>& est, std::span<const std::size_t> ns, const M& model,
                                    const P& payoff, const StreamKey& key, const MultilevelOptions& options = {}) {
    if (ns.size() != est.levels()) throw std::invalid_argument("price_multilevel: need one n per level");
    for (std::size_t n : ns)
        if (n == 0) throw std::invalid_argument("price_multilevel: empty level");
    const StreamKey test_key = key.with_purpose(Purpose::testing);
    auto level_key = [&](std::size_t l) { return options.shared_testing ? test_key : test_key.with_level(l); };
    const std::size_t last = model.grid().last();

    MultilevelEstimate result;
    {
        PricingOptions po{options.threads, options.control};
        const PriceEstimate p0 = price_single_level(est.level0(), model, payoff, ns[0], level_key(0), po);
        LevelStats s;
        s.level = 0;
        s.k = est.ks[0];
        s.n = ns[0];
        s.mean = p0.value;
        s.variance = p0.variance;
        s.beta = p0.beta;
        s.cost = p0.cost;
        s.cost.train_units = est.level0().train_units();
        s.cost.train_ops = est.level0().train_ops();
        s.cost.train_calls = 1;
        result.levels.push_back(s);
    }
    for (std::size_t l = 1; l < est.levels(); ++l) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto& pair = est.pairs[l - 1];
        const std::uint64_t ops0 = pair.fine.eval_ops() + pair.coarse.eval_ops();
        const auto outcomes = evaluate_correction(pair, model, payoff, ns[l], level_key(l), options);
        std::vector<double> raw(outcomes.size()), cv(outcomes.size());
        LevelStats s;
        s.level = l;
        s.k = est.ks[l];
        s.n = ns[l];
        for (std::size_t r = 0; r < outcomes.size(); ++r) {
            raw[r] = outcomes[r].fine - outcomes[r].coarse;
            cv[r] = outcomes[r].control;
            if (outcomes[r].tau_fine != outcomes[r].tau_coarse) ++s.disagreements;
        }
        if (options.control) {
            const auto adj = cv_adjust(raw, cv, 0.0,
                                       options.control.estimate_beta ? std::nullopt : std::optional<double>(1.0));
            raw = adj.samples;
            s.beta = adj.beta;
        }
        const auto m = moments(raw);
        s.mean = m.mean;
        s.variance = m.variance;

        std::uint64_t calls_fine = 0, calls_coarse = 0;
        for (const auto& o : outcomes) {
            calls_fine += o.tau_fine < last ? o.tau_fine + 1 : last;
            calls_coarse += o.tau_coarse < last ? o.tau_coarse + 1 : last;
        }
        s.cost.eval_calls = calls_fine + calls_coarse;
        s.cost.eval_units = static_cast<double>(calls_fine) * pair.fine.eval_units() +
                            static_cast<double>(calls_coarse) * pair.coarse.eval_units();
        s.cost.eval_ops = pair.fine.eval_ops() + pair.coarse.eval_ops() - ops0;
        s.cost.train_units = pair.fine.train_units() + pair.coarse.train_units();
        s.cost.train_ops = pair.fine.train_ops() + pair.coarse.train_ops();
        s.cost.train_calls = 2;
        s.cost.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.levels.push_back(s);
    }

    std::vector<double> means;
    for (const auto& s : result.levels) {
        means.push_back(s.mean);
        result.variance += s.variance / static_cast<double>(s.n);
        result.cost += s.cost;
    }
    double value = 0.0;
    for (double m : means) value += m;
    result.value = value;
    result.std_error = std::sqrt(result.variance);
    return result;
}

struct LevelRow {
    std::size_t level = 0;
    std::size_t k = 0;
    std::size_t n = 0;
    double mean_correction = 0.0;
    double var_correction = 0.0;
    double cost = 0.0;
};

/// Per-level table (l, k_l, n_l, mean, variance, cost units).
inline std::vector<LevelRow> level_diagnostics(const MultilevelEstimate& estimate) {
    std::vector<LevelRow> rows;
    rows.reserve(estimate.levels.size());
    for (const auto& s : estimate.levels)
        rows.push_back({s.level, s.k, s.n, s.mean, s.variance, s.cost.total_units()});
    return rows;
}

inline void write_level_csv(std::ostream& out, const std::vector<LevelRow>& rows) {
    const auto old = out.precision(17);
    out << "level,k,n,mean_correction,var_correction,cost_units\n";
    for (const auto& r : rows)
        out << r.level << ',' << r.k << ',' << r.n << ',' << r.mean_correction << ',' << r.var_correction << ','
            << r.cost << '\n';
    out.precision(old);
}

} // namespace mlb
