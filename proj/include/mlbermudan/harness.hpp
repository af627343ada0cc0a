#pragma once

// Experiment orchestration: repeated train+test runs per accuracy target,
// MSE against a stored reference, measured vs predicted cost.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlbermudan/config.hpp"
#include "mlbermudan/control_variates.hpp"
#include "mlbermudan/cost.hpp"
#include "mlbermudan/estimator.hpp"
#include "mlbermudan/global_regression.hpp"
#include "mlbermudan/local_regression.hpp"
#include "mlbermudan/mesh.hpp"
#include "mlbermudan/model.hpp"
#include "mlbermudan/multilevel.hpp"
#include "mlbermudan/parallel.hpp"
#include "mlbermudan/payoff.hpp"
#include "mlbermudan/pricer.hpp"
#include "mlbermudan/rng.hpp"
#include "mlbermudan/schedule.hpp"
#include "mlbermudan/stats.hpp"

namespace mlb {

inline constexpr const char* csv_schema = "mlbermudan-csv v1";

enum class Method { mesh, local, global };
enum class Mode { single, ml };
/// outer: European control at the stopping date with beta = 1;
/// outer-beta: same with estimated beta; inner: mesh inner control plus outer-beta.
enum class CvMode { off, outer, outer_beta, inner };

inline Method parse_method(const std::string& s) {
    if (s == "mesh") return Method::mesh;
    if (s == "local") return Method::local;
    if (s == "global") return Method::global;
    throw ConfigError("unknown method '" + s + "' (expected mesh, local or global)");
}
inline Mode parse_mode(const std::string& s) {
    if (s == "single") return Mode::single;
    if (s == "ml") return Mode::ml;
    throw ConfigError("unknown mode '" + s + "' (expected single or ml)");
}
inline CvMode parse_cv(const std::string& s) {
    if (s == "off") return CvMode::off;
    if (s == "outer") return CvMode::outer;
    if (s == "outer-beta") return CvMode::outer_beta;
    if (s == "inner") return CvMode::inner;
    throw ConfigError("unknown cv mode '" + s + "' (expected off, outer, outer-beta or inner)");
}
inline std::string to_string(Method m) {
    switch (m) {
    case Method::mesh: return "mesh";
    case Method::local: return "local";
    case Method::global: return "global";
    }
    return "?";
}
inline std::string to_string(Mode m) { return m == Mode::single ? "single" : "ml"; }
inline std::string to_string(CvMode c) {
    switch (c) {
    case CvMode::off: return "off";
    case CvMode::outer: return "outer";
    case CvMode::outer_beta: return "outer-beta";
    case CvMode::inner: return "inner";
    }
    return "?";
}

struct ReferenceValue {
    double value = 0.0;
    double ci_half_width = 0.0; // 1.96 standard errors over repetitions
    std::size_t k = 0;
    std::size_t n = 0;
    std::size_t repetitions = 0;
};

struct ExperimentConfig {
    Method method = Method::mesh;
    Mode mode = Mode::single;
    std::vector<double> epsilons;
    std::size_t repetitions = 20;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    CvMode cv = CvMode::off;

    ModelParams params;
    double maturity = 3.0;
    std::size_t exercise_dates = 3;
    double strike = 100.0;

    EstimatorProfile profile = EstimatorProfile::mesh();
    SingleLevelConstants single = SingleLevelConstants::mesh();
    MultilevelConstants multi = MultilevelConstants::mesh();

    double bandwidth_scale = 100.0;
    std::size_t degree = 2;
    double basis_scale = 100.0;

    std::optional<ReferenceValue> reference;
    std::size_t reference_k = 640;
    std::size_t reference_n = 20000;
    std::size_t reference_repetitions = 30;

    bool full_scale = false;

    TimeGrid grid() const { return TimeGrid::uniform(maturity, exercise_dates); }

    void validate() const {
        params.validate();
        profile.validate();
        if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
        if (epsilons.empty()) throw ConfigError("epsilon grid is empty");
        for (std::size_t i = 0; i < epsilons.size(); ++i) {
            if (!(epsilons[i] > 0.0)) throw ConfigError("epsilon values must be > 0");
            if (i > 0 && !(epsilons[i] < epsilons[i - 1])) throw ConfigError("epsilon grid must be decreasing");
        }
        if (exercise_dates < 1) throw ConfigError("J must be >= 1");
        if (!(maturity > 0.0)) throw ConfigError("T must be > 0");
        if (cv == CvMode::inner && method != Method::mesh) throw ConfigError("cv = inner is only defined for the mesh method");
        if (reference_repetitions < 2) throw ConfigError("reference_repetitions must be >= 2");
    }
};

/// Desk-scale epsilon grid per (method, mode, study); full_scale widens it.
inline std::vector<double> default_epsilons(Method method, Mode mode, bool complexity, bool full_scale) {
    std::vector<double> eps;
    if (method == Method::mesh && mode == Mode::ml) {
        // epsilon = 8 k0 / 2^L, so L runs through the listed levels
        std::size_t lo = complexity ? 1 : 3, hi = complexity ? 10 : 6;
        if (full_scale) lo = 1, hi = complexity ? 10 : 7;
        for (std::size_t L = lo; L <= hi; ++L) eps.push_back(40.0 / std::ldexp(1.0, static_cast<int>(L)));
        return eps;
    }
    if (method == Method::mesh) {
        if (complexity) return {0.24, 0.12, 0.06, 0.03, 0.015};
        if (full_scale) return {0.48, 0.24, 0.12, 0.06, 0.03, 0.015};
        return {0.48, 0.24, 0.12, 0.06};
    }
    if (method == Method::local) {
        if (mode == Mode::ml) return {0.3, 0.2, 0.15, 0.1};
        return {1.0, 0.9, 0.8, 0.7};
    }
    return {1.0, 0.5, 0.25, 0.125};
}

inline const std::set<std::string>& known_config_keys() {
    static const std::set<std::string> keys = {
        "method", "mode", "epsilon", "repetitions", "seed", "threads", "cv", "d", "r", "delta", "sigma", "x0", "T",
        "J", "kappa", "mu", "kappa1", "kappa2", "alpha", "c_k", "c_n", "k0", "theta", "c_L", "k0_power", "c_eps",
        "c_n_ml", "bandwidth_scale", "degree", "basis_scale", "reference_value", "reference_ci", "reference_k",
        "reference_n", "reference_repetitions", "full_scale"};
    return keys;
}

/// Method/mode defaults first, then config overrides.
inline ExperimentConfig make_config(const KeyValues& kv, bool complexity = false) {
    kv.require_known(known_config_keys());
    ExperimentConfig c;
    c.method = parse_method(kv.get_string("method", "mesh"));
    c.mode = parse_mode(kv.get_string("mode", "single"));
    c.full_scale = kv.get_bool("full_scale", false);
    switch (c.method) {
    case Method::mesh:
        c.profile = EstimatorProfile::mesh();
        c.single = SingleLevelConstants::mesh();
        c.multi = MultilevelConstants::mesh();
        break;
    case Method::local:
        c.profile = EstimatorProfile::local_constant();
        c.single = SingleLevelConstants::local_constant();
        c.multi = MultilevelConstants::local_constant();
        break;
    case Method::global:
        c.profile = EstimatorProfile::global(0.5);
        c.single = {};
        c.multi = {};
        c.multi.k0 = 16;
        break;
    }
    c.repetitions = kv.get_uint("repetitions", c.full_scale ? 100 : 20);
    c.seed = kv.get_uint("seed", 1);
    c.threads = kv.get_uint("threads", 1);
    c.cv = parse_cv(kv.get_string("cv", "off"));

    c.params.d = kv.get_uint("d", 5);
    c.params.r = kv.get_double("r", 0.05);
    c.params.delta = kv.get_double("delta", 0.1);
    c.params.sigma = kv.get_double("sigma", 0.2);
    const auto x0 = kv.get_doubles("x0", {100.0});
    if (x0.size() == 1) c.params.x0.assign(c.params.d, x0[0]);
    else c.params.x0 = x0;
    c.maturity = kv.get_double("T", 3.0);
    c.exercise_dates = kv.get_uint("J", 3);
    c.strike = kv.get_double("kappa", 100.0);

    c.profile.mu = kv.get_double("mu", c.profile.mu);
    c.profile.kappa1 = kv.get_double("kappa1", c.profile.kappa1);
    c.profile.kappa2 = kv.get_double("kappa2", c.profile.kappa2);
    c.profile.alpha = kv.get_double("alpha", c.profile.alpha);
    c.single.c_k = kv.get_double("c_k", c.single.c_k);
    c.single.c_n = kv.get_double("c_n", c.single.c_n);
    c.multi.k0 = kv.get_uint("k0", c.multi.k0);
    c.multi.theta = kv.get_double("theta", c.multi.theta);
    c.multi.c_L = kv.get_double("c_L", c.multi.c_L);
    c.multi.k0_power = kv.get_double("k0_power", c.multi.k0_power);
    c.multi.c_eps = kv.get_double("c_eps", c.multi.c_eps);
    c.multi.c_n = kv.get_double("c_n_ml", c.multi.c_n);
    c.bandwidth_scale = kv.get_double("bandwidth_scale", c.bandwidth_scale);
    c.degree = kv.get_uint("degree", c.degree);
    c.basis_scale = kv.get_double("basis_scale", c.basis_scale);

    c.reference_k = kv.get_uint("reference_k", c.reference_k);
    c.reference_n = kv.get_uint("reference_n", c.reference_n);
    c.reference_repetitions = kv.get_uint("reference_repetitions", c.reference_repetitions);
    if (kv.has("reference_value")) {
        ReferenceValue ref;
        ref.value = kv.get_double("reference_value", 0.0);
        ref.ci_half_width = kv.get_double("reference_ci", 0.0);
        c.reference = ref;
    }
    c.epsilons = kv.get_doubles("epsilon", default_epsilons(c.method, c.mode, complexity, c.full_scale));
    c.validate();
    return c;
}

struct RunResult {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t L = 0;
    std::size_t k = 0; // finest training size
    std::size_t n = 0; // total testing paths
    CostTally cost;
    double wall_seconds = 0.0;
};

/// Stream seed for the accuracy target `eps`, so grids can be extended
/// without perturbing existing points.
inline std::uint64_t epsilon_seed(std::uint64_t seed, double eps) {
    return hash_combine(seed, std::bit_cast<std::uint64_t>(eps));
}

class Experiment {
public:
    explicit Experiment(ExperimentConfig config)
        : config_(std::move(config)), grid_(config_.grid()), model_(config_.params, grid_),
          payoff_(config_.strike, config_.params.r, grid_) {
        config_.validate();
        if (config_.cv != CvMode::off) {
            control_ = european_control(config_.params, grid_, config_.strike, config_.cv != CvMode::outer);
            if (config_.cv == CvMode::inner)
                inner_ = european_control_function(config_.params, grid_, config_.strike);
        }
    }

    const ExperimentConfig& config() const noexcept { return config_; }
    const GbmModel& model() const noexcept { return model_; }
    const MaxCallPayoff& payoff() const noexcept { return payoff_; }
    const ControlSpec& control() const noexcept { return control_; }

    /// Calls fn(trainer) with a trainer PathSet -> estimator for the configured method.
    template <class Fn>
    decltype(auto) with_trainer(Fn&& fn, std::size_t threads) const {
        switch (config_.method) {
        case Method::mesh:
            return fn([this, threads](const PathSet& s) { return train_mesh(model_, s, payoff_, threads, inner_); });
        case Method::local:
            return fn([this, threads](const PathSet& s) {
                return train_local(s, payoff_, local_bandwidth(s.count(), config_.params.d, config_.bandwidth_scale),
                                   threads);
            });
        case Method::global:
        default:
            return fn([this](const PathSet& s) {
                return train_global(s, payoff_,
                                    default_global_basis(config_.params.d, config_.degree, config_.basis_scale, payoff_));
            });
        }
    }

    RunResult run_single(std::size_t k, std::size_t n, const StreamKey& key, std::size_t threads) const {
        const auto t0 = std::chrono::steady_clock::now();
        return with_trainer(
            [&](auto trainer) {
                const PathSet training = simulate_paths(model_, k, key.with_purpose(Purpose::training), threads);
                const auto est = trainer(training);
                const PriceEstimate p = price_single_level(est, model_, payoff_, n, key.with_purpose(Purpose::testing),
                                                           PricingOptions{threads, control_});
                RunResult r;
                r.value = p.value;
                r.std_error = p.std_error;
                r.k = k;
                r.n = n;
                r.cost = p.cost;
                r.cost.train_units = est.train_units();
                r.cost.train_ops = est.train_ops();
                r.cost.train_calls = 1;
                r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                return r;
            },
            threads);
    }

    RunResult run_multilevel(const LevelSchedule& s, const StreamKey& key, std::size_t threads) const {
        const auto t0 = std::chrono::steady_clock::now();
        return with_trainer(
            [&](auto trainer) {
                const auto coupled = train_coupled(std::span<const std::size_t>(s.k), model_, trainer, key,
                                                   CouplingOptions{threads, false});
                const auto est = price_multilevel(coupled, std::span<const std::size_t>(s.n), model_, payoff_, key,
                                                  MultilevelOptions{threads, control_, false});
                RunResult r;
                r.value = est.value;
                r.std_error = est.std_error;
                r.L = s.L;
                r.k = s.k.back();
                for (std::size_t n : s.n) r.n += n;
                r.cost = est.cost;
                r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                return r;
            },
            threads);
    }

    /// One full train+test run at accuracy target eps.
    RunResult run(double eps, std::size_t repetition, std::size_t threads) const {
        const StreamKey key = StreamKey{epsilon_seed(config_.seed, eps)}.with_repetition(repetition);
        if (config_.mode == Mode::single) {
            const auto s = single_level_schedule(eps, config_.profile, config_.single);
            return run_single(s.k, s.n, key, threads);
        }
        return run_multilevel(multilevel_schedule(eps, config_.profile, config_.multi), key, threads);
    }

    double predicted_cost(double eps) const {
        if (config_.mode == Mode::single)
            return mlb::predicted_cost(single_level_schedule(eps, config_.profile, config_.single), config_.profile);
        return mlb::predicted_cost(multilevel_schedule(eps, config_.profile, config_.multi));
    }

    double theoretical_exponent() const {
        return config_.mode == Mode::single ? single_level_exponent(config_.profile)
                                            : complexity_case(config_.profile).exponent;
    }

    /// High-budget single-level run: reference_k, reference_n, at least a
    /// European control with estimated beta, repetitions in the reference namespace.
    ReferenceValue establish_reference() const {
        ExperimentConfig rc = config_;
        rc.mode = Mode::single;
        if (rc.cv == CvMode::off || rc.cv == CvMode::outer) rc.cv = CvMode::outer_beta;
        const Experiment ref(rc);
        const std::size_t reps = std::max<std::size_t>(rc.reference_repetitions, 2);
        std::vector<double> values(reps);
        parallel_for(
            reps,
            [&](std::size_t r) {
                const StreamKey key = StreamKey{hash_combine(rc.seed, 0x7265666572656e63ULL)}.with_repetition(r);
                values[r] = ref.run_single(rc.reference_k, rc.reference_n, key.with_level(1), 1).value;
            },
            config_.threads);
        const auto m = moments(values);
        ReferenceValue out;
        out.value = m.mean;
        out.ci_half_width = 1.96 * std::sqrt(m.variance / static_cast<double>(reps));
        out.k = rc.reference_k;
        out.n = rc.reference_n;
        out.repetitions = reps;
        return out;
    }

private:
    ExperimentConfig config_;
    TimeGrid grid_;
    GbmModel model_;
    MaxCallPayoff payoff_;
    ControlSpec control_;
    InnerControl inner_;
};

struct MseRow {
    double epsilon = 0.0;
    double sqrt_mse_over_epsilon = 0.0;
    double mean = 0.0;
    double bias_est = 0.0; // mean - reference
    double var_est = 0.0;  // sample variance of the estimates over repetitions
    double cost_units = 0.0;
    double wall_seconds = 0.0;
    std::size_t L = 0;
};

/// MSE protocol over any run function: run(eps, repetition) for each eps
/// and repetition, MSE = mean squared deviation from `reference`.
/// Repetitions run in parallel; rows are assembled in repetition order.
inline std::vector<MseRow> mse_protocol(std::span<const double> epsilons, std::size_t repetitions, double reference,
                                        const std::function<RunResult(double, std::size_t)>& run,
                                        std::size_t threads = 1) {
    if (repetitions < 1) throw std::invalid_argument("mse_protocol: need at least one repetition");
    std::vector<MseRow> rows;
    for (double eps : epsilons) {
        std::vector<RunResult> results(repetitions);
        parallel_for(repetitions, [&](std::size_t r) { results[r] = run(eps, r); }, threads);
        std::vector<double> values(repetitions), sq(repetitions), cost(repetitions), wall(repetitions);
        for (std::size_t r = 0; r < repetitions; ++r) {
            values[r] = results[r].value;
            sq[r] = (values[r] - reference) * (values[r] - reference);
            cost[r] = results[r].cost.total_units();
            wall[r] = results[r].wall_seconds;
        }
        const auto m = moments(values);
        MseRow row;
        row.epsilon = eps;
        row.mean = m.mean;
        row.bias_est = m.mean - reference;
        row.var_est = m.variance;
        row.sqrt_mse_over_epsilon = std::sqrt(pairwise_sum(sq) / static_cast<double>(repetitions)) / eps;
        row.cost_units = pairwise_sum(cost) / static_cast<double>(repetitions);
        row.wall_seconds = pairwise_sum(wall) / static_cast<double>(repetitions);
        row.L = results.front().L;
        rows.push_back(row);
    }
    return rows;
}

struct MseStudy {
    ReferenceValue reference;
    std::vector<MseRow> rows;
};

inline MseStudy run_mse_study(const ExperimentConfig& config) {
    const Experiment exp(config);
    MseStudy study;
    study.reference = config.reference ? *config.reference : exp.establish_reference();
    study.rows = mse_protocol(config.epsilons, config.repetitions, study.reference.value,
                              [&](double eps, std::size_t r) { return exp.run(eps, r, 1); }, config.threads);
    return study;
}

struct ComplexityRow {
    double epsilon = 0.0;
    std::size_t L = 0;
    double measured_cost = 0.0;
    double predicted_cost = 0.0;
    double theoretical_exponent = 0.0;
    std::uint64_t eval_ops = 0;
    double eval_units = 0.0;
};

struct ComplexityStudy {
    std::vector<ComplexityRow> rows;
    LineFit measured_fit;  // log measured cost vs log(1/eps)
    LineFit predicted_fit; // log predicted cost vs log(1/eps)
    ComplexityResult theory;
};

inline ComplexityStudy run_complexity_study(const ExperimentConfig& config) {
    if (config.epsilons.size() < 3) throw ConfigError("complexity study needs at least 3 epsilon points");
    const Experiment exp(config);
    ComplexityStudy study;
    study.theory = complexity_case(config.profile);
    std::vector<double> x, ym, yp;
    for (double eps : config.epsilons) {
        std::vector<RunResult> results(config.repetitions);
        parallel_for(config.repetitions, [&](std::size_t r) { results[r] = exp.run(eps, r, 1); }, config.threads);
        ComplexityRow row;
        row.epsilon = eps;
        row.L = results.front().L;
        double total = 0.0;
        for (const auto& res : results) {
            total += res.cost.total_units();
            row.eval_ops += res.cost.eval_ops;
            row.eval_units += res.cost.eval_units;
        }
        row.measured_cost = total / static_cast<double>(results.size());
        row.predicted_cost = exp.predicted_cost(eps);
        row.theoretical_exponent = exp.theoretical_exponent();
        study.rows.push_back(row);
        x.push_back(std::log(1.0 / eps));
        ym.push_back(std::log(row.measured_cost));
        yp.push_back(std::log(row.predicted_cost));
    }
    study.measured_fit = fit_line(x, ym);
    study.predicted_fit = fit_line(x, yp);
    return study;
}

/// "# mlbermudan-csv v1 key=value ..." then the column header.
inline void write_csv_header(std::ostream& out, const std::map<std::string, std::string>& meta,
                             const std::string& columns) {
    out << "# " << csv_schema;
    for (const auto& [k, v] : meta) out << ' ' << k << '=' << v;
    out << '\n' << columns << '\n';
}

inline std::string format_double(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

inline std::map<std::string, std::string> config_metadata(const ExperimentConfig& c) {
    return {{"method", to_string(c.method)}, {"mode", to_string(c.mode)}, {"cv", to_string(c.cv)},
            {"seed", std::to_string(c.seed)}, {"repetitions", std::to_string(c.repetitions)},
            {"d", std::to_string(c.params.d)}, {"J", std::to_string(c.exercise_dates)}};
}

inline void write_mse_csv(std::ostream& out, const MseStudy& study, std::map<std::string, std::string> meta = {}) {
    meta["reference"] = format_double(study.reference.value);
    meta["reference_ci"] = format_double(study.reference.ci_half_width);
    meta["reference_k"] = std::to_string(study.reference.k);
    meta["reference_n"] = std::to_string(study.reference.n);
    meta["reference_repetitions"] = std::to_string(study.reference.repetitions);
    write_csv_header(out, meta, "epsilon,sqrt_mse_over_epsilon,mean,bias_est,var_est,cost_units,wall_seconds");
    const auto old = out.precision(17);
    for (const auto& r : study.rows)
        out << r.epsilon << ',' << r.sqrt_mse_over_epsilon << ',' << r.mean << ',' << r.bias_est << ',' << r.var_est
            << ',' << r.cost_units << ',' << r.wall_seconds << '\n';
    out.precision(old);
}

inline void write_complexity_csv(std::ostream& out, const ComplexityStudy& study,
                                 std::map<std::string, std::string> meta = {}) {
    meta["fitted_slope"] = format_double(study.measured_fit.slope);
    meta["predicted_slope"] = format_double(study.predicted_fit.slope);
    meta["case"] = study.theory.label;
    meta["gain_exponent"] = format_double(study.theory.gain);
    write_csv_header(out, meta, "epsilon,measured_cost,predicted_cost,theoretical_exponent");
    const auto old = out.precision(17);
    for (const auto& r : study.rows)
        out << r.epsilon << ',' << r.measured_cost << ',' << r.predicted_cost << ',' << r.theoretical_exponent << '\n';
    out.precision(old);
}

/// Two whitespace-separated columns for plotting.
inline void write_dat(std::ostream& out, std::span<const double> x, std::span<const double> y,
                      const std::string& comment) {
    if (x.size() != y.size()) throw std::invalid_argument("write_dat: column lengths differ");
    const auto old = out.precision(17);
    out << "# " << comment << '\n';
    for (std::size_t i = 0; i < x.size(); ++i) out << x[i] << ' ' << y[i] << '\n';
    out.precision(old);
}

/// log(1/eps) vs log(measured cost).
inline void write_cost_dat(std::ostream& out, const ComplexityStudy& study) {
    std::vector<double> x, y;
    for (const auto& r : study.rows) {
        x.push_back(std::log(1.0 / r.epsilon));
        y.push_back(std::log(r.measured_cost));
    }
    write_dat(out, x, y, "log(1/epsilon) log(cost_units)");
}

/// eps vs sqrt(MSE)/eps.
inline void write_mse_dat(std::ostream& out, const MseStudy& study) {
    std::vector<double> x, y;
    for (const auto& r : study.rows) {
        x.push_back(r.epsilon);
        y.push_back(r.sqrt_mse_over_epsilon);
    }
    write_dat(out, x, y, "epsilon sqrt_mse_over_epsilon");
}

} // namespace mlb
