// mlb: command-line front end for pricing, schedules and studies.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mlbermudan/config.hpp"
#include "mlbermudan/harness.hpp"
#include "mlbermudan/mesh.hpp"
#include "mlbermudan/oracle.hpp"

namespace {

using namespace mlb;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> threads;
    std::string cv;
    bool full_scale = false;
    std::string method;
    std::string mode;
    std::vector<double> epsilon;
    std::optional<std::size_t> repetitions;
    std::string dat;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "Key-value config file");
    app->add_option("--seed", c.seed, "Master seed");
    app->add_option("--out", c.out, "Output CSV path (default stdout)");
    app->add_option("--threads", c.threads, "Worker threads (0 = hardware)");
    app->add_option("--cv", c.cv, "Control variate mode")->check(CLI::IsMember({"off", "outer", "outer-beta", "inner"}));
    app->add_flag("--paper-scale,--full-scale", c.full_scale, "Full-size grids and repetitions");
    app->add_option("--method", c.method, "Estimator")->check(CLI::IsMember({"mesh", "local", "global"}));
    app->add_option("--repetitions,-R", c.repetitions, "Repetitions");
}

std::string join(const std::vector<double>& v) {
    std::ostringstream s;
    s.precision(17);
    for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
    return s.str();
}

/// Config file first, then command-line overrides.
KeyValues gather(const Common& c) {
    KeyValues kv = c.config.empty() ? KeyValues{} : KeyValues::load(c.config);
    if (c.seed) kv.set("seed", std::to_string(*c.seed));
    if (c.threads) kv.set("threads", std::to_string(*c.threads));
    if (!c.cv.empty()) kv.set("cv", c.cv);
    if (c.full_scale) kv.set("full_scale", "true");
    if (!c.method.empty()) kv.set("method", c.method);
    if (!c.mode.empty()) kv.set("mode", c.mode);
    if (!c.epsilon.empty()) kv.set("epsilon", join(c.epsilon));
    if (c.repetitions) kv.set("repetitions", std::to_string(*c.repetitions));
    return kv;
}

class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty()) {
            file_.open(path);
            if (!file_) throw ConfigError("cannot open output file: " + path);
        }
    }
    std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

private:
    std::ofstream file_;
};

void write_dat_file(const std::string& path, const std::function<void(std::ostream&)>& fn) {
    if (path.empty()) return;
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot open output file: " + path);
    fn(f);
}

int price_single_cmd(const Common& c, std::optional<std::size_t> k, std::optional<std::size_t> n) {
    KeyValues kv = gather(c);
    if (!kv.has("repetitions")) kv.set("repetitions", "1");
    if (!kv.has("epsilon")) {
        if (!k || !n) throw ConfigError("price-single needs --epsilon or both --k and --n");
        kv.set("epsilon", "1");
    }
    kv.set("mode", "single");
    const ExperimentConfig cfg = make_config(kv);
    const Experiment exp(cfg);
    Output out(c.out);
    auto& os = out.stream();
    auto meta = config_metadata(cfg);
    write_csv_header(os, meta, "epsilon,repetition,k,n,value,std_error,cost_units,train_units,eval_units,eval_ops,wall_seconds");
    os.precision(17);
    for (double eps : cfg.epsilons) {
        std::size_t kk = 0, nn = 0;
        if (k && n) {
            kk = *k;
            nn = *n;
        } else {
            const auto s = single_level_schedule(eps, cfg.profile, cfg.single);
            kk = s.k;
            nn = s.n;
        }
        std::vector<RunResult> results(cfg.repetitions);
        parallel_for(
            cfg.repetitions,
            [&](std::size_t r) {
                const StreamKey key = StreamKey{epsilon_seed(cfg.seed, eps)}.with_repetition(r);
                results[r] = exp.run_single(kk, nn, key, 1);
            },
            cfg.threads);
        for (std::size_t r = 0; r < results.size(); ++r) {
            const auto& res = results[r];
            os << ((k && n) ? std::nan("") : eps) << ',' << r << ',' << kk << ',' << nn << ',' << res.value << ','
               << res.std_error << ',' << res.cost.total_units() << ',' << res.cost.train_units << ','
               << res.cost.eval_units << ',' << res.cost.eval_ops << ',' << res.wall_seconds << '\n';
        }
        if (k && n) break;
    }
    return 0;
}

int price_ml_cmd(const Common& c, std::optional<std::size_t> k0, std::optional<double> theta) {
    KeyValues kv = gather(c);
    if (!kv.has("repetitions")) kv.set("repetitions", "1");
    if (!kv.has("epsilon")) throw ConfigError("price-ml needs --epsilon");
    kv.set("mode", "ml");
    if (k0) kv.set("k0", std::to_string(*k0));
    if (theta) {
        std::ostringstream s;
        s.precision(17);
        s << *theta;
        kv.set("theta", s.str());
    }
    const ExperimentConfig cfg = make_config(kv);
    const Experiment exp(cfg);
    Output out(c.out);
    auto& os = out.stream();
    os.precision(17);
    for (double eps : cfg.epsilons) {
        const auto sched = multilevel_schedule(eps, cfg.profile, cfg.multi);
        for (std::size_t r = 0; r < cfg.repetitions; ++r) {
            const StreamKey key = StreamKey{epsilon_seed(cfg.seed, eps)}.with_repetition(r);
            exp.with_trainer(
                [&](auto trainer) {
                    const auto coupled = train_coupled(std::span<const std::size_t>(sched.k), exp.model(), trainer, key,
                                                       CouplingOptions{cfg.threads, false});
                    const auto est = price_multilevel(coupled, std::span<const std::size_t>(sched.n), exp.model(),
                                                      exp.payoff(), key, MultilevelOptions{cfg.threads, exp.control(), false});
                    auto meta = config_metadata(cfg);
                    meta["epsilon"] = format_double(eps);
                    meta["repetition"] = std::to_string(r);
                    meta["L"] = std::to_string(sched.L);
                    os << "# " << csv_schema;
                    for (const auto& [key_, v] : meta) os << ' ' << key_ << '=' << v;
                    os << '\n';
                    write_level_csv(os, level_diagnostics(est));
                    os << "summary,value,std_error,cost_units,wall_seconds\n";
                    os << "summary," << est.value << ',' << est.std_error << ',' << est.cost.total_units() << ','
                       << est.cost.wall_seconds << '\n';
                    return 0;
                },
                cfg.threads);
        }
    }
    return 0;
}

int schedule_cmd(const Common& c) {
    KeyValues kv = gather(c);
    if (!kv.has("epsilon")) throw ConfigError("schedule needs --epsilon");
    const ExperimentConfig cfg = make_config(kv);
    Output out(c.out);
    auto& os = out.stream();
    os << "# " << csv_schema << " method=" << to_string(cfg.method) << " mode=" << to_string(cfg.mode) << '\n';
    for (double eps : cfg.epsilons) {
        if (cfg.mode == Mode::ml) {
            write_schedule_csv(os, multilevel_schedule(eps, cfg.profile, cfg.multi));
        } else {
            const auto s = single_level_schedule(eps, cfg.profile, cfg.single);
            const auto old = os.precision(17);
            os << "# epsilon=" << eps << " exponent=" << single_level_exponent(cfg.profile) << '\n';
            os << "k,n,k_real,n_real,predicted_cost\n";
            os << s.k << ',' << s.n << ',' << s.k_real << ',' << s.n_real << ',' << predicted_cost(s, cfg.profile)
               << '\n';
            os.precision(old);
        }
    }
    return 0;
}

int mse_study_cmd(const Common& c) {
    const ExperimentConfig cfg = make_config(gather(c));
    const MseStudy study = run_mse_study(cfg);
    Output out(c.out);
    write_mse_csv(out.stream(), study, config_metadata(cfg));
    write_dat_file(c.dat, [&](std::ostream& os) { write_mse_dat(os, study); });
    return 0;
}

int complexity_study_cmd(const Common& c) {
    const ExperimentConfig cfg = make_config(gather(c), true);
    const ComplexityStudy study = run_complexity_study(cfg);
    Output out(c.out);
    write_complexity_csv(out.stream(), study, config_metadata(cfg));
    write_dat_file(c.dat, [&](std::ostream& os) { write_cost_dat(os, study); });
    std::cerr << "fitted slope " << study.measured_fit.slope << ", single-level exponent "
              << study.theory.single_exponent << ", multilevel exponent " << study.theory.exponent << " ("
              << study.theory.label << "), gain " << study.theory.gain << '\n';
    return 0;
}

/// Prints the reference as config lines, ready to be stored and passed back via --config.
int reference_cmd(const Common& c, std::optional<std::size_t> k, std::optional<std::size_t> n) {
    KeyValues kv = gather(c);
    if (k) kv.set("reference_k", std::to_string(*k));
    if (n) kv.set("reference_n", std::to_string(*n));
    if (c.repetitions) kv.set("reference_repetitions", std::to_string(*c.repetitions));
    if (!kv.has("cv")) kv.set("cv", "inner");
    const ExperimentConfig cfg = make_config(kv);
    const ReferenceValue ref = Experiment(cfg).establish_reference();
    Output out(c.out);
    auto& os = out.stream();
    os << "# " << csv_schema << " reference cv=" << to_string(cfg.cv) << " seed=" << cfg.seed << '\n';
    os << "reference_value = " << format_double(ref.value) << '\n';
    os << "reference_ci = " << format_double(ref.ci_half_width) << '\n';
    os << "reference_k = " << ref.k << '\n';
    os << "reference_n = " << ref.n << '\n';
    os << "reference_repetitions = " << ref.repetitions << '\n';
    return 0;
}

int oracle_check_cmd(const Common& c) {
    const std::uint64_t seed = c.seed.value_or(1);
    int failures = 0;
    auto report = [&](const std::string& name, bool ok, const std::string& detail) {
        std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << '\n';
        if (!ok) ++failures;
    };
    std::ostringstream d;
    d.precision(12);

    LatticeSpec small;
    small.steps_per_period = 2;
    for (const auto& [name, chain] : {std::pair<std::string, FiniteChain>{"binomial", binomial_fixture(small)},
                                     std::pair<std::string, FiniteChain>{"random-5", random_chain_fixture(seed)}}) {
        const double dp = dp_solve(chain).value0();
        const double brute = enumerate_optimal_value(chain);
        d.str("");
        d << "dp " << dp << " enumeration " << brute;
        report(name + " dp equals enumeration", dp == brute, d.str());
    }

    auto chain = std::make_shared<const FiniteChain>(binomial_fixture());
    const auto sol = dp_solve(*chain);
    const ChainModel model(chain);
    const ChainPayoff payoff(chain);
    const ExactEstimator exact(chain, sol);
    d.str("");
    d << "policy " << policy_value(*chain, exact) << " dp " << sol.value0();
    report("exact rule attains dp value", std::abs(policy_value(*chain, exact) - sol.value0()) < 1e-10, d.str());

    const StreamKey key{seed};
    const auto mesh = train_mesh(model, simulate_paths(model, 1024, key.with_purpose(Purpose::training)), payoff);
    const double pv = policy_value(*chain, mesh);
    d.str("");
    d << "mesh rule " << pv << " <= dp " << sol.value0();
    report("mesh rule is low-biased", pv <= sol.value0() + 1e-12, d.str());

    const auto est = price_single_level(mesh, model, payoff, 20000, key.with_purpose(Purpose::testing));
    d.str("");
    d << "estimate " << est.value << " se " << est.std_error << " dp " << sol.value0();
    report("mesh price within 3 se", std::abs(est.value - sol.value0()) <= 3.0 * est.std_error + sol.value0() - pv,
           d.str());
    std::cout << (failures == 0 ? "oracle-check: all passed" : "oracle-check: failures") << '\n';
    return failures == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bermudan option pricing with single-level and multilevel estimators"};
    app.require_subcommand(1);
    Common common;

    auto* single = app.add_subcommand("price-single", "Single-level price, one CSV row per repetition");
    add_common(single, common);
    std::optional<std::size_t> k, n;
    single->add_option("--epsilon", common.epsilon, "Accuracy target(s)")->delimiter(',');
    single->add_option("--k", k, "Training paths");
    single->add_option("--n", n, "Testing paths");

    auto* ml = app.add_subcommand("price-ml", "Multilevel price with a per-level table");
    add_common(ml, common);
    std::optional<std::size_t> k0;
    std::optional<double> theta;
    ml->add_option("--epsilon", common.epsilon, "Accuracy target(s)")->delimiter(',');
    ml->add_option("--k0", k0, "Level-0 training size");
    ml->add_option("--theta", theta, "Level growth factor");

    auto* sched = app.add_subcommand("schedule", "Print the (k, n) schedule as CSV");
    add_common(sched, common);
    sched->add_option("--mode", common.mode, "single or ml")->check(CLI::IsMember({"single", "ml"}));
    sched->add_option("--epsilon", common.epsilon, "Accuracy target(s)")->delimiter(',');

    auto* mse = app.add_subcommand("mse-study", "sqrt(MSE)/epsilon over an epsilon grid");
    add_common(mse, common);
    mse->add_option("--mode", common.mode, "single or ml")->check(CLI::IsMember({"single", "ml"}));
    mse->add_option("--epsilon", common.epsilon, "Epsilon grid")->delimiter(',');
    mse->add_option("--dat", common.dat, "Two-column plot file");

    auto* cx = app.add_subcommand("complexity-study", "Measured cost vs 1/epsilon");
    add_common(cx, common);
    cx->add_option("--mode", common.mode, "single or ml")->check(CLI::IsMember({"single", "ml"}));
    cx->add_option("--epsilon", common.epsilon, "Epsilon grid")->delimiter(',');
    cx->add_option("--dat", common.dat, "Two-column plot file");

    auto* refc = app.add_subcommand("reference", "High-budget reference value for MSE studies");
    add_common(refc, common);
    std::optional<std::size_t> ref_k, ref_n;
    refc->add_option("--k", ref_k, "Training paths");
    refc->add_option("--n", ref_n, "Testing paths");

    auto* oracle = app.add_subcommand("oracle-check", "Dynamic-programming oracle checks");
    oracle->add_option("--seed", common.seed, "Master seed");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*single) return price_single_cmd(common, k, n);
        if (*ml) return price_ml_cmd(common, k0, theta);
        if (*sched) return schedule_cmd(common);
        if (*mse) return mse_study_cmd(common);
        if (*cx) return complexity_study_cmd(common);
        if (*refc) return reference_cmd(common, ref_k, ref_n);
        if (*oracle) return oracle_check_cmd(common);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
