#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <sstream>
#include <vector>

#include "mlbermudan/harness.hpp"
#include "mlbermudan/oracle.hpp"

using namespace mlb;

namespace {

ExperimentConfig small_config(const std::string& extra = "") {
    return make_config(KeyValues::parse_string("epsilon = 0.48, 0.24, 0.12\nrepetitions = 3\nreference_value = 25.2\n" +
                                               extra));
}

} // namespace

TEST(ExperimentConfig, DefaultsPerMethod) {
    const auto mesh = make_config(KeyValues{});
    EXPECT_EQ(mesh.method, Method::mesh);
    EXPECT_EQ(mesh.repetitions, 20u);
    EXPECT_EQ(mesh.epsilons.size(), 4u);
    EXPECT_EQ(mesh.params.d, 5u);
    EXPECT_EQ(mesh.single.c_k, 2.4);

    const auto ml = make_config(KeyValues::parse_string("mode = ml\n"));
    EXPECT_EQ(ml.multi.k0, 5u);
    EXPECT_EQ(ml.multi.c_L, 8.0);

    const auto local = make_config(KeyValues::parse_string("method = local\nmode = ml\n"));
    EXPECT_EQ(local.multi.k0, 100u);
    EXPECT_NEAR(local.profile.mu, 1.0 / 6.0, 1e-15);

    const auto full = make_config(KeyValues::parse_string("full_scale = true\n"));
    EXPECT_EQ(full.repetitions, 100u);
}

TEST(ExperimentConfig, Overrides) {
    const auto c = make_config(KeyValues::parse_string("d = 2\nx0 = 90, 110\nJ = 4\nkappa = 95\nseed = 9\ncv = outer-beta\n"));
    EXPECT_EQ(c.params.x0, (std::vector<double>{90, 110}));
    EXPECT_EQ(c.exercise_dates, 4u);
    EXPECT_EQ(c.strike, 95.0);
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.cv, CvMode::outer_beta);
}

TEST(ExperimentConfig, ValidationErrors) {
    EXPECT_THROW(make_config(KeyValues::parse_string("bogus = 1\n")), ConfigError);
    EXPECT_THROW(make_config(KeyValues::parse_string("method = tree\n")), ConfigError);
    EXPECT_THROW(make_config(KeyValues::parse_string("epsilon = 0.1, 0.2\n")), ConfigError);
    EXPECT_THROW(make_config(KeyValues::parse_string("epsilon = 0.1, -0.2\n")), ConfigError);
    EXPECT_THROW(make_config(KeyValues::parse_string("repetitions = 0\n")), ConfigError);
    EXPECT_THROW(make_config(KeyValues::parse_string("method = local\ncv = inner\n")), ConfigError);
    EXPECT_THROW(make_config(KeyValues::parse_string("d = 3\nx0 = 1, 2\n")), std::invalid_argument);
}

TEST(MseProtocol, SyntheticErrorsGiveExactRatio) {
    const std::vector<double> eps{1.0, 0.5, 0.25};
    const auto rows = mse_protocol(eps, 4, 10.0, [](double e, std::size_t r) {
        RunResult res;
        res.value = 10.0 + (r % 2 ? e : -e);
        return res;
    });
    for (const auto& row : rows) {
        EXPECT_NEAR(row.sqrt_mse_over_epsilon, 1.0, 1e-14);
        EXPECT_NEAR(row.bias_est, 0.0, 1e-14);
    }
}

TEST(MseProtocol, ExactRuleOnOracleIsUnbiased) {
    auto chain = std::make_shared<const FiniteChain>(binomial_fixture());
    const auto sol = dp_solve(*chain);
    const ChainModel model(chain);
    const ChainPayoff payoff(chain);
    const ExactEstimator exact(chain, sol);
    const std::vector<double> eps{0.4, 0.2};
    const auto rows = mse_protocol(eps, 20, sol.value0(), [&](double e, std::size_t r) {
        const auto n = static_cast<std::size_t>(std::ceil(std::pow(e / 10.0, -2.0)));
        const auto p = price_single_level(exact, model, payoff, n,
                                          StreamKey{epsilon_seed(1, e)}.with_purpose(Purpose::testing).with_repetition(r));
        RunResult res;
        res.value = p.value;
        return res;
    });
    for (const auto& row : rows) {
        EXPECT_LT(std::abs(row.bias_est), 4.0 * std::sqrt(row.var_est / 20.0));
        EXPECT_LT(row.sqrt_mse_over_epsilon, 2.0);
    }
}

TEST(Harness, SameSeedGivesIdenticalCsv) {
    auto run = [](std::size_t threads) {
        auto c = small_config("threads = " + std::to_string(threads) + "\n");
        const auto study = run_mse_study(c);
        std::ostringstream out;
        auto rows = study.rows;
        for (auto& r : rows) r.wall_seconds = 0.0;
        write_mse_csv(out, MseStudy{study.reference, rows}, config_metadata(c));
        return out.str();
    };
    const auto a = run(1);
    EXPECT_EQ(a, run(1));
    EXPECT_EQ(a, run(3));
    EXPECT_NE(a.find("# mlbermudan-csv v1"), std::string::npos);
    EXPECT_NE(a.find("epsilon,sqrt_mse_over_epsilon,mean,bias_est,var_est,cost_units,wall_seconds"), std::string::npos);
}

TEST(Harness, MeasuredCostEqualsUnitFormula) {
    const auto c = small_config();
    const Experiment exp(c);
    for (double eps : c.epsilons) {
        const auto r = exp.run(eps, 0, 1);
        const auto s = single_level_schedule(eps, c.profile, c.single);
        EXPECT_EQ(r.k, s.k);
        EXPECT_EQ(r.cost.train_units, static_cast<double>(s.k * s.k));
        EXPECT_EQ(r.cost.eval_units, static_cast<double>(r.cost.eval_ops));
        EXPECT_EQ(r.cost.eval_units, static_cast<double>(r.cost.eval_calls * s.k));
    }
    auto ml = make_config(KeyValues::parse_string("mode = ml\nepsilon = 10, 5, 2.5\nrepetitions = 1\n"));
    const Experiment mexp(ml);
    const auto r = mexp.run(5.0, 0, 1);
    const auto sched = multilevel_schedule(5.0, ml.profile, ml.multi);
    double train = 0.0;
    for (std::size_t l = 0; l <= sched.L; ++l) {
        const double k = static_cast<double>(sched.k[l]);
        train += k * k;
        if (l > 0) train += static_cast<double>(sched.k[l - 1] * sched.k[l - 1]);
    }
    EXPECT_EQ(r.cost.train_units, train);
    EXPECT_EQ(r.cost.eval_units, static_cast<double>(r.cost.eval_ops));
    EXPECT_EQ(r.L, 3u);
}

TEST(Harness, ComplexityStudyNeedsThreePoints) {
    auto c = small_config();
    c.epsilons = {0.24, 0.12};
    EXPECT_THROW(run_complexity_study(c), ConfigError);
}

TEST(Harness, ComplexityStudyRowsAndDat) {
    auto c = make_config(KeyValues::parse_string("epsilon = 0.48, 0.24, 0.12\nrepetitions = 2\n"), true);
    const auto study = run_complexity_study(c);
    ASSERT_EQ(study.rows.size(), 3u);
    for (const auto& row : study.rows) {
        EXPECT_EQ(row.theoretical_exponent, 3.0);
        EXPECT_GT(row.measured_cost, 0.0);
        EXPECT_EQ(row.eval_units, static_cast<double>(row.eval_ops));
    }
    EXPECT_EQ(study.theory.gain, 0.5);
    std::ostringstream dat;
    write_cost_dat(dat, study);
    std::istringstream in(dat.str());
    std::string header;
    std::getline(in, header);
    double x = 0, y = 0;
    in >> x >> y;
    EXPECT_NEAR(x, std::log(1.0 / 0.48), 1e-12);
    EXPECT_NEAR(y, std::log(study.rows[0].measured_cost), 1e-12);
}

TEST(Harness, EstimatorsPlugIntoExperiment) {
    for (const char* method : {"local", "global"}) {
        auto c = make_config(KeyValues::parse_string(std::string("method = ") + method +
                                                     "\nepsilon = 1.0\nrepetitions = 1\nreference_value = 25\n"));
        const Experiment exp(c);
        const auto r = exp.run(1.0, 0, 1);
        EXPECT_GT(r.value, 0.0) << method;
        EXPECT_LT(r.value, 40.0) << method;
    }
}
