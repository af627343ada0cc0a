// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance [--criterion N] [--seed S]

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "mlbermudan/control_variates.hpp"
#include "mlbermudan/global_regression.hpp"
#include "mlbermudan/harness.hpp"
#include "mlbermudan/local_regression.hpp"
#include "mlbermudan/mesh.hpp"
#include "mlbermudan/multilevel.hpp"
#include "mlbermudan/oracle.hpp"
#include "mlbermudan/schedule.hpp"

#ifndef MLB_DATA_DIR
#define MLB_DATA_DIR "tests/data"
#endif

using namespace mlb;

namespace {

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::uint64_t g_seed = 1;

struct Gbm {
    ModelParams params;
    TimeGrid grid = TimeGrid::uniform(3.0, 3);
    GbmModel model{params, grid};
    MaxCallPayoff payoff{100.0, params.r, grid};
};

// 1. Oracle equivalence
void criterion_1(Verdict& v) {
    const auto t0 = Clock::now();
    const auto small = binomial_fixture(LatticeSpec{100.0, 100.0, 0.05, 0.1, 0.2, 3.0, 3, 1});
    const auto chain5 = random_chain_fixture(g_seed, 5, 3);
    const double dp_small = dp_solve(small).value0(), en_small = enumerate_optimal_value(small);
    const double dp5 = dp_solve(chain5).value0(), en5 = enumerate_optimal_value(chain5);
    v.check(dp_small == en_small, "binomial dp != enumeration");
    v.check(dp5 == en5, "5-state dp != enumeration");
    v.detail << " binomial dp=" << dp_small << " enum=" << en_small << "; 5-state dp=" << dp5 << " enum=" << en5;

    for (const auto& [name, fixture] : {std::pair<std::string, FiniteChain>{"binomial", binomial_fixture()},
                                        std::pair<std::string, FiniteChain>{"5-state", chain5}}) {
        auto chain = std::make_shared<const FiniteChain>(fixture);
        const double v0 = dp_solve(*chain).value0();
        const ChainModel model(chain);
        const ChainPayoff payoff(chain);
        const StreamKey base = StreamKey{g_seed}.with_level(1024);

        const auto est = train_mesh(model, simulate_paths(model, 1024, base.with_purpose(Purpose::training)), payoff);
        const auto one = price_single_level(est, model, payoff, 20000, base.with_purpose(Purpose::testing));
        v.check(std::abs(one.value - v0) <= 3.0 * one.std_error, name + " single estimate outside 3 SE");

        std::vector<double> vals(100);
        parallel_for(100, [&](std::size_t r) {
            const StreamKey key = base.with_repetition(r + 1);
            const auto e = train_mesh(model, simulate_paths(model, 1024, key.with_purpose(Purpose::training)), payoff);
            vals[r] = price_single_level(e, model, payoff, 2000, key.with_purpose(Purpose::testing)).value;
        });
        const auto m = moments(vals);
        const double se = std::sqrt(m.variance / 100.0);
        v.check(m.mean <= v0 + 3.0 * se, name + " 100-rep mean above V0 + 3 SE");
        v.detail << "; " << name << " V0=" << v0 << " k=1024 est=" << one.value << " (SE " << one.std_error
                 << "), mean100=" << m.mean << " (SE " << se << ")";
    }
    const double secs = seconds_since(t0);
    v.check(secs < 60.0, "runtime >= 1 min");
    v.detail << "; " << secs << " s";
}

// 2. Bias rate on the one-dimensional lattice, exact policy values
void criterion_2(Verdict& v) {
    const auto t0 = Clock::now();
    auto chain = std::make_shared<const FiniteChain>(binomial_fixture(LatticeSpec::in_the_money()));
    const double v0 = dp_solve(*chain).value0();
    const ChainModel model(chain);
    const ChainPayoff payoff(chain);
    std::vector<std::size_t> ks;
    for (std::size_t k = 16; k <= 1024; k *= 2) ks.push_back(k);
    const std::size_t reps = 20;
    const auto curve = estimate_bias_curve(ks, reps, v0, [&](std::size_t k, std::size_t r) {
        const StreamKey key = StreamKey{g_seed}.with_purpose(Purpose::training).with_repetition(r).with_level(k);
        return policy_value(*chain, train_mesh(model, simulate_paths(model, k, key), payoff));
    });
    for (const auto& p : curve.points) v.detail << " k=" << p.k << ":" << p.bias;
    const double slope = curve.fit.slope;
    v.check(curve.points.size() == ks.size() && std::abs(slope + 1.0) <= 0.3, "slope outside -1.0 +- 0.3");
    const double secs = seconds_since(t0);
    v.check(secs < 300.0, "runtime >= 5 min");
    v.detail << "; slope=" << slope << "; " << secs << " s";
}

// 3. Variance decay of the multilevel corrections
void criterion_3(Verdict& v) {
    const auto t0 = Clock::now();
    const Gbm g;
    const std::size_t levels = 5, reps = 6, n = 6000;
    std::vector<std::size_t> ks;
    for (std::size_t l = 0; l <= levels; ++l) ks.push_back(160u << l);
    const std::vector<std::size_t> ns(ks.size(), n);
    const auto inner = european_control_function(g.params, g.grid, 100.0);
    const auto outer = european_control(g.params, g.grid, 100.0, false);
    std::vector<double> var(levels + 1, 0.0);
    for (std::size_t r = 0; r < reps; ++r) {
        const StreamKey key = StreamKey{hash_combine(g_seed, 3)}.with_repetition(r);
        auto trainer = [&](const PathSet& s) { return train_mesh(g.model, s, g.payoff, 1, inner); };
        const auto c = train_coupled(std::span<const std::size_t>(ks), g.model, trainer, key);
        const auto ml = price_multilevel(c, std::span<const std::size_t>(ns), g.model, g.payoff, key,
                                         MultilevelOptions{1, outer, false});
        for (std::size_t l = 1; l <= levels; ++l) var[l] += ml.levels[l].variance / static_cast<double>(reps);
    }
    std::vector<double> xs, ys;
    for (std::size_t l = 1; l <= levels; ++l) {
        xs.push_back(static_cast<double>(ks[l - 1]));
        ys.push_back(var[l]);
        v.detail << " k=" << ks[l - 1] << ":" << var[l];
    }
    const double slope = fit_loglog(xs, ys).slope;
    v.check(std::abs(slope + 0.5) <= 0.2, "slope outside -0.5 +- 0.2");
    const double secs = seconds_since(t0);
    v.check(secs < 300.0, "runtime >= 5 min");
    v.detail << "; slope=" << slope << "; " << secs << " s";
}

// 4. Complexity slopes
void criterion_4(Verdict& v) {
    auto single = make_config(
        KeyValues::parse_string("epsilon = 0.24, 0.12, 0.06, 0.03, 0.015, 0.0075\nrepetitions = 1\nseed = " +
                                std::to_string(g_seed) + "\n"),
        true);
    const auto s = run_complexity_study(single);
    v.check(std::abs(s.measured_fit.slope - 3.0) <= 0.3, "single-level slope outside 3.0 +- 0.3");
    v.detail << " single slope=" << s.measured_fit.slope;

    auto ml = make_config(KeyValues::parse_string("mode = ml\nrepetitions = 1\nseed = " + std::to_string(g_seed) + "\n"),
                          true);
    const auto m = run_complexity_study(ml);
    v.check(m.rows.front().L <= 1 && m.rows.back().L >= 4, "L sweep does not cover 1..4");
    v.check(std::abs(m.measured_fit.slope - 2.5) <= 0.3, "multilevel slope outside 2.5 +- 0.3");
    v.detail << "; ml L=" << m.rows.front().L << ".." << m.rows.back().L << " slope=" << m.measured_fit.slope
             << " (predicted-cost slope " << m.predicted_fit.slope << ")";

    const double e = complexity_case(EstimatorProfile{1.0, 1.0, 1.0, 1.0}).exponent;
    v.check(e == 2.5, "classifier exponent != 2.5");
    v.detail << "; classifier=" << e;
}

// 5. Schedule transcription
void criterion_5(Verdict& v) {
    const auto s = single_level_schedule(0.24, EstimatorProfile::mesh(), SingleLevelConstants::mesh());
    v.check(s.k == 10 && s.n == 100, "single mesh at 0.24 != (10,100)");
    v.detail << " single(0.24)=(" << s.k << "," << s.n << ")";

    std::mt19937_64 rng(g_seed);
    std::uniform_real_distribution<double> u(-2.0, 1.5), ul(0.05, 0.5);
    std::size_t bad_mesh = 0, bad_local = 0;
    for (int i = 0; i < 100; ++i) {
        const double eps = std::pow(10.0, u(rng));
        const auto m = multilevel_schedule(eps, EstimatorProfile::mesh(), MultilevelConstants::mesh());
        const auto L = static_cast<std::size_t>(std::max(0.0, std::ceil(std::log2(40.0 / eps))));
        bool ok = m.L == L && m.k.size() == L + 1;
        for (std::size_t l = 0; ok && l <= L; ++l) ok = m.k[l] == (5u << l);
        if (!ok) ++bad_mesh;
    }
    const auto lc = MultilevelConstants::local_constant();
    const auto sc = SingleLevelConstants::local_constant();
    for (int i = 0; i < 100; ++i) {
        const double eps = ul(rng);
        bool ok = true;
        // single level: k = (c_k/eps)^{2/(mu(1+alpha))}, n = (c_n/eps)^2
        const auto sl = single_level_schedule(eps, EstimatorProfile::local_constant(), sc);
        const double kr = std::pow(sc.c_k / eps, 6.0), nr = std::pow(sc.c_n / eps, 2.0);
        ok = ok && sl.k == static_cast<std::size_t>(std::ceil(kr)) &&
             sl.n == static_cast<std::size_t>(std::max(1.0, std::ceil(nr)));
        const double delta = local_bandwidth(sl.k, 5);
        ok = ok && std::abs(delta - 100.0 * std::pow(static_cast<double>(sl.k), -1.0 / 7.0)) <= 1e-12 * delta;

        const auto ml = multilevel_schedule(eps, EstimatorProfile::local_constant(), lc);
        const double real = 6.0 * std::log(3.0 / (eps * std::pow(100.0, 1.0 / 6.0))) / std::log(2.0);
        const auto L = static_cast<std::size_t>(std::max(0.0, std::ceil(real)));
        ok = ok && ml.L == L;
        double sum = 0.0;
        for (std::size_t l = 1; l <= L; ++l) sum += std::pow(100.0 * std::pow(2.0, l), 11.0 / 24.0);
        for (std::size_t l = 0; ok && l <= L; ++l) {
            const double kl = 100.0 * std::pow(2.0, static_cast<double>(l));
            const double base = 10.0 / ((eps / 3.0) * (eps / 3.0));
            const double nl = L == 0 ? base : base * sum * std::pow(kl, -13.0 / 24.0);
            ok = ml.k[l] == static_cast<std::size_t>(kl) &&
                 ml.n[l] == static_cast<std::size_t>(std::max(1.0, std::ceil(nl)));
        }
        if (!ok) ++bad_local;
    }
    v.check(bad_mesh == 0, "mesh ML mismatches");
    v.check(bad_local == 0, "local rule mismatches");
    v.detail << "; mesh ML mismatches=" << bad_mesh << "/100, local mismatches=" << bad_local << "/100";
}

// 6. sqrt(MSE)/eps boundedness
void criterion_6(Verdict& v) {
    const auto t0 = Clock::now();
    const std::string ref_path = std::string(MLB_DATA_DIR) + "/gbm_reference.conf";
    for (const char* mode : {"single", "ml"}) {
        KeyValues kv = KeyValues::load(ref_path);
        kv.set("mode", mode);
        kv.set("cv", "inner");
        kv.set("repetitions", "20");
        kv.set("seed", std::to_string(g_seed));
        const auto cfg = make_config(kv);
        const auto study = run_mse_study(cfg);
        std::vector<double> xs, ys;
        v.detail << ' ' << mode << ":";
        for (const auto& row : study.rows) {
            v.detail << " eps=" << row.epsilon << ":" << row.sqrt_mse_over_epsilon;
            v.check(row.sqrt_mse_over_epsilon <= 1.5, std::string(mode) + " ratio above 1.5");
            xs.push_back(std::log(1.0 / row.epsilon));
            ys.push_back(std::log(row.sqrt_mse_over_epsilon));
        }
        const double trend = fit_line(xs, ys).slope;
        v.check(trend <= 0.2, std::string(mode) + " increasing trend");
        v.detail << " trend=" << trend << ";";
    }
    const double secs = seconds_since(t0);
    v.check(secs < 600.0, "runtime >= 10 min");
    v.detail << ' ' << secs << " s";
}

double ncdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// 7. Control variate
void criterion_7(Verdict& v) {
    ModelParams p1;
    p1.d = 1;
    p1.x0 = {100.0};
    double worst = 0.0;
    for (double x : {70.0, 100.0, 140.0})
        for (double t : {0.0, 1.5}) {
            const double tau = 3.0 - t, s = 0.2 * std::sqrt(tau);
            const double d1 = (std::log(x / 100.0) + (0.05 - 0.1 + 0.02) * tau) / s;
            const double bs = std::exp(-0.05 * t) * (x * std::exp(-0.1 * tau) * ncdf(d1) -
                                                     100.0 * std::exp(-0.05 * tau) * ncdf(d1 - s));
            worst = std::max(worst, std::abs(european_max_call(std::vector<double>{x}, t, 3.0, 100.0, p1) - bs));
        }
    v.check(worst <= 1e-8, "d=1 closed form mismatch");
    v.detail << " d=1 max error=" << worst;

    const Gbm g;
    const double exact = european_max_call(g.params.x0, 0.0, 3.0, 100.0, g.params);
    const std::size_t n = 10'000'000;
    std::vector<double> vals(n);
    parallel_for(n, [&](std::size_t i) {
        CounterRng rng = path_stream(StreamKey{hash_combine(g_seed, 7)}, i);
        std::normal_distribution<double> normal;
        double mx = 0.0;
        for (std::size_t c = 0; c < 5; ++c)
            mx = std::max(mx, 100.0 * std::exp((0.05 - 0.1 - 0.02) * 3.0 + 0.2 * std::sqrt(3.0) * normal(rng)));
        vals[i] = std::exp(-0.15) * std::max(mx - 100.0, 0.0);
    });
    const auto m = moments(vals);
    const double se = std::sqrt(m.variance / static_cast<double>(n));
    v.check(std::abs(m.mean - exact) <= 3.0 * se, "d=5 MC outside 3 SE");
    v.detail << "; d=5 quadrature=" << exact << " MC=" << m.mean << " (SE " << se << ")";

    auto off = make_config(KeyValues::parse_string("epsilon = 0.12\nseed = " + std::to_string(g_seed) + "\n"));
    auto on = off;
    on.cv = CvMode::outer;
    const Experiment e_off(off), e_on(on);
    std::size_t wins = 0;
    for (std::size_t r = 0; r < 20; ++r) {
        const StreamKey key = StreamKey{hash_combine(g_seed, 77)}.with_repetition(r);
        if (e_on.run_single(20, 400, key, 1).std_error < e_off.run_single(20, 400, key, 1).std_error) ++wins;
    }
    v.check(wins >= 18, "outer CV reduced SE in fewer than 18 of 20");
    v.detail << "; outer CV reduced SE in " << wins << "/20";
}

// 8. Invariants
void criterion_8(Verdict& v) {
    const Gbm g;
    const auto paths = simulate_paths(g.model, 200, StreamKey{g_seed});

    const auto mesh = train_mesh(g.model, paths, g.payoff);
    double werr = 0.0;
    for (double w : mesh.weights(0, g.params.x0)) werr = std::max(werr, std::abs(w - 1.0));
    v.check(werr <= 1e-12, "mesh w_i0(Z_0) != 1");
    v.detail << " max|w-1|=" << werr;

    const auto local = train_local(paths, g.payoff, 1e12);
    double lerr = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
        double mean = 0.0;
        for (double z : local.zeta(j)) mean += z;
        mean /= static_cast<double>(paths.count());
        lerr = std::max(lerr, std::abs(local.continuation(j, std::vector<double>{80, 90, 100, 110, 120}) - mean));
    }
    v.check(lerr <= 1e-9, "local huge-bandwidth mean");
    v.detail << "; local mean err=" << lerr;

    const auto gpaths = simulate_paths(g.model, 2000, StreamKey{g_seed}.with_level(8));
    const auto glob = train_global(gpaths, g.payoff, default_global_basis(5, 2, 100.0, g.payoff));
    double orth = 0.0;
    for (std::size_t j = 1; j < 3; ++j) {
        double scale = 0.0;
        for (double z : glob.zeta(j)) scale += z * z;
        for (std::size_t q = 0; q < glob.basis().size(); ++q) {
            double inner = 0.0, norm = 0.0;
            for (std::size_t i = 0; i < gpaths.count(); ++i) {
                const auto x = gpaths.state(i, j);
                const double psi = glob.basis().functions[q](j, x);
                inner += psi * (glob.zeta(j)[i] - glob.continuation(j, x));
                norm += psi * psi;
            }
            orth = std::max(orth, std::abs(inner) / std::sqrt(norm * scale));
        }
    }
    v.check(orth <= 1e-7, "global residual orthogonality");
    v.detail << "; global relative residual inner product=" << orth;

    auto trainer = [&](const PathSet& s) { return train_mesh(g.model, s, g.payoff); };
    const StreamKey key{hash_combine(g_seed, 8)};
    {
        const std::vector<std::size_t> ks{20}, ns{500};
        const auto c = train_coupled(std::span<const std::size_t>(ks), g.model, trainer, key);
        const auto ml = price_multilevel(c, std::span<const std::size_t>(ns), g.model, g.payoff, key);
        const auto est = trainer(simulate_paths(g.model, 20, key.with_purpose(Purpose::training).with_level(0)));
        const auto sl = price_single_level(est, g.model, g.payoff, 500, key.with_purpose(Purpose::testing).with_level(0));
        v.check(ml.value == sl.value, "L=0 multilevel != single level");
        v.detail << "; L=0 ml=" << ml.value << " single=" << sl.value;
    }
    {
        const std::vector<std::size_t> ks{15, 15, 15}, ns{300, 100, 100};
        const auto c = train_coupled(std::span<const std::size_t>(ks), g.model, trainer, key);
        const auto ml = price_multilevel(c, std::span<const std::size_t>(ns), g.model, g.payoff, key);
        bool zero = true;
        for (std::size_t l = 1; l < 3; ++l) zero = zero && ml.levels[l].mean == 0.0 && ml.levels[l].variance == 0.0;
        v.check(zero && ml.value == ml.levels[0].mean, "degenerate coupling corrections nonzero");
        v.detail << "; degenerate corrections zero=" << (zero ? "yes" : "no");
    }

    using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
    ModelParams p1;
    p1.d = 1;
    p1.x0 = {100.0};
    const double one = GK::integrate(
        [&](double y) {
            return transition_density(2, std::vector<double>{90.0}, std::vector<double>{y}, p1, g.grid);
        },
        1e-6, 2000.0, 20, 1e-12);
    ModelParams p2;
    p2.d = 2;
    p2.x0 = {100.0, 100.0};
    const double two = GK::integrate(
        [&](double a) {
            return GK::integrate(
                [&](double b) {
                    return transition_density(1, std::vector<double>{100.0, 120.0}, std::vector<double>{a, b}, p2,
                                              g.grid);
                },
                1e-6, 2000.0, 15, 1e-11);
        },
        1e-6, 2000.0, 15, 1e-11);
    v.check(std::abs(one - 1.0) <= 1e-9 && std::abs(two - 1.0) <= 1e-8, "density normalization");
    v.detail << "; density integrals " << one << ", " << two;

    auto cfg = make_config(KeyValues::parse_string("epsilon = 0.24, 0.12\nrepetitions = 4\nreference_value = 25\n"));
    auto run_with = [&](std::size_t threads, Mode mode) {
        cfg.threads = threads;
        cfg.mode = mode;
        if (mode == Mode::ml) cfg.epsilons = {5.0, 2.5};
        const auto st = run_mse_study(cfg);
        std::vector<double> out;
        for (const auto& r : st.rows) out.push_back(r.mean);
        return out;
    };
    const bool det = run_with(1, Mode::single) == run_with(4, Mode::single) && run_with(1, Mode::ml) == run_with(3, Mode::ml);
    v.check(det, "results depend on thread count");
    v.detail << "; thread-count determinism=" << (det ? "yes" : "no");
}

} // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--criterion" && i + 1 < argc) {
            only = std::atoi(argv[++i]);
        } else if (a == "--seed" && i + 1 < argc) {
            g_seed = std::strtoull(argv[++i], nullptr, 10);
        } else {
            std::cerr << "usage: acceptance [--criterion N] [--seed S]\n";
            return 2;
        }
    }
    const std::vector<std::function<void(Verdict&)>> all{criterion_1, criterion_2, criterion_3, criterion_4,
                                                        criterion_5, criterion_6, criterion_7, criterion_8};
    if (only < 0 || only > static_cast<int>(all.size())) {
        std::cerr << "no such criterion: " << only << '\n';
        return 2;
    }
    bool ok = true;
    for (std::size_t c = 1; c <= all.size(); ++c) {
        if (only && static_cast<int>(c) != only) continue;
        Verdict v;
        try {
            all[c - 1](v);
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail << " [exception: " << e.what() << "]";
        }
        std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << c << ":" << v.detail.str() << std::endl;
        ok = ok && v.pass;
    }
    return ok ? 0 : 1;
}
