#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "mlbermudan/config.hpp"
#include "mlbermudan/parallel.hpp"
#include "mlbermudan/rng.hpp"
#include "mlbermudan/stats.hpp"

using namespace mlb;

TEST(CounterRng, MatchesReferenceSplitMixSequence) {
    // published SplitMix64 outputs for state 1234567
    CounterRng rng(1234567);
    EXPECT_EQ(rng(), 6457827717110365317ULL);
    EXPECT_EQ(rng(), 3203168211198807973ULL);
    EXPECT_EQ(rng(), 9817491932198370423ULL);
    EXPECT_EQ(rng(), 4593380528125082431ULL);
    EXPECT_EQ(rng(), 16408922859458223821ULL);
}

TEST(CounterRng, UniformIsOpenInterval) {
    CounterRng rng(0);
    double lo = 1.0, hi = 0.0, sum = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double u = rng.uniform();
        lo = std::min(lo, u);
        hi = std::max(hi, u);
        sum += u;
    }
    EXPECT_GT(lo, 0.0);
    EXPECT_LT(hi, 1.0);
    EXPECT_NEAR(sum / 100000.0, 0.5, 0.005);
}

TEST(StreamKey, FieldsSeparateStreams) {
    const StreamKey base{42};
    std::set<std::uint64_t> ids;
    for (auto p : {Purpose::training, Purpose::testing, Purpose::reference, Purpose::auxiliary})
        for (std::uint64_t l = 0; l < 4; ++l)
            for (std::uint64_t r = 0; r < 4; ++r) ids.insert(base.with_purpose(p).with_level(l).with_repetition(r).id());
    EXPECT_EQ(ids.size(), 64u);
    EXPECT_NE(StreamKey{1}.id(), StreamKey{2}.id());
    EXPECT_EQ(base.with_level(3).id(), StreamKey{42}.with_level(3).id());
}

TEST(Stats, PairwiseSumMatchesExactIntegers) {
    std::vector<double> xs(1001);
    std::iota(xs.begin(), xs.end(), 0.0);
    EXPECT_EQ(pairwise_sum(xs), 500500.0);
    EXPECT_EQ(pairwise_sum(std::span<const double>()), 0.0);
}

TEST(Stats, MomentsByHand) {
    const std::vector<double> xs{2, 4, 4, 4, 5, 5, 7, 9};
    const auto m = moments(xs);
    EXPECT_EQ(m.n, 8u);
    EXPECT_DOUBLE_EQ(m.mean, 5.0);
    EXPECT_DOUBLE_EQ(m.variance, 32.0 / 7.0);
    EXPECT_EQ(moments(std::vector<double>{3.0}).variance, 0.0);
}

TEST(Stats, LineFitRecoversExactLine) {
    const std::vector<double> x{1, 2, 3, 4, 5};
    std::vector<double> y;
    for (double v : x) y.push_back(3.0 - 0.5 * v);
    const auto f = fit_line(x, y);
    EXPECT_NEAR(f.slope, -0.5, 1e-14);
    EXPECT_NEAR(f.intercept, 3.0, 1e-14);
    EXPECT_NEAR(f.slope_std_error, 0.0, 1e-14);

    std::vector<double> px, py;
    for (double k : {16.0, 32.0, 64.0, 128.0}) {
        px.push_back(k);
        py.push_back(7.0 / k);
    }
    EXPECT_NEAR(fit_loglog(px, py).slope, -1.0, 1e-12);
    py[0] = 0.0;
    EXPECT_THROW(fit_loglog(px, py), std::invalid_argument);
    EXPECT_THROW(fit_line(std::vector<double>{1.0}, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Parallel, IndexAddressedResultsIndependentOfThreads) {
    auto run = [](std::size_t threads) {
        std::vector<double> out(1000);
        parallel_for(out.size(), [&](std::size_t i) { out[i] = path_stream(StreamKey{9}, i).uniform(); }, threads);
        return pairwise_sum(out);
    };
    const double one = run(1);
    EXPECT_EQ(one, run(3));
    EXPECT_EQ(one, run(8));
}

TEST(Parallel, PropagatesExceptions) {
    EXPECT_THROW(parallel_for(10, [](std::size_t i) { if (i == 7) throw std::runtime_error("x"); }, 4),
                 std::runtime_error);
}

TEST(Config, ParsesKeyValues) {
    const auto kv = KeyValues::parse_string("# c\n method = mesh \n epsilon = 1, 0.5,0.25 # tail\n\nR=3\n");
    EXPECT_EQ(kv.get_string("method", ""), "mesh");
    EXPECT_EQ(kv.get_doubles("epsilon", {}), (std::vector<double>{1.0, 0.5, 0.25}));
    EXPECT_EQ(kv.get_uint("R", 0), 3u);
    EXPECT_EQ(kv.get_double("missing", 1.5), 1.5);
}

TEST(Config, RejectsMalformedInput) {
    EXPECT_THROW(KeyValues::parse_string("method mesh\n"), ConfigError);
    EXPECT_THROW(KeyValues::parse_string("a = 1\na = 2\n"), ConfigError);
    EXPECT_THROW(KeyValues::parse_string(" = 1\n"), ConfigError);
    const auto kv = KeyValues::parse_string("x = abc\nn = -1\nb = maybe\n");
    EXPECT_THROW(kv.get_double("x", 0), ConfigError);
    EXPECT_THROW(kv.get_uint("n", 0), ConfigError);
    EXPECT_THROW(kv.get_bool("b", false), ConfigError);
    EXPECT_THROW(kv.require_known({"x", "n"}), ConfigError);
}

TEST(Config, MissingFileNamesPath) {
    try {
        KeyValues::load("/nonexistent/dir/run.conf");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/run.conf"), std::string::npos);
    }
}
