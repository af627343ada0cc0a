#pragma once

// Markov chain Z_j = X_{t_j} on an exercise grid: exact GBM simulation, its
// lognormal transition density, and the path container shared by all
// continuation-value estimators.

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlbermudan/parallel.hpp"
#include "mlbermudan/rng.hpp"

namespace mlb {

struct ModelParams {
    std::size_t d = 5;
    double r = 0.05;
    double delta = 0.1;
    double sigma = 0.2;
    std::vector<double> x0 = std::vector<double>(5, 100.0);

    void validate() const {
        if (d < 1) throw std::invalid_argument("ModelParams: d must be >= 1");
        if (!(sigma >= 0.0)) throw std::invalid_argument("ModelParams: sigma must be >= 0");
        if (x0.size() != d) throw std::invalid_argument("ModelParams: x0 has " + std::to_string(x0.size()) +
                                                        " components, expected d=" + std::to_string(d));
        for (double v : x0)
            if (!(v > 0.0)) throw std::invalid_argument("ModelParams: x0 components must be > 0");
    }
};

class TimeGrid {
public:
    explicit TimeGrid(std::vector<double> times) : times_(std::move(times)) {
        if (times_.empty() || times_.front() != 0.0) throw std::invalid_argument("TimeGrid: must start at t_0 = 0");
        for (std::size_t j = 1; j < times_.size(); ++j)
            if (!(times_[j] > times_[j - 1])) throw std::invalid_argument("TimeGrid: times must be strictly increasing");
    }

    /// t_j = j T / J.
    static TimeGrid uniform(double maturity, std::size_t exercise_dates) {
        if (exercise_dates == 0) return TimeGrid({0.0});
        if (!(maturity > 0.0)) throw std::invalid_argument("TimeGrid: maturity must be > 0");
        std::vector<double> t(exercise_dates + 1);
        for (std::size_t j = 0; j <= exercise_dates; ++j)
            t[j] = maturity * static_cast<double>(j) / static_cast<double>(exercise_dates);
        return TimeGrid(std::move(t));
    }

    /// Index of the last date, J.
    std::size_t last() const noexcept { return times_.size() - 1; }
    std::size_t size() const noexcept { return times_.size(); }
    double operator[](std::size_t j) const { return times_.at(j); }
    double maturity() const noexcept { return times_.back(); }
    /// t_j - t_{j-1}
    double dt(std::size_t j) const { return times_.at(j) - times_.at(j - 1); }
    std::span<const double> times() const noexcept { return times_; }

private:
    std::vector<double> times_;
};

/// Trajectories Z_j^{(i)} in date-major layout: all points of one date are
/// contiguous. A prefix view shares storage with its parent.
class PathSet {
public:
    PathSet() = default;

    PathSet(std::size_t count, std::size_t dates, std::size_t dim, std::uint64_t seed_info = 0)
        : storage_(std::make_shared<std::vector<double>>(count * dates * dim)),
          count_(count), stride_(count), dates_(dates), dim_(dim), seed_info_(seed_info) {}

    std::size_t count() const noexcept { return count_; }
    std::size_t dates() const noexcept { return dates_; }
    std::size_t dim() const noexcept { return dim_; }
    std::uint64_t seed_info() const noexcept { return seed_info_; }

    std::span<const double> state(std::size_t path, std::size_t date) const {
        return {storage_->data() + offset(path, date), dim_};
    }
    std::span<double> mutable_state(std::size_t path, std::size_t date) {
        return {storage_->data() + offset(path, date), dim_};
    }

    /// First m trajectories, sharing the same storage.
    PathSet prefix(std::size_t m) const {
        if (m > count_) throw std::out_of_range("PathSet::prefix: larger than the set");
        PathSet p = *this;
        p.count_ = m;
        return p;
    }

    const void* storage_id() const noexcept { return storage_.get(); }

private:
    std::size_t offset(std::size_t path, std::size_t date) const {
        if (path >= count_ || date >= dates_) throw std::out_of_range("PathSet: index out of range");
        return (date * stride_ + path) * dim_;
    }

    std::shared_ptr<std::vector<double>> storage_ = std::make_shared<std::vector<double>>();
    std::size_t count_ = 0;
    std::size_t stride_ = 0;
    std::size_t dates_ = 0;
    std::size_t dim_ = 0;
    std::uint64_t seed_info_ = 0;
};

/// A Markov chain on an exercise grid that can be sampled and whose
/// transition density is known. Densities are evaluated on "prepared"
/// coordinates so that per-point transforms (logs, lattice indices) are
/// paid once per point rather than once per pair.
template <class M>
concept MarkovChain = requires(const M& m, std::size_t j, std::span<const double> x, std::span<double> out,
                               CounterRng& rng) {
    { m.dim() } -> std::convertible_to<std::size_t>;
    { m.grid() } -> std::convertible_to<const TimeGrid&>;
    { m.start() } -> std::convertible_to<std::span<const double>>;
    m.step(j, x, out, rng); // sample Z_j given Z_{j-1} = x
    { m.prepared_dim() } -> std::convertible_to<std::size_t>;
    m.prepare(j, x, out); // coordinates of a date-j state
    { m.log_density(j, x, x) } -> std::convertible_to<double>; // log p(Z_j = y | Z_{j-1} = x), prepared
};

/// One exact GBM step: x_i exp((r - delta - sigma^2/2) dt + sigma sqrt(dt) xi_i).
inline void gbm_step(std::span<const double> x, double dt, const ModelParams& params, std::span<const double> xi,
                     std::span<double> out) {
    if (!(dt > 0.0)) throw std::invalid_argument("gbm_step: dt must be > 0");
    if (x.size() != xi.size() || x.size() != out.size())
        throw std::invalid_argument("gbm_step: dimension mismatch between state and noise");
    const double drift = (params.r - params.delta - 0.5 * params.sigma * params.sigma) * dt;
    const double vol = params.sigma * std::sqrt(dt);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * std::exp(drift + vol * xi[i]);
}

inline std::vector<double> gbm_step(std::span<const double> x, double dt, const ModelParams& params,
                                    std::span<const double> xi) {
    std::vector<double> out(x.size());
    gbm_step(x, dt, params, xi, out);
    return out;
}

class GbmModel {
public:
    GbmModel(ModelParams params, TimeGrid grid) : params_(std::move(params)), grid_(std::move(grid)) {
        params_.validate();
    }

    const ModelParams& params() const noexcept { return params_; }
    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t dim() const noexcept { return params_.d; }
    std::span<const double> start() const noexcept { return params_.x0; }

    template <class Rng>
    void step(std::size_t j, std::span<const double> x, std::span<double> out, Rng& rng) const {
        std::normal_distribution<double> normal;
        const double dt = grid_.dt(j);
        const double drift = (params_.r - params_.delta - 0.5 * params_.sigma * params_.sigma) * dt;
        const double vol = params_.sigma * std::sqrt(dt);
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * std::exp(drift + vol * normal(rng));
    }

    std::size_t prepared_dim() const noexcept { return params_.d; }

    void prepare(std::size_t /*date*/, std::span<const double> x, std::span<double> out) const {
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (!(x[i] > 0.0)) throw std::invalid_argument("GbmModel: state components must be > 0");
            out[i] = std::log(x[i]);
        }
    }

    /// Log of the product lognormal density, given log-coordinates.
    double log_density(std::size_t j, std::span<const double> log_x, std::span<const double> log_y) const {
        const double dt = grid_.dt(j);
        const double s2 = params_.sigma * params_.sigma * dt;
        const double drift = (params_.r - params_.delta - 0.5 * params_.sigma * params_.sigma) * dt;
        const double norm = 0.5 * std::log(2.0 * std::numbers::pi * s2);
        double acc = 0.0;
        for (std::size_t i = 0; i < log_x.size(); ++i) {
            const double u = log_y[i] - log_x[i] - drift;
            acc -= log_y[i] + norm + u * u / (2.0 * s2);
        }
        return acc;
    }

private:
    ModelParams params_;
    TimeGrid grid_;
};

/// Density of Z_j at y given Z_{j-1} = x, 1 <= j <= J. Uses the normalised
/// lognormal density 1/(y sigma sqrt(2 pi dt)) per coordinate.
inline double transition_density(std::size_t j, std::span<const double> x, std::span<const double> y,
                                 const ModelParams& params, const TimeGrid& grid) {
    if (j < 1 || j > grid.last()) throw std::out_of_range("transition_density: date index out of range");
    if (x.size() != params.d || y.size() != params.d)
        throw std::invalid_argument("transition_density: dimension mismatch");
    if (!(params.sigma > 0.0)) throw std::invalid_argument("transition_density: sigma must be > 0");
    std::vector<double> lx(x.size()), ly(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0))
            throw std::invalid_argument("transition_density: state components must be > 0");
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
    }
    return std::exp(GbmModel(params, grid).log_density(j, lx, ly));
}

/// Simulates `count` trajectories from the model's start point. Trajectory i
/// draws from path_stream(key, i) only.
template <MarkovChain M>
PathSet simulate_paths(const M& model, std::size_t count, const StreamKey& key, std::size_t threads = 1) {
    if (count < 1) throw std::invalid_argument("simulate_paths: count must be >= 1");
    const TimeGrid& grid = model.grid();
    PathSet paths(count, grid.size(), model.dim(), key.id());
    const auto x0 = model.start();
    parallel_for(
        count,
        [&](std::size_t i) {
            CounterRng rng = path_stream(key, i);
            auto s0 = paths.mutable_state(i, 0);
            std::copy(x0.begin(), x0.end(), s0.begin());
            for (std::size_t j = 1; j < grid.size(); ++j)
                model.step(j, paths.state(i, j - 1), paths.mutable_state(i, j), rng);
        },
        threads);
    return paths;
}

inline PathSet simulate_paths(std::size_t count, const TimeGrid& grid, const ModelParams& params,
                              const StreamKey& key, std::size_t threads = 1) {
    return simulate_paths(GbmModel(params, grid), count, key, threads);
}

} // namespace mlb
