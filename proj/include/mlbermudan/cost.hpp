#pragma once

#include <atomic>
#include <cstdint>

namespace mlb {

/// Relaxed atomic counter that stays copyable.
class OpCounter {
public:
    OpCounter() = default;
    OpCounter(const OpCounter& other) noexcept : value_(other.value()) {}
    OpCounter& operator=(const OpCounter& other) noexcept {
        value_.store(other.value(), std::memory_order_relaxed);
        return *this;
    }

    void add(std::uint64_t n) const noexcept { value_.fetch_add(n, std::memory_order_relaxed); }
    std::uint64_t value() const noexcept { return value_.load(std::memory_order_relaxed); }
    void reset() const noexcept { value_.store(0, std::memory_order_relaxed); }

private:
    mutable std::atomic<std::uint64_t> value_{0};
};

/// Work accounting. `*_units` apply the unit formulas k^{1+kappa1} per
/// training call and k^{kappa2} per evaluation call; `*_ops` are loop-trip
/// counters measured inside the estimators. Evaluation units and ops agree
/// exactly; training ops differ from units by the date-count factor.
struct CostTally {
    double train_units = 0.0;
    double eval_units = 0.0;
    std::uint64_t train_ops = 0;
    std::uint64_t eval_ops = 0;
    std::uint64_t train_calls = 0;
    std::uint64_t eval_calls = 0;
    double wall_seconds = 0.0;

    double total_units() const noexcept { return train_units + eval_units; }
    std::uint64_t total_ops() const noexcept { return train_ops + eval_ops; }

    CostTally& operator+=(const CostTally& o) noexcept {
        train_units += o.train_units;
        eval_units += o.eval_units;
        train_ops += o.train_ops;
        eval_ops += o.eval_ops;
        train_calls += o.train_calls;
        eval_calls += o.eval_calls;
        wall_seconds += o.wall_seconds;
        return *this;
    }
};

} // namespace mlb
