#pragma once

// Global least-squares regression on a fixed basis psi_1..psi_M. For each
// date the coefficients solve B alpha = b with
//   B_pq = (1/k) sum_i psi_p(Z_j^i) psi_q(Z_j^i),
//   b_p  = (1/k) sum_i psi_p(Z_j^i) zeta_{k,j+1}(Z_{j+1}^i),
// via a complete orthogonal decomposition, so singular B yields the
// minimum-norm least-squares solution.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "mlbermudan/cost.hpp"
#include "mlbermudan/estimator.hpp"
#include "mlbermudan/model.hpp"
#include "mlbermudan/payoff.hpp"

namespace mlb {

using BasisFunction = std::function<double(std::size_t, std::span<const double>)>;

struct Basis {
    std::vector<BasisFunction> functions;
    std::size_t size() const noexcept { return functions.size(); }
};

inline Basis constant_basis() {
    return {{[](std::size_t, std::span<const double>) { return 1.0; }}};
}

/// All monomials of total degree <= degree in z / scale, in graded order.
inline Basis polynomial_basis(std::size_t d, std::size_t degree, double scale = 1.0) {
    if (d < 1) throw std::invalid_argument("polynomial_basis: d must be >= 1");
    Basis basis;
    std::vector<std::size_t> powers(d, 0);
    std::function<void(std::size_t, std::size_t)> emit = [&](std::size_t coord, std::size_t remaining) {
        if (coord + 1 == d) {
            powers[coord] = remaining;
            basis.functions.push_back([p = powers, scale](std::size_t, std::span<const double> z) {
                double v = 1.0;
                for (std::size_t c = 0; c < p.size(); ++c)
                    for (std::size_t e = 0; e < p[c]; ++e) v *= z[c] / scale;
                return v;
            });
            return;
        }
        for (std::size_t e = remaining + 1; e-- > 0;) {
            powers[coord] = e;
            emit(coord + 1, remaining - e);
        }
    };
    for (std::size_t total = 0; total <= degree; ++total) emit(0, total);
    return basis;
}

/// Polynomials of total degree <= degree plus the payoff g_j itself.
template <Payoff P>
Basis default_global_basis(std::size_t d, std::size_t degree, double scale, P payoff) {
    Basis basis = polynomial_basis(d, degree, scale);
    basis.functions.push_back([g = std::move(payoff), scale](std::size_t j, std::span<const double> z) {
        return static_cast<double>(g(j, z)) / scale;
    });
    return basis;
}

struct RegressionDiagnostics {
    std::size_t rank = 0;
    double condition = 0.0; // ratio of extreme eigenvalues of B; inf when singular
};

class GlobalEstimator {
public:
    template <Payoff P>
    static GlobalEstimator train(const PathSet& training, const P& payoff, Basis basis) {
        return GlobalEstimator(training, payoff, std::move(basis));
    }

    double continuation(std::size_t j, std::span<const double> z) const {
        if (j > last_) throw std::out_of_range("GlobalEstimator: date index out of range");
        if (j == last_) return 0.0;
        eval_ops_.add(basis_.size());
        return dot(j, z);
    }

    std::span<const double> coefficients(std::size_t j) const { return coef_.at(j); }
    const RegressionDiagnostics& diagnostics(std::size_t j) const { return diag_.at(j); }
    const Basis& basis() const noexcept { return basis_; }
    std::span<const double> zeta(std::size_t j) const { return zeta_.at(j); }

    std::size_t last_date() const noexcept { return last_; }
    std::size_t training_size() const noexcept { return k_; }
    double eval_units() const noexcept { return static_cast<double>(basis_.size()); }
    /// k M^2, i.e. k^{1+2 rho} for M = k^rho; train_ops() counts J k M^2.
    double train_units() const noexcept { return unit_train_cost(k_, basis_.size()); }
    static double unit_train_cost(std::size_t k, std::size_t m) {
        return static_cast<double>(k) * static_cast<double>(m) * static_cast<double>(m);
    }
    std::uint64_t train_ops() const noexcept { return train_ops_; }
    std::uint64_t eval_ops() const noexcept { return eval_ops_.value(); }

    /// One row per (date, coefficient).
    void write_coefficients_csv(std::ostream& out) const {
        out << "date,index,coefficient,rank,condition\n";
        const auto old = out.precision(17);
        for (std::size_t j = 0; j < last_; ++j)
            for (std::size_t p = 0; p < coef_[j].size(); ++p)
                out << j << ',' << p << ',' << coef_[j][p] << ',' << diag_[j].rank << ',' << diag_[j].condition << '\n';
        out.precision(old);
    }

private:
    template <Payoff P>
    GlobalEstimator(const PathSet& training, const P& payoff, Basis basis)
        : basis_(std::move(basis)), k_(training.count()), last_(training.dates() - 1) {
        if (k_ < 1) throw std::invalid_argument("GlobalEstimator: need at least one training path");
        if (basis_.size() == 0) throw std::invalid_argument("GlobalEstimator: empty basis");
        const std::size_t m = basis_.size();
        coef_.assign(last_, std::vector<double>(m, 0.0));
        diag_.assign(last_, {});
        zeta_.assign(last_, std::vector<double>(k_));
        Eigen::VectorXd psi(m);
        for (std::size_t jj = last_; jj-- > 0;) {
            const std::size_t j = jj;
            Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
            Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
            for (std::size_t i = 0; i < k_; ++i) {
                const auto next = training.state(i, j + 1);
                const double cont = (j + 1 == last_) ? 0.0 : dot(j + 1, next);
                const double zeta = std::max(static_cast<double>(payoff(j + 1, next)), cont);
                zeta_[j][i] = zeta;
                const auto here = training.state(i, j);
                for (std::size_t p = 0; p < m; ++p) psi[static_cast<Eigen::Index>(p)] = basis_.functions[p](j, here);
                for (Eigen::Index p = 0; p < static_cast<Eigen::Index>(m); ++p) {
                    for (Eigen::Index q = 0; q < static_cast<Eigen::Index>(m); ++q) gram(p, q) += psi[p] * psi[q];
                    rhs[p] += psi[p] * zeta;
                }
            }
            train_ops_ += static_cast<std::uint64_t>(k_) * m * m;
            gram /= static_cast<double>(k_);
            rhs /= static_cast<double>(k_);

            Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(gram);
            const Eigen::VectorXd alpha = cod.solve(rhs);
            for (std::size_t p = 0; p < m; ++p) coef_[j][p] = alpha[static_cast<Eigen::Index>(p)];

            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
            const double lo = std::abs(eig.eigenvalues().minCoeff());
            const double hi = std::abs(eig.eigenvalues().maxCoeff());
            diag_[j].rank = static_cast<std::size_t>(cod.rank());
            diag_[j].condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
        }
    }

    double dot(std::size_t j, std::span<const double> z) const {
        double acc = 0.0;
        for (std::size_t p = 0; p < basis_.size(); ++p) acc += coef_[j][p] * basis_.functions[p](j, z);
        return acc;
    }

    Basis basis_;
    std::size_t k_;
    std::size_t last_;
    std::vector<std::vector<double>> coef_;
    std::vector<RegressionDiagnostics> diag_;
    std::vector<std::vector<double>> zeta_;
    std::uint64_t train_ops_ = 0;
    OpCounter eval_ops_;
};

template <Payoff P>
GlobalEstimator train_global(const PathSet& training, const P& payoff, Basis basis) {
    return GlobalEstimator::train(training, payoff, std::move(basis));
}

} // namespace mlb
