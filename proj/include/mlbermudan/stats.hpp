#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace mlb {

/// Pairwise summation in a fixed order; the result depends only on the input.
inline double pairwise_sum(std::span<const double> xs) {
    if (xs.size() <= 16) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

struct SampleMoments {
    std::size_t n = 0;
    double mean = 0.0;
    double variance = 0.0; // unbiased; 0 when n < 2
};

inline SampleMoments moments(std::span<const double> xs) {
    SampleMoments m;
    m.n = xs.size();
    if (m.n == 0) return m;
    m.mean = pairwise_sum(xs) / static_cast<double>(m.n);
    if (m.n < 2) return m;
    std::vector<double> sq(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dev = xs[i] - m.mean;
        sq[i] = dev * dev;
    }
    m.variance = pairwise_sum(sq) / static_cast<double>(m.n - 1);
    return m;
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_std_error = 0.0;
};

/// Ordinary least squares y = intercept + slope * x.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line: need >= 2 paired points");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) { mx += x[i]; my += y[i]; }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("fit_line: degenerate abscissae");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    if (x.size() > 2) {
        double rss = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double r = y[i] - f.intercept - f.slope * x[i];
            rss += r * r;
        }
        f.slope_std_error = std::sqrt(rss / (n - 2.0) / sxx);
    }
    return f;
}

/// Slope of log(y) against log(x).
inline LineFit fit_loglog(std::span<const double> x, std::span<const double> y) {
    std::vector<double> lx(x.size()), ly(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] <= 0 || y[i] <= 0) throw std::invalid_argument("fit_loglog: values must be positive");
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
    }
    return fit_line(lx, ly);
}

} // namespace mlb
