#pragma once

#include "mvc/types.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace mvc {

class QuadratureError : public Error {
  public:
    using Error::Error;
};

namespace detail {

template <class F>
double simpson_step(const F& f, double a, double fa, double b, double fb, double m, double fm, double whole,
                    double tol, int depth, int& evals) {
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    evals += 2;
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    if (depth <= 0 || !std::isfinite(delta)) {
        throw QuadratureError("adaptive Simpson did not converge on [" + std::to_string(a) + ", " +
                              std::to_string(b) + "]");
    }
    return simpson_step(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1, evals) +
           simpson_step(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1, evals);
}

} // namespace detail

/// Adaptive Simpson with Richardson correction to absolute tolerance `abs_tol`.
/// Throws QuadratureError when the recursion depth is exhausted.
template <class F>
double adaptive_simpson(const F& f, double a, double b, double abs_tol, int max_depth = 48) {
    if (a == b) return 0.0;
    const double m = 0.5 * (a + b);
    const double fa = f(a), fb = f(b), fm = f(m);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    int evals = 3;
    return detail::simpson_step(f, a, fa, b, fb, m, fm, whole, abs_tol, max_depth, evals);
}

/// Piecewise cubic Hermite interpolant through (x_i, y_i) with slopes d_i.
class HermiteTable {
  public:
    HermiteTable() = default;
    HermiteTable(std::vector<double> x, std::vector<double> y, std::vector<double> dy);

    double operator()(double t) const;
    double derivative(double t) const;

    /// Fritsch-Carlson limiter: rescales slopes so each cubic piece is
    /// monotone wherever the data are.
    void make_monotone();

    const std::vector<double>& nodes() const { return x_; }
    const std::vector<double>& values() const { return y_; }
    const std::vector<double>& slopes() const { return dy_; }
    double front() const { return x_.front(); }
    double back() const { return x_.back(); }
    bool empty() const { return x_.empty(); }

  private:
    std::size_t locate(double t) const;

    std::vector<double> x_, y_, dy_;
};

/// G(x_i) = G(x_0) + int_{x_0}^{x_i} g, with per-interval Simpson tolerance
/// `total_tol / (n - 1)`; slopes are g at the nodes.
template <class G>
HermiteTable cumulative_integral(std::span<const double> nodes, const G& g, double total_tol, double start = 0.0) {
    const std::size_t n = nodes.size();
    std::vector<double> y(n), dy(n);
    y[0] = start;
    dy[0] = g(nodes[0]);
    const double tol = total_tol / static_cast<double>(n > 1 ? n - 1 : 1);
    for (std::size_t i = 1; i < n; ++i) {
        y[i] = y[i - 1] + adaptive_simpson(g, nodes[i - 1], nodes[i], tol);
        dy[i] = g(nodes[i]);
    }
    return HermiteTable(std::vector<double>(nodes.begin(), nodes.end()), std::move(y), std::move(dy));
}

/// Smallest point in [lo, hi] where a monotone predicate turns true, to `tol`.
/// Requires pred(hi) true; returns lo when pred(lo) already holds.
template <class P>
double bisect_predicate(const P& pred, double lo, double hi, double tol) {
    if (pred(lo)) return lo;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (pred(mid)) hi = mid;
        else lo = mid;
    }
    return hi;
}

/// Uniform grid with `n` points on [a, b] merged with the sorted extra points.
std::vector<double> merged_grid(double a, double b, int n, std::vector<double> extra);

} // namespace mvc
