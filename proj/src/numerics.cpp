#include "mvc/numerics.hpp"

#include <algorithm>

namespace mvc {

HermiteTable::HermiteTable(std::vector<double> x, std::vector<double> y, std::vector<double> dy)
    : x_(std::move(x)), y_(std::move(y)), dy_(std::move(dy)) {
    if (x_.size() < 2 || x_.size() != y_.size() || x_.size() != dy_.size()) {
        throw Error("HermiteTable needs at least two nodes with matching values and slopes");
    }
    for (std::size_t i = 1; i < x_.size(); ++i) {
        if (!(x_[i] > x_[i - 1])) throw Error("HermiteTable nodes must be strictly increasing");
    }
}

std::size_t HermiteTable::locate(double t) const {
    if (t <= x_.front()) return 0;
    if (t >= x_.back()) return x_.size() - 2;
    const auto it = std::upper_bound(x_.begin(), x_.end(), t);
    return static_cast<std::size_t>(it - x_.begin()) - 1;
}

double HermiteTable::operator()(double t) const {
    const std::size_t i = locate(t);
    const double h = x_[i + 1] - x_[i];
    const double s = (t - x_[i]) / h;
    const double s2 = s * s, s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1;
    const double h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2;
    const double h11 = s3 - s2;
    return h00 * y_[i] + h10 * h * dy_[i] + h01 * y_[i + 1] + h11 * h * dy_[i + 1];
}

double HermiteTable::derivative(double t) const {
    const std::size_t i = locate(t);
    const double h = x_[i + 1] - x_[i];
    const double s = (t - x_[i]) / h;
    const double s2 = s * s;
    const double d00 = (6 * s2 - 6 * s) / h;
    const double d10 = 3 * s2 - 4 * s + 1;
    const double d01 = (-6 * s2 + 6 * s) / h;
    const double d11 = 3 * s2 - 2 * s;
    return d00 * y_[i] + d10 * dy_[i] + d01 * y_[i + 1] + d11 * dy_[i + 1];
}

void HermiteTable::make_monotone() {
    const std::size_t n = x_.size();
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double secant = (y_[i + 1] - y_[i]) / (x_[i + 1] - x_[i]);
        if (secant == 0.0) {
            dy_[i] = 0.0;
            dy_[i + 1] = 0.0;
            continue;
        }
        double a = dy_[i] / secant;
        double b = dy_[i + 1] / secant;
        if (a < 0.0) dy_[i] = a = 0.0;
        if (b < 0.0) dy_[i + 1] = b = 0.0;
        const double r2 = a * a + b * b;
        if (r2 > 9.0) {
            const double tau = 3.0 / std::sqrt(r2);
            dy_[i] = tau * a * secant;
            dy_[i + 1] = tau * b * secant;
        }
    }
}

std::vector<double> merged_grid(double a, double b, int n, std::vector<double> extra) {
    std::vector<double> grid;
    grid.reserve(static_cast<std::size_t>(n) + extra.size());
    const double spacing = (b - a) / (n - 1);
    for (int i = 0; i < n; ++i) grid.push_back(a + spacing * i);
    grid.back() = b;
    for (double e : extra) {
        if (!(e > a + 1e-9 * (b - a) && e < b - 1e-9 * (b - a))) continue;
        // Snap a nearby uniform node onto the extra point instead of creating a sliver interval.
        const auto k = static_cast<std::size_t>(std::llround((e - a) / spacing));
        if (k > 0 && k + 1 < grid.size() && std::abs(grid[k] - e) < 1e-3 * spacing) grid[k] = e;
        else grid.push_back(e);
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    return grid;
}

} // namespace mvc
