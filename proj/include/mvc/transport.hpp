#pragma once

#include "mvc/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mvc {

/// Weighted point cloud. An empty weight vector means uniform weights.
struct EmpiricalMeasure {
    PointCloud points;
    std::vector<double> weights;

    EmpiricalMeasure() = default;
    EmpiricalMeasure(PointCloud p) : points(std::move(p)) {}  // NOLINT: uniform law of a cloud
    EmpiricalMeasure(PointCloud p, std::vector<double> w);

    int size() const { return points.size(); }
    int dim() const { return points.dim(); }
    bool is_uniform() const;
    /// Throws mvc::Error when weights are negative, do not sum to one, or points are not finite.
    void check() const;
};

enum class TransportMethod { sorted_1d, exact_assignment, subsampled, regularized };

std::string to_string(TransportMethod m);

struct TransportResult {
    double value = 0.0;
    TransportMethod method = TransportMethod::exact_assignment;
    /// matching[i] = index in nu paired with point i of mu (exact equal-size runs).
    std::optional<std::vector<int>> matching;
    double gap = 0.0;        ///< optimality gap bound; 0 for exact methods
    double std_error = 0.0;  ///< subsampled runs: standard error of the mean estimate
    int subsamples = 0;
};

using CostFn = std::function<double(std::span<const double> x, std::span<const double> y)>;

struct TransportOptions {
    int exact_cap = 1024;
    int subsample_count = 32;
    int subsample_size = 512;
    std::uint64_t seed = 0x5eedULL;
    bool keep_matching = false;
};

/// Result of a square linear assignment problem.
struct Assignment {
    double total = 0.0;
    std::vector<int> col_for_row;
};

/// Minimum-cost perfect matching on a row-major n x n cost matrix
/// (shortest augmenting paths with dual potentials, O(n^3)).
Assignment solve_assignment(std::span<const double> cost, int n);

/// Euclidean W1. d = 1 is solved exactly by monotone (quantile) coupling and
/// allows unequal sizes; d >= 2 uses exact assignment up to the cap and a
/// subsample average above it.
TransportResult w1(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, const TransportOptions& opts = {});

/// W_p with ground cost |x - y|^p, returned as the p-th root of the optimal mean cost.
TransportResult w_power(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p,
                        const TransportOptions& opts = {});

/// Optimal mean cost under an arbitrary ground cost (metric or semi-metric).
TransportResult w_cost(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, const CostFn& cost,
                       const TransportOptions& opts = {});

/// Exact minimum over all N! matchings; test oracle, refuses N > 8.
double brute_force_transport(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, const CostFn& cost);

/// |x - y|.
double euclidean(std::span<const double> x, std::span<const double> y);

} // namespace mvc
