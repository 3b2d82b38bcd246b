#include "mvc/transport.hpp"

#include "mvc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mvc {

EmpiricalMeasure::EmpiricalMeasure(PointCloud p, std::vector<double> w) : points(std::move(p)), weights(std::move(w)) {
    check();
}

bool EmpiricalMeasure::is_uniform() const {
    if (weights.empty()) return true;
    const double u = 1.0 / size();
    return std::all_of(weights.begin(), weights.end(), [u](double w) { return std::abs(w - u) <= 1e-15; });
}

void EmpiricalMeasure::check() const {
    if (size() < 1) throw Error("empirical measure is empty");
    if (!points.all_finite()) throw Error("empirical measure has non-finite points");
    if (weights.empty()) return;
    if (static_cast<int>(weights.size()) != size()) throw Error("weight count does not match point count");
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw Error("negative weight in empirical measure");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw Error("weights do not sum to one");
}

std::string to_string(TransportMethod m) {
    switch (m) {
    case TransportMethod::sorted_1d: return "sorted_1d";
    case TransportMethod::exact_assignment: return "exact_assignment";
    case TransportMethod::subsampled: return "subsampled";
    case TransportMethod::regularized: return "regularized";
    }
    return "unknown";
}

double euclidean(std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double d = x[k] - y[k];
        s += d * d;
    }
    return std::sqrt(s);
}

Assignment solve_assignment(std::span<const double> cost, int n) {
    if (n < 1 || cost.size() != static_cast<std::size_t>(n) * n) throw Error("assignment needs an n x n cost matrix");
    const double inf = std::numeric_limits<double>::infinity();
    // 1-based potentials; column 0 is the virtual source.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            const double* row = cost.data() + std::size_t(i0 - 1) * n;
            const double ui0 = u[i0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = row[j - 1] - ui0 - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if (j1 == 0) throw Error("assignment solver stalled (non-finite costs?)");
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    Assignment out;
    out.col_for_row.assign(n, -1);
    for (int j = 1; j <= n; ++j) out.col_for_row[p[j] - 1] = j - 1;
    for (int i = 0; i < n; ++i) out.total += cost[std::size_t(i) * n + out.col_for_row[i]];
    return out;
}

namespace {

struct Atom {
    double x;
    double w;
};

std::vector<Atom> sorted_atoms(const EmpiricalMeasure& m) {
    std::vector<Atom> atoms(m.size());
    const double u = 1.0 / m.size();
    for (int i = 0; i < m.size(); ++i) atoms[i] = {m.points.at(i, 0), m.weights.empty() ? u : m.weights[i]};
    std::sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) { return a.x < b.x; });
    return atoms;
}

/// Monotone coupling on the line; optimal for any convex cost of x - y.
template <class C>
double quantile_coupling(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, const C& cost) {
    const auto a = sorted_atoms(mu);
    const auto b = sorted_atoms(nu);
    if (mu.is_uniform() && nu.is_uniform() && a.size() == b.size()) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += cost(a[i].x - b[i].x);
        return s / static_cast<double>(a.size());
    }
    double s = 0.0;
    std::size_t i = 0, j = 0;
    double ra = a[0].w, rb = b[0].w;
    while (i < a.size() && j < b.size()) {
        const double m = std::min(ra, rb);
        s += m * cost(a[i].x - b[j].x);
        ra -= m;
        rb -= m;
        if (ra <= 0.0) {
            if (++i < a.size()) ra = a[i].w;
        }
        if (rb <= 0.0) {
            if (++j < b.size()) rb = b[j].w;
        }
    }
    return s;
}

void require_compatible(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    mu.check();
    nu.check();
    if (mu.dim() != nu.dim()) throw Error("transport between measures of different dimension");
}

void require_exact_shape(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    if (mu.size() != nu.size()) {
        throw Error("exact transport needs equal sizes (got " + std::to_string(mu.size()) + " and " +
                    std::to_string(nu.size()) + ")");
    }
    if (!mu.is_uniform() || !nu.is_uniform()) throw Error("exact transport needs uniform weights");
}

template <class Cost>
TransportResult exact_assignment(const PointCloud& a, const PointCloud& b, const Cost& cost, bool keep) {
    const int n = a.size();
    std::vector<double> c(std::size_t(n) * n);
    for (int i = 0; i < n; ++i) {
        const auto ri = a.row(i);
        for (int j = 0; j < n; ++j) c[std::size_t(i) * n + j] = cost(ri, b.row(j));
    }
    Assignment as = solve_assignment(c, n);
    TransportResult r;
    r.method = TransportMethod::exact_assignment;
    r.value = as.total / n;
    if (keep) r.matching = std::move(as.col_for_row);
    return r;
}

PointCloud gather(const PointCloud& src, const std::vector<int>& idx, std::size_t from, int count) {
    PointCloud out(count, src.dim());
    for (int i = 0; i < count; ++i) {
        const auto s = src.row(idx[from + i]);
        std::copy(s.begin(), s.end(), out.row(i).begin());
    }
    return out;
}

void shuffle(std::vector<int>& idx, CounterStream& rng) {
    for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.uniform() * (i + 1));
        std::swap(idx[i], idx[std::min(j, i)]);
    }
}

/// Average of exact solves on blocks of `subsample_size` points. Blocks within one
/// shuffle are disjoint; further shuffles are drawn until `subsample_count` blocks exist.
template <class Cost>
TransportResult subsampled(const PointCloud& a, const PointCloud& b, const Cost& cost, const TransportOptions& o) {
    const int n = a.size();
    const int size = std::min(o.subsample_size, n);
    const int per_shuffle = n / size;
    CounterStream ra(o.seed, 0x5B01), rb(o.seed, 0x5B02);
    std::vector<int> ia(n), ib(n);
    std::vector<double> values;
    values.reserve(o.subsample_count);
    while (static_cast<int>(values.size()) < o.subsample_count) {
        std::iota(ia.begin(), ia.end(), 0);
        std::iota(ib.begin(), ib.end(), 0);
        shuffle(ia, ra);
        shuffle(ib, rb);
        for (int k = 0; k < per_shuffle && static_cast<int>(values.size()) < o.subsample_count; ++k) {
            const PointCloud sa = gather(a, ia, std::size_t(k) * size, size);
            const PointCloud sb = gather(b, ib, std::size_t(k) * size, size);
            values.push_back(exact_assignment(sa, sb, cost, false).value);
        }
    }
    const double k = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / k;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    TransportResult r;
    r.method = TransportMethod::subsampled;
    r.value = mean;
    r.subsamples = static_cast<int>(values.size());
    r.std_error = values.size() > 1 ? std::sqrt(ss / (k - 1.0) / k) : 0.0;
    return r;
}

template <class Cost>
TransportResult general(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, const Cost& cost,
                        const TransportOptions& opts) {
    require_exact_shape(mu, nu);
    if (mu.size() <= opts.exact_cap) return exact_assignment(mu.points, nu.points, cost, opts.keep_matching);
    return subsampled(mu.points, nu.points, cost, opts);
}

} // namespace

TransportResult w1(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, const TransportOptions& opts) {
    require_compatible(mu, nu);
    if (mu.dim() == 1) {
        TransportResult r;
        r.method = TransportMethod::sorted_1d;
        r.value = quantile_coupling(mu, nu, [](double z) { return std::abs(z); });
        return r;
    }
    return general(mu, nu, euclidean, opts);
}

TransportResult w_power(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p, const TransportOptions& opts) {
    if (!(p >= 1.0)) throw Error("W_p needs p >= 1");
    require_compatible(mu, nu);
    TransportResult r;
    if (mu.dim() == 1) {
        r.method = TransportMethod::sorted_1d;
        r.value = quantile_coupling(mu, nu, [p](double z) { return std::pow(std::abs(z), p); });
    } else {
        r = general(mu, nu, [p](std::span<const double> x, std::span<const double> y) {
            return std::pow(euclidean(x, y), p);
        }, opts);
        r.std_error = r.std_error / (p * std::pow(std::max(r.value, 1e-300), 1.0 - 1.0 / p));
    }
    r.value = std::pow(r.value, 1.0 / p);
    return r;
}

TransportResult w_cost(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, const CostFn& cost,
                       const TransportOptions& opts) {
    require_compatible(mu, nu);
    return general(mu, nu, cost, opts);
}

double brute_force_transport(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, const CostFn& cost) {
    require_compatible(mu, nu);
    require_exact_shape(mu, nu);
    const int n = mu.size();
    if (n > 8) throw Error("brute-force transport refuses N > 8");
    std::vector<double> c(std::size_t(n) * n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) c[std::size_t(i) * n + j] = cost(mu.points.row(i), nu.points.row(j));
    }
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += c[std::size_t(i) * n + perm[i]];
        best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best / n;
}

} // namespace mvc
