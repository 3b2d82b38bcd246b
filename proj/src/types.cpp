#include "mvc/types.hpp"

#include <cmath>

namespace mvc {

PointCloud::PointCloud(int n, int dim, std::vector<double> data) : n_(n), dim_(dim), data_(std::move(data)) {
    if (n < 0 || dim < 1 || data_.size() != static_cast<std::size_t>(n) * dim) {
        throw Error("PointCloud: data size does not match n x d");
    }
}

Vector PointCloud::mean() const {
    Vector m = Vector::Zero(dim_);
    for (int i = 0; i < n_; ++i) m += point(i);
    if (n_ > 0) m /= static_cast<double>(n_);
    return m;
}

bool PointCloud::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

PointCloud PointCloud::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw Error("PointCloud::from_rows: no rows");
    const int dim = static_cast<int>(rows.front().size());
    PointCloud pc(static_cast<int>(rows.size()), dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (static_cast<int>(rows[i].size()) != dim) throw Error("PointCloud::from_rows: ragged rows");
        for (int k = 0; k < dim; ++k) pc.at(static_cast<int>(i), k) = rows[i][k];
    }
    return pc;
}

} // namespace mvc
