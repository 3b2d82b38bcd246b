#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// N points in R^d, stored row-major.
class PointCloud {
  public:
    PointCloud() = default;
    PointCloud(int n, int dim) : n_(n), dim_(dim), data_(static_cast<std::size_t>(n) * dim, 0.0) {}
    PointCloud(int n, int dim, std::vector<double> data);

    int size() const { return n_; }
    int dim() const { return dim_; }

    std::span<const double> row(int i) const { return {data_.data() + std::size_t(i) * dim_, std::size_t(dim_)}; }
    std::span<double> row(int i) { return {data_.data() + std::size_t(i) * dim_, std::size_t(dim_)}; }

    Eigen::Map<const Vector> point(int i) const { return Eigen::Map<const Vector>(data_.data() + std::size_t(i) * dim_, dim_); }
    Eigen::Map<Vector> point(int i) { return Eigen::Map<Vector>(data_.data() + std::size_t(i) * dim_, dim_); }

    double& at(int i, int k) { return data_[std::size_t(i) * dim_ + k]; }
    double at(int i, int k) const { return data_[std::size_t(i) * dim_ + k]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    /// Mean of the rows.
    Vector mean() const;
    bool all_finite() const;

    /// Points from a list of coordinate rows.
    static PointCloud from_rows(const std::vector<std::vector<double>>& rows);

  private:
    int n_ = 0;
    int dim_ = 0;
    std::vector<double> data_;
};

} // namespace mvc
