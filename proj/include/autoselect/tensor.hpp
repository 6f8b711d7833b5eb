#pragma once

#include <Eigen/Dense>
#include <initializer_list>
#include <string>
#include <vector>

#include "autoselect/errors.hpp"

namespace autoselect {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Dense n-dimensional array of doubles, stored flat in row-major order
/// (last index fastest). Rank-2 tensors map onto Eigen matrices; everything
/// numeric in the engine is either a Tensor or an Eigen view of one.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<Index> shape, Eigen::ArrayXd data);

    static Tensor zeros(std::vector<Index> shape);
    static Tensor scalar(double v);
    static Tensor from_vector(const Vector& v);
    static Tensor from_matrix(const Matrix& m); // row-major flattening

    const std::vector<Index>& shape() const { return shape_; }
    Index rank() const { return static_cast<Index>(shape_.size()); }
    Index size() const { return data_.size(); }
    Index extent(Index axis) const { return shape_.at(static_cast<size_t>(axis)); }

    double& operator[](Index i) { return data_[i]; }
    double operator[](Index i) const { return data_[i]; }
    Eigen::ArrayXd& raw() { return data_; }
    const Eigen::ArrayXd& raw() const { return data_; }

    // flat index of [i, j] / [i, j, k]; bounds unchecked beyond asserts
    double at2(Index i, Index j) const { return data_[i * shape_[1] + j]; }
    double at3(Index i, Index j, Index k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double& at3(Index i, Index j, Index k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    Matrix to_matrix() const;  // rank 2, or rank 1 as a column
    Vector to_vector() const;  // rank 1

    bool all_finite() const { return data_.isFinite().all(); }
    /// Throws NumericError naming `what` if any entry is NaN/Inf.
    void require_finite(const std::string& what) const;

    double inf_norm() const { return size() == 0 ? 0.0 : data_.abs().maxCoeff(); }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    Tensor& operator+=(const Tensor& o);
    Tensor& operator-=(const Tensor& o);
    Tensor& operator*=(double s);
    /// this += s * o
    Tensor& axpy(double s, const Tensor& o);

private:
    std::vector<Index> shape_;
    Eigen::ArrayXd data_;
};

inline Index shape_product(const std::vector<Index>& shape) {
    Index n = 1;
    for (Index e : shape) n *= e;
    return n;
}

// Equal shapes and bitwise-equal payloads.
bool bitwise_equal(const Tensor& a, const Tensor& b);

/// Relative error with floor: |a-b| / max(|a|,|b|,floor).
inline double rel_err(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Max elementwise rel_err over two equally-shaped tensor lists.
double max_rel_err(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                   double floor = 1e-8);

} // namespace autoselect
