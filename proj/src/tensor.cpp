#include "autoselect/tensor.hpp"

#include <algorithm>
#include <cstring>

namespace autoselect {

Tensor::Tensor(std::vector<Index> shape, Eigen::ArrayXd data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    for (Index e : shape_) {
        if (e <= 0) throw ConfigError("tensor: nonpositive extent");
    }
    if (shape_product(shape_) != data_.size())
        throw ConfigError("tensor: shape/data size mismatch");
}

Tensor Tensor::zeros(std::vector<Index> shape) {
    Index n = shape_product(shape);
    return Tensor(std::move(shape), Eigen::ArrayXd::Zero(n));
}

Tensor Tensor::scalar(double v) {
    Eigen::ArrayXd d(1);
    d[0] = v;
    return Tensor({1}, std::move(d));
}

Tensor Tensor::from_vector(const Vector& v) {
    return Tensor({v.size()}, v.array());
}

Tensor Tensor::from_matrix(const Matrix& m) {
    Eigen::ArrayXd d(m.size());
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) d[i * m.cols() + j] = m(i, j);
    return Tensor({m.rows(), m.cols()}, std::move(d));
}

Matrix Tensor::to_matrix() const {
    if (rank() == 1) {
        Matrix m(size(), 1);
        m.col(0) = data_.matrix();
        return m;
    }
    if (rank() != 2) throw ConfigError("tensor: to_matrix needs rank 1 or 2");
    Matrix m(shape_[0], shape_[1]);
    for (Index i = 0; i < shape_[0]; ++i)
        for (Index j = 0; j < shape_[1]; ++j) m(i, j) = at2(i, j);
    return m;
}

Vector Tensor::to_vector() const {
    if (rank() != 1) throw ConfigError("tensor: to_vector needs rank 1");
    return data_.matrix();
}

void Tensor::require_finite(const std::string& what) const {
    if (!all_finite()) throw NumericError("non-finite values in " + what);
}

Tensor& Tensor::operator+=(const Tensor& o) {
    if (!same_shape(o)) throw ConfigError("tensor: shape mismatch in +=");
    data_ += o.data_;
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& o) {
    if (!same_shape(o)) throw ConfigError("tensor: shape mismatch in -=");
    data_ -= o.data_;
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    data_ *= s;
    return *this;
}

Tensor& Tensor::axpy(double s, const Tensor& o) {
    if (!same_shape(o)) throw ConfigError("tensor: shape mismatch in axpy");
    data_ += s * o.data_;
    return *this;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    if (a.size() == 0) return true;
    return std::memcmp(a.raw().data(), b.raw().data(),
                       sizeof(double) * static_cast<size_t>(a.size())) == 0;
}

double max_rel_err(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                   double floor) {
    if (a.size() != b.size()) throw ConfigError("max_rel_err: list size mismatch");
    double worst = 0.0;
    for (size_t k = 0; k < a.size(); ++k) {
        if (!a[k].same_shape(b[k])) throw ConfigError("max_rel_err: shape mismatch");
        for (Index i = 0; i < a[k].size(); ++i)
            worst = std::max(worst, rel_err(a[k][i], b[k][i], floor));
    }
    return worst;
}

} // namespace autoselect
