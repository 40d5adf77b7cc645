#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "mtabgen/common.hpp"

namespace mtabgen {

// Dense row-major tensor of doubles. Rank is small (<= 3 in practice).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<size_t> shape) : shape_(std::move(shape)) {
        size_t n = 1;
        for (size_t e : shape_) {
            require(e > 0, "Tensor: zero extent");
            n *= e;
        }
        data_.assign(n, 0.0);
    }

    static Tensor zeros(std::vector<size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<size_t> shape, double v) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) x = v;
        return t;
    }

    static Tensor from(std::vector<size_t> shape, std::vector<double> values) {
        Tensor t;
        t.shape_ = std::move(shape);
        size_t n = 1;
        for (size_t e : t.shape_) n *= e;
        require(n == values.size(), "Tensor::from: value count does not match shape");
        t.data_ = std::move(values);
        return t;
    }

    static Tensor scalar(double v) { return from({1}, {v}); }

    const std::vector<size_t>& shape() const { return shape_; }
    size_t rank() const { return shape_.size(); }
    size_t size() const { return data_.size(); }
    size_t extent(size_t axis) const { return shape_.at(axis); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    double& at2(size_t i, size_t j) { return data_[i * shape_[1] + j]; }
    double at2(size_t i, size_t j) const { return data_[i * shape_[1] + j]; }

    double& at3(size_t i, size_t j, size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at3(size_t i, size_t j, size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    // Number of rows when the last axis is treated as the vector dimension.
    size_t rows() const {
        require(!shape_.empty(), "Tensor: rank 0");
        size_t r = 1;
        for (size_t i = 0; i + 1 < shape_.size(); ++i) r *= shape_[i];
        return r;
    }
    size_t cols() const { return shape_.back(); }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) {
        for (double& x : data_) x = v;
    }

    std::string shape_str() const;

private:
    std::vector<size_t> shape_;
    std::vector<double> data_;
};

// C[R x M] += A[R x N] * B[N x M]
void matmul_acc(const double* a, const double* b, double* c, size_t r, size_t n, size_t m);
// C[R x M] += A[R x N] * B^T, B stored [M x N]
void matmul_bt_acc(const double* a, const double* b, double* c, size_t r, size_t n, size_t m);
// C[N x M] += A^T * B with A [R x N], B [R x M]
void matmul_at_acc(const double* a, const double* b, double* c, size_t r, size_t n, size_t m);

}  // namespace mtabgen
