#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "ntc/error.hpp"

namespace ntc {

template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using ArrX = Eigen::Array<S, Eigen::Dynamic, 1>;
template <typename S>
using MatR = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense n-dimensional array with row-major flat storage.
/// 4-D tensors use N,C,H,W extent order with W innermost. The scalar type
/// selects the working precision (float at runtime, double for gradient
/// verification). Zero extents are permitted so that e.g. a 0-channel
/// operand to concat is representable.
template <typename S>
class Tensor {
public:
    using Scalar = S;

    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        check_shape();
        data_.setZero(static_cast<Eigen::Index>(count()));
    }

    Tensor(std::vector<int> shape, ArrX<S> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape();
        if (static_cast<std::int64_t>(data_.size()) != count())
            throw UsageError("tensor: data length does not match shape product");
    }

    static Tensor full(std::vector<int> shape, S value) {
        Tensor t(std::move(shape));
        t.data_.setConstant(value);
        return t;
    }

    int rank() const { return static_cast<int>(shape_.size()); }
    const std::vector<int>& shape() const { return shape_; }
    int extent(int i) const { return shape_.at(static_cast<size_t>(i)); }
    std::int64_t size() const { return data_.size(); }

    ArrX<S>& raw() { return data_; }
    const ArrX<S>& raw() const { return data_; }

    S* data() { return data_.data(); }
    const S* data() const { return data_.data(); }

    // 4-D accessors; callers guarantee rank 4.
    S& at(int n, int c, int h, int w) { return data_[offset4(n, c, h, w)]; }
    S at(int n, int c, int h, int w) const { return data_[offset4(n, c, h, w)]; }

    S& operator[](std::int64_t i) { return data_[i]; }
    S operator[](std::int64_t i) const { return data_[i]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    template <typename T>
    Tensor<T> cast() const {
        return Tensor<T>(shape_, data_.template cast<T>());
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape_.size(); ++i)
            s += (i ? "," : "") + std::to_string(shape_[i]);
        return s + "]";
    }

private:
    std::int64_t count() const {
        std::int64_t p = 1;
        for (int e : shape_) p *= e;
        return p;
    }
    std::int64_t offset4(int n, int c, int h, int w) const {
        return ((static_cast<std::int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
    }
    void check_shape() const {
        for (int e : shape_)
            if (e < 0) throw UsageError("tensor: negative extent");
    }

    std::vector<int> shape_;
    ArrX<S> data_;
};

}  // namespace ntc
