#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "tscam/errors.hpp"

namespace tscam {

using index_t = std::int64_t;

inline std::string shape_str(const std::vector<index_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) {
            os << "x";
        }
        os << shape[i];
    }
    os << "]";
    return os.str();
}

// Dense n-dimensional array, row-major, value-semantic. The single carrier
// for images, tokens, maps, kernels and gradients.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(std::vector<index_t> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<std::size_t>(checked_size(shape_)), T(0));
    }

    Tensor(std::vector<index_t> shape, std::vector<T> values)
        : shape_(std::move(shape)), data_(std::move(values)) {
        if (checked_size(shape_) != static_cast<index_t>(data_.size())) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
        }
    }

    static Tensor full(std::vector<index_t> shape, T value) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) {
            v = value;
        }
        return t;
    }

    const std::vector<index_t>& shape() const { return shape_; }
    index_t rank() const { return static_cast<index_t>(shape_.size()); }
    index_t dim(index_t axis) const { return shape_[static_cast<std::size_t>(axis)]; }
    index_t size() const { return static_cast<index_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }

    T& operator[](index_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](index_t i) const { return data_[static_cast<std::size_t>(i)]; }

    T& operator()(index_t i, index_t j) { return data_[static_cast<std::size_t>(i * dim(1) + j)]; }
    const T& operator()(index_t i, index_t j) const {
        return data_[static_cast<std::size_t>(i * dim(1) + j)];
    }

    T& operator()(index_t i, index_t j, index_t k) {
        return data_[static_cast<std::size_t>((i * dim(1) + j) * dim(2) + k)];
    }
    const T& operator()(index_t i, index_t j, index_t k) const {
        return data_[static_cast<std::size_t>((i * dim(1) + j) * dim(2) + k)];
    }

    T& operator()(index_t i, index_t j, index_t k, index_t l) {
        return data_[static_cast<std::size_t>(((i * dim(1) + j) * dim(2) + k) * dim(3) + l)];
    }
    const T& operator()(index_t i, index_t j, index_t k, index_t l) const {
        return data_[static_cast<std::size_t>(((i * dim(1) + j) * dim(2) + k) * dim(3) + l)];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    // Reinterprets the flat buffer under a new shape of equal size.
    Tensor reshaped(std::vector<index_t> new_shape) const {
        if (checked_size(new_shape) != size()) {
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(new_shape));
        }
        return Tensor(std::move(new_shape), data_);
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) {
            out[i] = static_cast<U>(data_[i]);
        }
        return Tensor<U>(shape_, std::move(out));
    }

private:
    static index_t checked_size(const std::vector<index_t>& shape) {
        index_t n = 1;
        for (index_t d : shape) {
            if (d <= 0) {
                throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
            }
            n *= d;
        }
        return n;
    }

    std::vector<index_t> shape_;
    std::vector<T> data_;
};

template <typename T>
Tensor<T> zeros_like(const Tensor<T>& t) {
    return Tensor<T>(t.shape());
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
    for (const T& v : t.values()) {
        if (!std::isfinite(static_cast<double>(v))) {
            return false;
        }
    }
    return true;
}

template <typename T>
bool has_nan(const Tensor<T>& t) {
    for (const T& v : t.values()) {
        if (std::isnan(static_cast<double>(v))) {
            return true;
        }
    }
    return false;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("max_abs_diff: shapes " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    double m = 0.0;
    for (index_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    }
    return m;
}

}  // namespace tscam
