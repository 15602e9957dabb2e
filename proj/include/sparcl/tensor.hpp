#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <vector>

#include "sparcl/common.hpp"

namespace sparcl {

/// Dense n-dimensional array with a flat row-major buffer.
template <class T>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(numel_of(shape_), T(0)) {}

    TensorT(std::vector<std::size_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != numel_of(shape_)) {
            throw ShapeError("tensor data length does not match shape product");
        }
    }

    static TensorT zeros(std::vector<std::size_t> shape) { return TensorT(std::move(shape)); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // 2-d indexing [rows, cols]
    T& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    // 4-d indexing [n, c, h, w]
    T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    TensorT reshaped(std::vector<std::size_t> new_shape) const {
        if (numel_of(new_shape) != data_.size()) {
            throw ShapeError("reshape changes element count");
        }
        return TensorT(std::move(new_shape), data_);
    }

    bool all_finite() const {
        for (const T& v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    template <class U>
    TensorT<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return TensorT<U>(shape_, std::move(out));
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
        os << "]";
        return os.str();
    }

    static std::size_t numel_of(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

/// Number of elements in one leading-dim slice (the per-row payload).
template <class T>
std::size_t row_numel(const TensorT<T>& t) {
    if (t.rank() == 0) throw ShapeError("row_numel on rank-0 tensor");
    return t.dim(0) == 0 ? 0 : t.numel() / t.dim(0);
}

/// Copy of row `i` along dim 0, keeping the trailing shape.
template <class T>
TensorT<T> slice_row(const TensorT<T>& t, std::size_t i) {
    std::size_t stride = row_numel(t);
    std::vector<std::size_t> shape(t.shape().begin() + 1, t.shape().end());
    if (shape.empty()) shape = {1};
    std::vector<T> out(t.data().begin() + i * stride, t.data().begin() + (i + 1) * stride);
    return TensorT<T>(std::move(shape), std::move(out));
}

/// Batch assembled by gathering rows of `t` at `indices`.
template <class T>
TensorT<T> gather_rows(const TensorT<T>& t, std::span<const std::size_t> indices) {
    std::size_t stride = row_numel(t);
    std::vector<std::size_t> shape = t.shape();
    shape[0] = indices.size();
    std::vector<T> out;
    out.reserve(indices.size() * stride);
    for (std::size_t idx : indices) {
        out.insert(out.end(), t.data().begin() + idx * stride, t.data().begin() + (idx + 1) * stride);
    }
    return TensorT<T>(std::move(shape), std::move(out));
}

/// Batch assembled by stacking equally-shaped row tensors along a new dim 0.
template <class T>
TensorT<T> stack_rows(std::span<const TensorT<T>* const> rows) {
    if (rows.empty()) throw ShapeError("stack_rows of empty list");
    std::vector<std::size_t> shape;
    shape.push_back(rows.size());
    for (std::size_t d : rows.front()->shape()) shape.push_back(d);
    std::vector<T> out;
    out.reserve(TensorT<T>::numel_of(shape));
    for (const TensorT<T>* r : rows) {
        if (r->shape() != rows.front()->shape()) throw ShapeError("stack_rows with mixed shapes");
        out.insert(out.end(), r->data().begin(), r->data().end());
    }
    return TensorT<T>(std::move(shape), std::move(out));
}

}  // namespace sparcl
