#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "glamor/errors.hpp"
#include "glamor/rng.hpp"

namespace glamor {

using Shape = std::vector<int64_t>;

enum class Precision { F32, F64 };

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i)
        os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s)
        n *= d;
    return n;
}

inline void check_shape_valid(const Shape& s) {
    if (s.empty())
        throw ShapeError("tensor shape must be nonempty");
    for (int64_t d : s)
        if (d < 1)
            throw ShapeError("tensor dimensions must be >= 1, got " + shape_str(s));
}

// Dense row-major N-dimensional array. Instantiated with float for training
// and double for finite-difference verification.
template <class T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        check_shape_valid(shape_);
        data_.assign(static_cast<size_t>(shape_numel(shape_)), T(0));
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape_valid(shape_);
        if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
            throw ShapeError("data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    static Tensor uniform(Shape shape, T lo, T hi, Rng& rng) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_)
            v = static_cast<T>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
        return t;
    }

    static Tensor normal(Shape shape, T mu, T sigma, Rng& rng) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_)
            v = static_cast<T>(rng.normal(static_cast<double>(mu), static_cast<double>(sigma)));
        return t;
    }

    static constexpr Precision precision() {
        return sizeof(T) == 4 ? Precision::F32 : Precision::F64;
    }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    T& at(int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& at(int64_t i) const { return data_[static_cast<size_t>(i)]; }
    T& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    const T& at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    T& at(int64_t i, int64_t j, int64_t k) {
        return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }
    const T& at(int64_t i, int64_t j, int64_t k) const {
        return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }
    T& at(int64_t i, int64_t j, int64_t k, int64_t l) {
        return data_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }
    const T& at(int64_t i, int64_t j, int64_t k, int64_t l) const {
        return data_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }

    Tensor reshape(Shape new_shape) const {
        check_shape_valid(new_shape);
        if (shape_numel(new_shape) != size())
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(new_shape));
        Tensor t = *this;
        t.shape_ = std::move(new_shape);
        return t;
    }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(static_cast<double>(v)))
                return false;
        return true;
    }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape_ = shape_;
        out.data_.resize(data_.size());
        for (size_t i = 0; i < data_.size(); ++i)
            out.data_[i] = static_cast<U>(data_[i]);
        return out;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    template <class U>
    friend class Tensor;

private:
    Shape shape_;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

namespace detail {

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
    if (a != b)
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

// Splits a shape around `axis` into (outer, axis_len, inner) extents so that
// flat index = (o * axis_len + a) * inner + i.
struct AxisSplit {
    int64_t outer, len, inner;
};

inline AxisSplit split_axis(const Shape& s, int axis, const char* op) {
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for " + shape_str(s));
    AxisSplit sp{1, s[static_cast<size_t>(axis)], 1};
    for (int i = 0; i < axis; ++i)
        sp.outer *= s[static_cast<size_t>(i)];
    for (int i = axis + 1; i < static_cast<int>(s.size()); ++i)
        sp.inner *= s[static_cast<size_t>(i)];
    return sp;
}

} // namespace detail

enum class ElemOp { Add, Sub, Mul, Max };

template <class T>
Tensor<T> elementwise(ElemOp op, const Tensor<T>& a, const Tensor<T>& b) {
    // b may be a single value broadcast over a; no other broadcasting.
    const bool scalar_b = b.size() == 1;
    if (!scalar_b)
        detail::require_same_shape(a.shape(), b.shape(), "elementwise");
    Tensor<T> c(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* pc = c.data();
    const int64_t n = a.size();
    switch (op) {
    case ElemOp::Add:
        for (int64_t i = 0; i < n; ++i) pc[i] = pa[i] + pb[scalar_b ? 0 : i];
        break;
    case ElemOp::Sub:
        for (int64_t i = 0; i < n; ++i) pc[i] = pa[i] - pb[scalar_b ? 0 : i];
        break;
    case ElemOp::Mul:
        for (int64_t i = 0; i < n; ++i) pc[i] = pa[i] * pb[scalar_b ? 0 : i];
        break;
    case ElemOp::Max:
        for (int64_t i = 0; i < n; ++i) pc[i] = std::max(pa[i], pb[scalar_b ? 0 : i]);
        break;
    }
    return c;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(ElemOp::Add, a, b); }
template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(ElemOp::Sub, a, b); }
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(ElemOp::Mul, a, b); }
template <class T>
Tensor<T> elem_max(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(ElemOp::Max, a, b); }

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    Tensor<T> c = a;
    for (auto& v : c.vec())
        v *= s;
    return c;
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul: expects rank-2 tensors, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    if (a.dim(1) != b.dim(0))
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> c({m, n});
    const T* pa = a.data();
    const T* pb = b.data();
    T* pc = c.data();
    // ikj order: the j loop streams over contiguous rows of b and c.
    for (int64_t i = 0; i < m; ++i) {
        T* crow = pc + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
            const T av = pa[i * k + kk];
            const T* brow = pb + kk * n;
            for (int64_t j = 0; j < n; ++j)
                crow[j] += av * brow[j];
        }
    }
    return c;
}

// Numerically stable softmax over one axis (max subtraction per slice).
template <class T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
    const auto sp = detail::split_axis(x.shape(), axis, "softmax");
    Tensor<T> y(x.shape());
    const T* px = x.data();
    T* py = y.data();
    for (int64_t o = 0; o < sp.outer; ++o) {
        for (int64_t in = 0; in < sp.inner; ++in) {
            const int64_t base = o * sp.len * sp.inner + in;
            T mx = px[base];
            for (int64_t a = 1; a < sp.len; ++a)
                mx = std::max(mx, px[base + a * sp.inner]);
            T sum = T(0);
            for (int64_t a = 0; a < sp.len; ++a) {
                const T e = std::exp(px[base + a * sp.inner] - mx);
                py[base + a * sp.inner] = e;
                sum += e;
            }
            const T inv = T(1) / sum;
            for (int64_t a = 0; a < sp.len; ++a)
                py[base + a * sp.inner] *= inv;
        }
    }
    return y;
}

template <class T>
Tensor<T> reduce_sum(const Tensor<T>& x, int axis) {
    const auto sp = detail::split_axis(x.shape(), axis, "reduce_sum");
    Shape out_shape = x.shape();
    out_shape.erase(out_shape.begin() + axis);
    if (out_shape.empty())
        out_shape = {1};
    Tensor<T> y(out_shape);
    const T* px = x.data();
    T* py = y.data();
    for (int64_t o = 0; o < sp.outer; ++o)
        for (int64_t a = 0; a < sp.len; ++a)
            for (int64_t in = 0; in < sp.inner; ++in)
                py[o * sp.inner + in] += px[(o * sp.len + a) * sp.inner + in];
    return y;
}

template <class T>
Tensor<T> reduce_mean(const Tensor<T>& x, int axis) {
    const auto sp = detail::split_axis(x.shape(), axis, "reduce_mean");
    Tensor<T> y = reduce_sum(x, axis);
    const T inv = T(1) / static_cast<T>(sp.len);
    for (auto& v : y.vec())
        v *= inv;
    return y;
}

// Ties break toward the lowest index.
template <class T>
Tensor<int64_t> argmax(const Tensor<T>& x, int axis) {
    const auto sp = detail::split_axis(x.shape(), axis, "argmax");
    Shape out_shape = x.shape();
    out_shape.erase(out_shape.begin() + axis);
    if (out_shape.empty())
        out_shape = {1};
    Tensor<int64_t> y(out_shape);
    const T* px = x.data();
    for (int64_t o = 0; o < sp.outer; ++o) {
        for (int64_t in = 0; in < sp.inner; ++in) {
            const int64_t base = o * sp.len * sp.inner + in;
            T best = px[base];
            int64_t best_i = 0;
            for (int64_t a = 1; a < sp.len; ++a) {
                const T v = px[base + a * sp.inner];
                if (v > best) {
                    best = v;
                    best_i = a;
                }
            }
            y[o * sp.inner + in] = best_i;
        }
    }
    return y;
}

template <class T>
T sum_all(const Tensor<T>& x) {
    T s = T(0);
    for (T v : x.vec())
        s += v;
    return s;
}

} // namespace glamor
