#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fewfont/errors.hpp"

namespace fewfont {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive");
        n *= std::size_t(d);
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); i++) os << (i ? "x" : "") << s[i];
    os << ")";
    return os.str();
}

// Dense row-major n-d array. Storage is shared (shallow copies alias);
// ops treat tensors as immutable, mutation goes through clone() or ptr()
// by the single owner (optimizer state, image buffers).
template <typename T>
struct Tensor {
    Shape shape;
    std::shared_ptr<std::vector<T>> data;

    Tensor() = default;
    explicit Tensor(Shape s)
        : shape(std::move(s)), data(std::make_shared<std::vector<T>>(shape_numel(shape), T(0))) {}
    Tensor(Shape s, std::vector<T> values) : shape(std::move(s)) {
        if (shape_numel(shape) != values.size())
            throw ShapeError("tensor data length " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(shape));
        data = std::make_shared<std::vector<T>>(std::move(values));
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor full(Shape s, T v) {
        Tensor t(std::move(s));
        for (T& x : *t.data) x = v;
        return t;
    }
    static Tensor scalar(T v) { return Tensor({1}, {v}); }

    bool empty() const { return !data; }
    std::size_t size() const { return data ? data->size() : 0; }
    int rank() const { return int(shape.size()); }
    int dim(int i) const { return shape[std::size_t(i)]; }

    T* ptr() { return data->data(); }
    const T* ptr() const { return data->data(); }
    T& operator[](std::size_t i) { return (*data)[i]; }
    const T& operator[](std::size_t i) const { return (*data)[i]; }

    Tensor clone() const {
        Tensor t;
        t.shape = shape;
        if (data) t.data = std::make_shared<std::vector<T>>(*data);
        return t;
    }

    // Same storage, new shape. numel must match.
    Tensor viewed(Shape s) const {
        if (shape_numel(s) != size())
            throw ShapeError("view " + shape_str(s) + " incompatible with " + shape_str(shape));
        Tensor t;
        t.shape = std::move(s);
        t.data = data;
        return t;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

template <typename T>
inline bool all_finite(const Tensor<T>& t) {
    for (std::size_t i = 0; i < t.size(); i++)
        if (!std::isfinite(t[i])) return false;
    return true;
}

template <typename T>
inline Tensor<T> to_scalar_type(const Tensor<float>& t) {
    Tensor<T> out(t.shape);
    for (std::size_t i = 0; i < t.size(); i++) out[i] = T(t[i]);
    return out;
}

}  // namespace fewfont
