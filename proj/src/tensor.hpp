#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"

namespace percept {

// Dimensions are ints: nothing in the engine needs a single axis beyond
// 2^31 and signed arithmetic avoids underflow traps in the index math.
using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    out += "]";
    return out;
}

inline std::int64_t shape_elems(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

// Dense row-major n-d array over T (float in deployment, double in the
// gradient-check builds).
template <typename T>
struct TensorT {
    Shape shape;
    std::vector<T> data;

    TensorT() = default;

    TensorT(Shape s, T fill) : shape(std::move(s)) {
        validate_dims();
        data.assign(static_cast<std::size_t>(shape_elems(shape)), fill);
    }

    TensorT(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        validate_dims();
        if (static_cast<std::size_t>(shape_elems(shape)) != data.size())
            throw Error(ErrorCode::invalid_shape,
                        "tensor shape " + shape_str(shape) + " wants " +
                            std::to_string(shape_elems(shape)) + " values, got " +
                            std::to_string(data.size()));
    }

    int rank() const { return static_cast<int>(shape.size()); }
    std::size_t size() const { return data.size(); }

    // Element accessors for the common ranks. Callers are responsible for
    // rank; indices are unchecked in release builds like a raw array.
    T& at1(int i) { return data[static_cast<std::size_t>(i)]; }
    T at1(int i) const { return data[static_cast<std::size_t>(i)]; }

    T& at2(int i, int j) {
        return data[static_cast<std::size_t>(i) * shape[1] + j];
    }
    T at2(int i, int j) const {
        return data[static_cast<std::size_t>(i) * shape[1] + j];
    }

    T& at3(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    T at3(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }

private:
    void validate_dims() const {
        for (int d : shape)
            if (d < 1)
                throw Error(ErrorCode::invalid_shape,
                            "tensor dimensions must be positive, got " + shape_str(shape));
        if (shape.empty())
            throw Error(ErrorCode::invalid_shape, "tensor must have at least one dimension");
    }
};

using Tensor = TensorT<float>;

// Same elements, new shape. Element count must be preserved.
template <typename T>
TensorT<T> reshape(const TensorT<T>& t, Shape new_shape) {
    for (int d : new_shape)
        if (d < 1)
            throw Error(ErrorCode::invalid_shape,
                        "reshape target dimensions must be positive, got " + shape_str(new_shape));
    if (new_shape.empty())
        throw Error(ErrorCode::invalid_shape, "reshape target must have at least one dimension");
    if (shape_elems(new_shape) != shape_elems(t.shape))
        throw Error(ErrorCode::shape_mismatch,
                    "cannot reshape " + shape_str(t.shape) + " (" +
                        std::to_string(shape_elems(t.shape)) + " elements) to " +
                        shape_str(new_shape) + " (" + std::to_string(shape_elems(new_shape)) +
                        " elements)");
    TensorT<T> out;
    out.shape = std::move(new_shape);
    out.data = t.data;
    return out;
}

// Plain [m,k] x [k,n] product. The k-major loop order keeps the inner loop
// contiguous over both b and c, which is all the blocking the toy-scale
// matrices here need.
template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw Error(ErrorCode::shape_mismatch,
                    "matmul needs two rank-2 tensors, got " + shape_str(a.shape) + " and " +
                        shape_str(b.shape));
    if (a.shape[1] != b.shape[0])
        throw Error(ErrorCode::shape_mismatch,
                    "matmul inner dimensions disagree: " + shape_str(a.shape) + " x " +
                        shape_str(b.shape));
    const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
    TensorT<T> c({m, n}, T(0));
    for (int i = 0; i < m; ++i) {
        const T* arow = &a.data[static_cast<std::size_t>(i) * k];
        T* crow = &c.data[static_cast<std::size_t>(i) * n];
        for (int p = 0; p < k; ++p) {
            const T av = arow[p];
            const T* brow = &b.data[static_cast<std::size_t>(p) * n];
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

}  // namespace percept
