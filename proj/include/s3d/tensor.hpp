#pragma once

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace s3d::nn {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

inline std::size_t numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

// Dense row-major tensor. Most ops treat it as a matrix: rows = shape[0],
// cols = product of the remaining dims (1 for a vector).
template <class T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(numel(shape), fill) {}
    Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        if (data.size() != numel(shape)) {
            throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                             shape_str(shape));
        }
    }

    static Tensor zeros(std::size_t r, std::size_t c) { return Tensor({r, c}); }

    std::size_t size() const noexcept { return data.size(); }
    std::size_t rows() const noexcept { return shape.empty() ? 1 : shape[0]; }
    std::size_t cols() const noexcept { return shape.empty() || rows() == 0 ? 1 : data.size() / rows(); }

    T& operator()(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
    T operator()(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

    bool all_finite() const;

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.assign(data.begin(), data.end());
        return out;
    }
};

}  // namespace s3d::nn
