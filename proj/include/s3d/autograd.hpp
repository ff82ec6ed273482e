#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "s3d/rng.hpp"
#include "s3d/tensor.hpp"

namespace s3d::nn {

template <class T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool frozen = false;

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T(0)); }
};

// Owns parameters; references stay valid as the store grows.
template <class T>
class ParameterStore {
public:
    // Normal init scaled by gain / sqrt(fan_in) where fan_in = shape[0].
    Parameter<T>& normal(const std::string& name, Shape shape, Rng& rng, double gain = 1.0);
    Parameter<T>& constant(const std::string& name, Shape shape, T value);

    Parameter<T>* find(const std::string& name);
    const Parameter<T>* find(const std::string& name) const;
    Parameter<T>& at(const std::string& name);

    std::deque<Parameter<T>>& all() noexcept { return params_; }
    const std::deque<Parameter<T>>& all() const noexcept { return params_; }

    // Parameters whose name starts with prefix.
    std::vector<Parameter<T>*> with_prefix(std::string_view prefix);
    void set_frozen(std::string_view prefix, bool frozen);
    void zero_grad();
    std::size_t count(std::string_view prefix = "") const;

private:
    Parameter<T>& add(const std::string& name, Tensor<T> value);
    std::deque<Parameter<T>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

template <class T>
class Graph;

template <class T>
struct Var {
    Graph<T>* g = nullptr;
    int id = -1;

    const Tensor<T>& value() const;
    const Shape& shape() const { return value().shape; }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    bool requires_grad() const;
    const Tensor<T>& grad() const;
};

// Tape of values and backward closures. Nodes are appended in topological
// order, so backward is a reverse sweep.
template <class T>
class Graph {
public:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;  // empty until something flows in
        std::function<void(Graph&, int)> backward;  // (graph, own id)
        bool requires_grad = false;
        Parameter<T>* param = nullptr;
    };

    explicit Graph(bool grad_enabled = true);

    bool grad_enabled() const noexcept { return grad_enabled_; }
    void set_check_finite(bool on) noexcept { check_finite_ = on; }

    Var<T> constant(Tensor<T> value);
    // Trainable leaf; frozen parameters (or a no-grad graph) give constants.
    Var<T> param(Parameter<T>& p);

    // Registers a computed node; `backward` is dropped when no input needs grad.
    Var<T> record(Tensor<T> value, std::span<const Var<T>> inputs, std::function<void(Graph&, int)> backward,
                  const char* op);

    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    // Gradient buffer of a node, allocated (zeroed) on first use.
    Tensor<T>& grad_of(int id);

    // Seeds d(root)/d(root) = 1 and sweeps; accumulates into Parameter::grad.
    void backward(Var<T> root);
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    std::deque<Node> nodes_;
    std::unordered_map<const Parameter<T>*, int> param_nodes_;
    bool grad_enabled_;
    bool check_finite_;
};

template <class T>
const Tensor<T>& Var<T>::value() const {
    return g->node(id).value;
}
template <class T>
bool Var<T>::requires_grad() const {
    return g->node(id).requires_grad;
}
template <class T>
const Tensor<T>& Var<T>::grad() const {
    return g->node(id).grad;
}

// ---- differentiable ops --------------------------------------------------------
// All operate on matrices (rows x cols). Binary ops accept b with 1 row and/or
// 1 column, broadcast over a.

template <class T> Var<T> add(Var<T> a, Var<T> b);
template <class T> Var<T> sub(Var<T> a, Var<T> b);
template <class T> Var<T> mul(Var<T> a, Var<T> b);
template <class T> Var<T> scale(Var<T> a, double s);
template <class T> Var<T> add_const(Var<T> a, double s);
template <class T> Var<T> matmul(Var<T> a, Var<T> b);
// x [m,k] * w [k,n] + b [1,n]
template <class T> Var<T> linear(Var<T> x, Var<T> w, std::optional<Var<T>> b);
template <class T> Var<T> layer_norm(Var<T> x, std::optional<Var<T>> gamma, std::optional<Var<T>> beta,
                                     double eps = 1e-5);
template <class T> Var<T> softmax_rows(Var<T> x);
template <class T> Var<T> gelu(Var<T> x);
template <class T> Var<T> silu(Var<T> x);
template <class T> Var<T> embedding(Var<T> table, std::span<const int> ids);
template <class T> Var<T> concat_rows(std::span<const Var<T>> parts);
template <class T> Var<T> concat_cols(std::span<const Var<T>> parts);
template <class T> Var<T> slice_rows(Var<T> x, std::size_t start, std::size_t count);
template <class T> Var<T> slice_cols(Var<T> x, std::size_t start, std::size_t count);
template <class T> Var<T> reshape(Var<T> x, std::size_t rows, std::size_t cols);
template <class T> Var<T> mean_rows(Var<T> x);  // -> [1, c]
template <class T> Var<T> sum_all(Var<T> x);    // -> [1, 1]
template <class T> Var<T> repeat_rows(Var<T> x, std::size_t n);  // [1,c] -> [n,c]
// Subtracts the column means (center of mass for N x 3 coordinates).
template <class T> Var<T> center_rows(Var<T> x);
// Inverted dropout; identity when p == 0.
template <class T> Var<T> dropout(Var<T> x, double p, Rng& rng);

// Multi-head scaled dot-product attention. mask is row-major Lq x Lk
// (1 = may attend) or empty for no masking; bias is [Lq*Lk, heads] added to
// the logits. Fully masked rows produce zeros.
template <class T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::size_t heads, std::span<const std::uint8_t> mask,
                 std::optional<Var<T>> bias);
// Rotary position embedding applied per head (base 10000).
template <class T> Var<T> rope(Var<T> x, std::size_t heads, std::span<const int> positions);

// Mean token cross-entropy; targets < 0 are ignored. -> [1,1]
template <class T> Var<T> cross_entropy(Var<T> logits, std::span<const int> targets);
// Mean squared error over all entries. -> [1,1]
template <class T> Var<T> mse(Var<T> a, Var<T> b);

// Pairwise combinations for N-row inputs, output row i*N+j:
template <class T> Var<T> pair_product(Var<T> u, Var<T> v);  // u_i * v_j
template <class T> Var<T> pair_sum(Var<T> u, Var<T> v);      // u_i + v_j
// out_i = sum_j w_ij (x_i - x_j) / (|x_i - x_j| + 1), w [N*N, 1], x constant [N, 3].
template <class T> Var<T> relative_vector_sum(Var<T> w, const Tensor<T>& x);

}  // namespace s3d::nn
