#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "s3d/autograd.hpp"

namespace s3d::nn {

template <class T>
struct Linear {
    Parameter<T>* w = nullptr;  // [in, out]
    Parameter<T>* b = nullptr;  // [1, out] or null

    // zero_init: both weight and bias start at 0 (used for adaLN maps).
    static Linear create(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                         double gain = 1.0, bool bias = true, bool zero_init = false);
    Var<T> operator()(Graph<T>& g, Var<T> x) const;
    std::size_t in_dim() const { return w->value.shape[0]; }
    std::size_t out_dim() const { return w->value.shape[1]; }
};

template <class T>
struct LayerNorm {
    Parameter<T>* gamma = nullptr;
    Parameter<T>* beta = nullptr;

    static LayerNorm create(ParameterStore<T>& store, const std::string& name, std::size_t dim);
    Var<T> operator()(Graph<T>& g, Var<T> x) const;
};

// Linear -> gelu -> Linear
template <class T>
struct Mlp {
    Linear<T> fc1;
    Linear<T> fc2;

    static Mlp create(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t hidden,
                      std::size_t out, Rng& rng, double out_gain = 1.0);
    Var<T> operator()(Graph<T>& g, Var<T> x) const;
};

// Pre-LN transformer layer. With positions given, rotary embeddings are
// applied to queries and keys.
template <class T>
struct TransformerLayer {
    LayerNorm<T> ln1;
    Linear<T> wq, wk, wv, wo;
    LayerNorm<T> ln2;
    Mlp<T> ffn;
    std::size_t heads = 1;

    static TransformerLayer create(ParameterStore<T>& store, const std::string& name, std::size_t dim,
                                   std::size_t heads, std::size_t ffn_dim, Rng& rng);
    Var<T> operator()(Graph<T>& g, Var<T> x, std::span<const std::uint8_t> mask,
                      std::optional<std::span<const int>> positions, double dropout_p, Rng* rng) const;
};

// LN(x) * (1 + scale) + shift with scale/shift broadcast over rows ([1, c]).
template <class T>
Var<T> modulate(Var<T> x_normed, Var<T> shift, Var<T> scale);

// x + gate * branch, gate [1, c].
template <class T>
Var<T> gated_residual(Var<T> x, Var<T> gate, Var<T> branch);

// Causal mask (row i may see columns <= i) for an L x L score matrix.
std::vector<std::uint8_t> causal_mask(std::size_t length);
// Bidirectional mask that hides invalid key positions.
std::vector<std::uint8_t> key_padding_mask(std::span<const std::uint8_t> valid);

}  // namespace s3d::nn
