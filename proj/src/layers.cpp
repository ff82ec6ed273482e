#include "s3d/layers.hpp"

namespace s3d::nn {

template <class T>
Linear<T> Linear<T>::create(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
                            Rng& rng, double gain, bool bias, bool zero_init) {
    Linear l;
    if (zero_init) {
        l.w = &store.constant(name + ".w", {in, out}, T(0));
    } else {
        l.w = &store.normal(name + ".w", {in, out}, rng, gain);
    }
    if (bias) l.b = &store.constant(name + ".b", {1, out}, T(0));
    return l;
}

template <class T>
Var<T> Linear<T>::operator()(Graph<T>& g, Var<T> x) const {
    std::optional<Var<T>> bias;
    if (b) bias = g.param(*b);
    return linear(x, g.param(*w), bias);
}

template <class T>
LayerNorm<T> LayerNorm<T>::create(ParameterStore<T>& store, const std::string& name, std::size_t dim) {
    LayerNorm ln;
    ln.gamma = &store.constant(name + ".gamma", {1, dim}, T(1));
    ln.beta = &store.constant(name + ".beta", {1, dim}, T(0));
    return ln;
}

template <class T>
Var<T> LayerNorm<T>::operator()(Graph<T>& g, Var<T> x) const {
    return layer_norm(x, std::optional<Var<T>>(g.param(*gamma)), std::optional<Var<T>>(g.param(*beta)));
}

template <class T>
Mlp<T> Mlp<T>::create(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t hidden,
                      std::size_t out, Rng& rng, double out_gain) {
    return {Linear<T>::create(store, name + ".fc1", in, hidden, rng),
            Linear<T>::create(store, name + ".fc2", hidden, out, rng, out_gain)};
}

template <class T>
Var<T> Mlp<T>::operator()(Graph<T>& g, Var<T> x) const {
    return fc2(g, gelu(fc1(g, x)));
}

template <class T>
TransformerLayer<T> TransformerLayer<T>::create(ParameterStore<T>& store, const std::string& name, std::size_t dim,
                                                std::size_t heads, std::size_t ffn_dim, Rng& rng) {
    if (heads == 0 || dim % heads != 0) {
        throw ShapeError(name + ": hidden size " + std::to_string(dim) + " not divisible by " +
                         std::to_string(heads) + " heads");
    }
    TransformerLayer t;
    t.ln1 = LayerNorm<T>::create(store, name + ".ln1", dim);
    t.wq = Linear<T>::create(store, name + ".wq", dim, dim, rng);
    t.wk = Linear<T>::create(store, name + ".wk", dim, dim, rng);
    t.wv = Linear<T>::create(store, name + ".wv", dim, dim, rng);
    t.wo = Linear<T>::create(store, name + ".wo", dim, dim, rng);
    t.ln2 = LayerNorm<T>::create(store, name + ".ln2", dim);
    t.ffn = Mlp<T>::create(store, name + ".ffn", dim, ffn_dim, dim, rng);
    t.heads = heads;
    return t;
}

template <class T>
Var<T> TransformerLayer<T>::operator()(Graph<T>& g, Var<T> x, std::span<const std::uint8_t> mask,
                                       std::optional<std::span<const int>> positions, double dropout_p,
                                       Rng* rng) const {
    Var<T> h = ln1(g, x);
    Var<T> q = wq(g, h);
    Var<T> k = wk(g, h);
    Var<T> v = wv(g, h);
    if (positions) {
        q = rope(q, heads, *positions);
        k = rope(k, heads, *positions);
    }
    Var<T> a = wo(g, attention(q, k, v, heads, mask, std::optional<Var<T>>{}));
    if (rng && dropout_p > 0) a = dropout(a, dropout_p, *rng);
    x = add(x, a);
    Var<T> f = ffn(g, ln2(g, x));
    if (rng && dropout_p > 0) f = dropout(f, dropout_p, *rng);
    return add(x, f);
}

template <class T>
Var<T> modulate(Var<T> x_normed, Var<T> shift, Var<T> scale) {
    return add(mul(x_normed, add_const(scale, 1.0)), shift);
}

template <class T>
Var<T> gated_residual(Var<T> x, Var<T> gate, Var<T> branch) {
    return add(x, mul(branch, gate));
}

std::vector<std::uint8_t> causal_mask(std::size_t length) {
    std::vector<std::uint8_t> m(length * length, 0);
    for (std::size_t i = 0; i < length; ++i)
        for (std::size_t j = 0; j <= i; ++j) m[i * length + j] = 1;
    return m;
}

std::vector<std::uint8_t> key_padding_mask(std::span<const std::uint8_t> valid) {
    const std::size_t n = valid.size();
    std::vector<std::uint8_t> m(n * n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m[i * n + j] = valid[j] ? 1 : 0;
    return m;
}

#define S3D_INSTANTIATE_LAYERS(T)                                 \
    template struct Linear<T>;                                    \
    template struct LayerNorm<T>;                                 \
    template struct Mlp<T>;                                       \
    template struct TransformerLayer<T>;                          \
    template Var<T> modulate(Var<T>, Var<T>, Var<T>);             \
    template Var<T> gated_residual(Var<T>, Var<T>, Var<T>);

S3D_INSTANTIATE_LAYERS(float)
S3D_INSTANTIATE_LAYERS(double)

}  // namespace s3d::nn
