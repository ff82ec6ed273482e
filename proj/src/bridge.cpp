#include "s3d/bridge.hpp"

#include <cmath>

namespace s3d::bridge {

using nn::Graph;
using nn::Var;

void BridgeConfig::validate() const {
    if (n_queries == 0) throw BridgeError("n_queries must be positive");
    if (input_dim == 0 || cond_dim == 0 || ffn_dim == 0) throw BridgeError("bridge dimensions must be positive");
    if (n_heads == 0 || width() % n_heads != 0) {
        throw BridgeError("bridge width " + std::to_string(width()) + " is not divisible by " +
                          std::to_string(n_heads) + " heads");
    }
}

void to_json(nlohmann::json& j, const BridgeConfig& c) {
    j = {{"input_dim", c.input_dim}, {"n_queries", c.n_queries}, {"n_layers", c.n_layers},
         {"hidden_dim", c.hidden_dim}, {"n_heads", c.n_heads},    {"ffn_dim", c.ffn_dim},
         {"cond_dim", c.cond_dim}};
}

void from_json(const nlohmann::json& j, BridgeConfig& c) {
    BridgeConfig d;
    c.input_dim = j.value("input_dim", d.input_dim);
    c.n_queries = j.value("n_queries", d.n_queries);
    c.n_layers = j.value("n_layers", d.n_layers);
    c.hidden_dim = j.value("hidden_dim", d.hidden_dim);
    c.n_heads = j.value("n_heads", d.n_heads);
    c.ffn_dim = j.value("ffn_dim", d.ffn_dim);
    c.cond_dim = j.value("cond_dim", d.cond_dim);
}

template <class T>
Bridge<T>::Bridge(BridgeConfig config, nn::ParameterStore<T>& store, Rng& rng) : config_(config) {
    config_.validate();
    const std::size_t w = config_.width();
    if (w != config_.input_dim) {
        input_proj_ = nn::Linear<T>::create(store, "bridge/input_proj", config_.input_dim, w, rng);
    }
    queries_ = &store.normal("bridge/queries", {config_.n_queries, w}, rng,
                             std::sqrt(static_cast<double>(config_.n_queries)));
    for (std::size_t i = 0; i < config_.n_layers; ++i) {
        layers_.push_back(nn::TransformerLayer<T>::create(store, "bridge/layer" + std::to_string(i), w,
                                                          config_.n_heads, config_.ffn_dim, rng));
    }
    final_ln_ = nn::LayerNorm<T>::create(store, "bridge/final_ln", w);
    ffn_ = nn::Mlp<T>::create(store, "bridge/ffn", w, config_.ffn_dim, config_.cond_dim, rng);
}

template <class T>
Var<T> Bridge<T>::project(Graph<T>& g, Var<T> h, std::span<const std::uint8_t> valid) const {
    if (h.cols() != config_.input_dim) {
        throw BridgeError("bridge expects states of width " + std::to_string(config_.input_dim) + ", got " +
                          std::to_string(h.cols()));
    }
    if (h.rows() == 0) throw BridgeError("bridge needs at least one state row");
    if (!valid.empty() && valid.size() != h.rows()) {
        throw BridgeError("padding flags do not match the number of state rows");
    }
    const std::size_t l = h.rows();
    if (input_proj_) h = (*input_proj_)(g, h);
    std::vector<Var<T>> parts{h, g.param(*queries_)};
    Var<T> x = nn::concat_rows<T>(parts);
    std::vector<std::uint8_t> flags(l + config_.n_queries, 1);
    if (!valid.empty()) std::copy(valid.begin(), valid.end(), flags.begin());
    const auto mask = nn::key_padding_mask(flags);
    for (const auto& layer : layers_) x = layer(g, x, mask, std::nullopt, 0.0, nullptr);
    return nn::slice_rows(final_ln_(g, x), l, config_.n_queries);
}

template <class T>
Var<T> Bridge<T>::condense(Graph<T>& g, Var<T> q_out) const {
    return ffn_(g, nn::mean_rows(q_out));
}

template <class T>
Var<T> fuse_condition(Var<T> c_chem, Var<T> t_emb, std::optional<Var<T>> prop_emb) {
    if (c_chem.shape() != t_emb.shape() || (prop_emb && prop_emb->shape() != t_emb.shape())) {
        throw BridgeError("condition terms differ in shape: " + nn::shape_str(c_chem.shape()) + " vs " +
                          nn::shape_str(t_emb.shape()));
    }
    Var<T> out = nn::add(c_chem, t_emb);
    if (prop_emb) out = nn::add(out, *prop_emb);
    return out;
}

template class Bridge<float>;
template class Bridge<double>;
template Var<float> fuse_condition(Var<float>, Var<float>, std::optional<Var<float>>);
template Var<double> fuse_condition(Var<double>, Var<double>, std::optional<Var<double>>);

}  // namespace s3d::bridge
