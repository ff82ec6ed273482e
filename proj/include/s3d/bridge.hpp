#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "s3d/layers.hpp"

namespace s3d::bridge {

class BridgeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct BridgeConfig {
    std::size_t input_dim = 256;  // width of the language model states
    std::size_t n_queries = 64;
    std::size_t n_layers = 4;
    std::size_t hidden_dim = 0;  // 0 -> input_dim (no input projection)
    std::size_t n_heads = 4;
    std::size_t ffn_dim = 256;
    std::size_t cond_dim = 128;

    std::size_t width() const { return hidden_dim ? hidden_dim : input_dim; }
    void validate() const;
};

void to_json(nlohmann::json& j, const BridgeConfig& c);
void from_json(const nlohmann::json& j, BridgeConfig& c);

// Learnable queries appended to the frozen language-model states and refined
// by bidirectional encoder layers; the query slots are pooled into one
// condition vector. Parameters live under "bridge/".
template <class T>
class Bridge {
public:
    Bridge(BridgeConfig config, nn::ParameterStore<T>& store, Rng& rng);

    const BridgeConfig& config() const noexcept { return config_; }

    // h: [L, input_dim]; valid: one flag per row of h (empty = all valid).
    // Returns the refined query rows [n_queries, width].
    nn::Var<T> project(nn::Graph<T>& g, nn::Var<T> h, std::span<const std::uint8_t> valid = {}) const;
    // Mean over query rows, then a two-layer FFN to [1, cond_dim].
    nn::Var<T> condense(nn::Graph<T>& g, nn::Var<T> q_out) const;
    nn::Var<T> operator()(nn::Graph<T>& g, nn::Var<T> h, std::span<const std::uint8_t> valid = {}) const {
        return condense(g, project(g, h, valid));
    }

    nn::Parameter<T>& queries() const { return *queries_; }

private:
    BridgeConfig config_;
    std::optional<nn::Linear<T>> input_proj_;
    nn::Parameter<T>* queries_ = nullptr;
    std::vector<nn::TransformerLayer<T>> layers_;
    nn::LayerNorm<T> final_ln_;
    nn::Mlp<T> ffn_;
};

// Element-wise sum of the present terms; all [1, cond_dim].
template <class T>
nn::Var<T> fuse_condition(nn::Var<T> c_chem, nn::Var<T> t_emb, std::optional<nn::Var<T>> prop_emb = std::nullopt);

}  // namespace s3d::bridge
