#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "s3d/layers.hpp"
#include "s3d/optim.hpp"
#include "s3d/property.hpp"
#include "s3d/selfies.hpp"

namespace s3d::lm {

class LmError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct LmConfig {
    std::size_t vocab_size = 0;
    std::size_t n_layers = 4;
    std::size_t hidden_dim = 256;
    std::size_t n_heads = 8;
    std::size_t max_seq_len = 96;  // tokens including [BOS]; the soft prompt is extra
    std::size_t ffn_dim = 0;       // 0 -> 4 * hidden_dim
    double dropout_rate = 0.0;
    // Property soft prompt.
    bool conditional = false;
    std::size_t prompt_len = 4;
    std::size_t prompt_hidden = 64;

    void validate() const;
    std::size_t ffn() const { return ffn_dim ? ffn_dim : 4 * hidden_dim; }
};

void to_json(nlohmann::json& j, const LmConfig& c);
void from_json(const nlohmann::json& j, LmConfig& c);

// Decoder-only transformer with rotary positions and pre-LN blocks. All
// parameters live in the caller's store under "lm/".
template <class T>
class LanguageModel {
public:
    LanguageModel(LmConfig config, nn::ParameterStore<T>& store, Rng& rng);

    const LmConfig& config() const noexcept { return config_; }
    nn::ParameterStore<T>& store() const noexcept { return *store_; }

    // z-scored property -> [prompt_len, hidden] rows.
    nn::Var<T> soft_prompt(nn::Graph<T>& g, double z) const;

    // Final-layer states (after the last norm) for [prompt rows | ids].
    // Conditional models use z = 0 when no property is given.
    nn::Var<T> forward(nn::Graph<T>& g, std::span<const int> ids, std::optional<double> z, Rng* dropout_rng) const;
    nn::Var<T> logits(nn::Graph<T>& g, nn::Var<T> states) const;
    std::size_t prompt_rows(std::optional<double> z) const;

    // Teacher-forced next-token loss: input [BOS] + tokens, targets tokens + [EOS].
    nn::Var<T> loss(nn::Graph<T>& g, std::span<const int> tokens, std::optional<double> z, Rng* dropout_rng) const;

    // Per-token final-layer representations, shape (L, hidden). No gradient.
    nn::Tensor<T> hidden_states(std::span<const int> tokens, std::optional<double> z = std::nullopt) const;
    // Log-probabilities of the token following `prefix` (which starts with [BOS]).
    std::vector<double> next_log_probs(std::span<const int> prefix, std::optional<double> z, double temperature) const;

    // Throws LmError naming the index of the first sequence that does not fit.
    void check_lengths(std::span<const std::vector<int>> corpus) const;

private:
    LmConfig config_;
    nn::ParameterStore<T>* store_;
    nn::Parameter<T>* embed_ = nullptr;
    std::vector<nn::TransformerLayer<T>> layers_;
    nn::LayerNorm<T> final_ln_;
    nn::Linear<T> head_;
    nn::Mlp<T> prompt_mlp_;
    int bos_ = 1;
    int eos_ = 2;
    int pad_ = 0;
};

// Builds the soft prompt for a raw property value.
template <class T>
nn::Var<T> make_soft_prompt(const LanguageModel<T>& model, nn::Graph<T>& g, double value, const Normalizer& norm);

struct SampleOptions {
    double temperature = 1.0;
    bool greedy = false;         // argmax decoding (the temperature -> 0 limit)
    std::size_t beam_size = 1;   // > 1: beam search (stochastic unless greedy)
    std::size_t max_len = 0;     // 0 -> max_seq_len - 1
    std::vector<int> prefix;     // forced leading tokens, kept in the output (not with beams)
};

// Token ids without [BOS]/[EOS]. z may be empty (unconditional) or hold one
// z-scored property per sample.
template <class T>
std::vector<std::vector<int>> sample_sequences(const LanguageModel<T>& model, std::size_t n,
                                               const SampleOptions& options, Rng& rng, std::span<const double> z = {});

struct LmStepLog {
    std::int64_t step;
    double loss;
    double lr;
};

struct LmTrainOptions {
    std::size_t epochs = 100;
    std::size_t batch_size = 256;
    nn::LrSchedule schedule;
    nn::AdamWConfig adamw;
    double grad_clip = 1.0;
    std::uint64_t seed = 0;
    std::function<void(const LmStepLog&)> on_step;
};

struct LmTrainResult {
    std::vector<double> epoch_loss;  // mean nats per token
    std::vector<double> epoch_perplexity;
    std::int64_t steps = 0;
};

// z: empty, or one z-scored property per corpus entry (conditional model).
template <class T>
LmTrainResult train_lm(LanguageModel<T>& model, std::span<const std::vector<int>> corpus, std::span<const double> z,
                       const LmTrainOptions& options);

// Mean per-token loss over a corpus without updating anything.
template <class T>
double evaluate_lm(const LanguageModel<T>& model, std::span<const std::vector<int>> corpus,
                   std::span<const double> z = {});

}  // namespace s3d::lm
