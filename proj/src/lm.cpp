#include "s3d/lm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace s3d::lm {

using nn::Graph;
using nn::Tensor;
using nn::Var;

void LmConfig::validate() const {
    if (vocab_size < 3) throw LmError("vocab_size must cover the special tokens");
    if (n_layers == 0) throw LmError("n_layers must be positive");
    if (n_heads == 0 || hidden_dim % n_heads != 0) {
        throw LmError("hidden_dim " + std::to_string(hidden_dim) + " is not divisible by n_heads " +
                      std::to_string(n_heads));
    }
    if ((hidden_dim / n_heads) % 2 != 0) throw LmError("head width must be even for rotary embeddings");
    if (max_seq_len < 2) throw LmError("max_seq_len must be at least 2");
    if (dropout_rate < 0 || dropout_rate >= 1) throw LmError("dropout_rate must lie in [0, 1)");
    if (conditional && prompt_len == 0) throw LmError("a conditional model needs prompt_len >= 1");
}

void to_json(nlohmann::json& j, const LmConfig& c) {
    j = {{"vocab_size", c.vocab_size},   {"n_layers", c.n_layers},         {"hidden_dim", c.hidden_dim},
         {"n_heads", c.n_heads},         {"max_seq_len", c.max_seq_len},   {"ffn_dim", c.ffn_dim},
         {"dropout_rate", c.dropout_rate}, {"conditional", c.conditional}, {"prompt_len", c.prompt_len},
         {"prompt_hidden", c.prompt_hidden}};
}

void from_json(const nlohmann::json& j, LmConfig& c) {
    LmConfig d;
    c.vocab_size = j.value("vocab_size", d.vocab_size);
    c.n_layers = j.value("n_layers", d.n_layers);
    c.hidden_dim = j.value("hidden_dim", d.hidden_dim);
    c.n_heads = j.value("n_heads", d.n_heads);
    c.max_seq_len = j.value("max_seq_len", d.max_seq_len);
    c.ffn_dim = j.value("ffn_dim", d.ffn_dim);
    c.dropout_rate = j.value("dropout_rate", d.dropout_rate);
    c.conditional = j.value("conditional", d.conditional);
    c.prompt_len = j.value("prompt_len", d.prompt_len);
    c.prompt_hidden = j.value("prompt_hidden", d.prompt_hidden);
}

template <class T>
LanguageModel<T>::LanguageModel(LmConfig config, nn::ParameterStore<T>& store, Rng& rng)
    : config_(config), store_(&store) {
    config_.validate();
    const auto& vocab = selfies::Vocabulary::builtin();
    bos_ = vocab.bos_id();
    eos_ = vocab.eos_id();
    pad_ = vocab.pad_id();
    const std::size_t d = config_.hidden_dim;
    embed_ = &store.normal("lm/embed", {config_.vocab_size, d}, rng,
                           std::sqrt(static_cast<double>(config_.vocab_size) / static_cast<double>(d)));
    for (std::size_t i = 0; i < config_.n_layers; ++i) {
        layers_.push_back(nn::TransformerLayer<T>::create(store, "lm/layer" + std::to_string(i), d, config_.n_heads,
                                                          config_.ffn(), rng));
    }
    final_ln_ = nn::LayerNorm<T>::create(store, "lm/final_ln", d);
    // Small output gain keeps the initial distribution close to uniform.
    head_ = nn::Linear<T>::create(store, "lm/head", d, config_.vocab_size, rng, 0.1);
    if (config_.conditional) {
        prompt_mlp_ = nn::Mlp<T>::create(store, "lm/prompt", 1, config_.prompt_hidden, config_.prompt_len * d, rng);
    }
}

template <class T>
Var<T> LanguageModel<T>::soft_prompt(Graph<T>& g, double z) const {
    if (!config_.conditional) throw LmError("soft prompt requested from an unconditional model");
    Var<T> in = g.constant(Tensor<T>({1, 1}, static_cast<T>(z)));
    return nn::reshape(prompt_mlp_(g, in), config_.prompt_len, config_.hidden_dim);
}

template <class T>
std::size_t LanguageModel<T>::prompt_rows(std::optional<double>) const {
    return config_.conditional ? config_.prompt_len : 0;
}

template <class T>
Var<T> LanguageModel<T>::forward(Graph<T>& g, std::span<const int> ids, std::optional<double> z,
                                 Rng* dropout_rng) const {
    Var<T> x = nn::embedding(g.param(*embed_), ids);
    if (config_.conditional) {
        std::vector<Var<T>> parts{soft_prompt(g, z.value_or(0.0)), x};
        x = nn::concat_rows<T>(parts);
    }
    const std::size_t n = x.rows();
    std::vector<int> positions(n);
    std::iota(positions.begin(), positions.end(), 0);
    const auto mask = nn::causal_mask(n);
    const double p = dropout_rng ? config_.dropout_rate : 0.0;
    for (const auto& layer : layers_) {
        x = layer(g, x, mask, std::span<const int>(positions), p, dropout_rng);
    }
    return final_ln_(g, x);
}

template <class T>
Var<T> LanguageModel<T>::logits(Graph<T>& g, Var<T> states) const {
    return head_(g, states);
}

template <class T>
Var<T> LanguageModel<T>::loss(Graph<T>& g, std::span<const int> tokens, std::optional<double> z,
                              Rng* dropout_rng) const {
    if (tokens.size() + 1 > config_.max_seq_len) {
        throw LmError("sequence of " + std::to_string(tokens.size()) + " tokens exceeds max_seq_len " +
                      std::to_string(config_.max_seq_len));
    }
    std::vector<int> ids{bos_};
    ids.insert(ids.end(), tokens.begin(), tokens.end());
    const std::size_t k = prompt_rows(z);
    std::vector<int> targets(k, -1);
    targets.insert(targets.end(), tokens.begin(), tokens.end());
    targets.push_back(eos_);
    Var<T> states = forward(g, ids, z, dropout_rng);
    return nn::cross_entropy(logits(g, states), targets);
}

template <class T>
Tensor<T> LanguageModel<T>::hidden_states(std::span<const int> tokens, std::optional<double> z) const {
    if (tokens.empty()) throw LmError("hidden_states needs at least one token");
    if (tokens.size() + 1 > config_.max_seq_len) {
        throw LmError("stream of " + std::to_string(tokens.size()) + " tokens exceeds max_seq_len " +
                      std::to_string(config_.max_seq_len));
    }
    Graph<T> g(false);
    std::vector<int> ids{bos_};
    ids.insert(ids.end(), tokens.begin(), tokens.end());
    Var<T> states = forward(g, ids, z, nullptr);
    return nn::slice_rows(states, prompt_rows(z) + 1, tokens.size()).value();
}

template <class T>
std::vector<double> LanguageModel<T>::next_log_probs(std::span<const int> prefix, std::optional<double> z,
                                                     double temperature) const {
    Graph<T> g(false);
    Var<T> states = forward(g, prefix, z, nullptr);
    Var<T> last = logits(g, nn::slice_rows(states, states.rows() - 1, 1));
    const auto& lv = last.value().data;
    std::vector<double> out(lv.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < lv.size(); ++i) {
        const bool banned = static_cast<int>(i) == pad_ || static_cast<int>(i) == bos_;
        out[i] = banned ? -std::numeric_limits<double>::infinity() : lv[i] / temperature;
        mx = std::max(mx, out[i]);
    }
    double z_sum = 0;
    for (double v : out) z_sum += std::exp(v - mx);
    const double lse = mx + std::log(z_sum);
    for (double& v : out) v -= lse;
    return out;
}

template <class T>
void LanguageModel<T>::check_lengths(std::span<const std::vector<int>> corpus) const {
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (corpus[i].size() + 1 > config_.max_seq_len) {
            throw LmError("corpus entry " + std::to_string(i) + " has " + std::to_string(corpus[i].size()) +
                          " tokens; max_seq_len " + std::to_string(config_.max_seq_len) + " allows " +
                          std::to_string(config_.max_seq_len - 1));
        }
    }
}

template <class T>
Var<T> make_soft_prompt(const LanguageModel<T>& model, Graph<T>& g, double value, const Normalizer& norm) {
    return model.soft_prompt(g, norm.z(value));
}

// ---- sampling -------------------------------------------------------------------

namespace {

double gumbel(Rng& rng) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    return -std::log(-std::log(u));
}

int draw(const std::vector<double>& logp, Rng& rng) {
    double u = rng.uniform();
    double acc = 0;
    int last_ok = -1;
    for (std::size_t i = 0; i < logp.size(); ++i) {
        if (!std::isfinite(logp[i])) continue;
        acc += std::exp(logp[i]);
        last_ok = static_cast<int>(i);
        if (u < acc) return static_cast<int>(i);
    }
    return last_ok;
}

int argmax(const std::vector<double>& logp) {
    return static_cast<int>(std::max_element(logp.begin(), logp.end()) - logp.begin());
}

struct Beam {
    std::vector<int> ids;  // starts with [BOS]
    double score = 0;      // summed log-probability
};

template <class T>
std::vector<int> beam_search(const LanguageModel<T>& model, const SampleOptions& opt, std::size_t max_len, Rng& rng,
                             std::optional<double> z, int bos, int eos) {
    const std::size_t k = opt.beam_size;
    const double temperature = opt.greedy ? 1.0 : opt.temperature;
    std::vector<Beam> beams{{{bos}, 0.0}};
    std::vector<Beam> finished;
    for (std::size_t step = 0; step < max_len && !beams.empty() && finished.size() < k; ++step) {
        struct Cand {
            std::size_t beam;
            int token;
            double score;
            double key;
        };
        std::vector<Cand> cands;
        for (std::size_t b = 0; b < beams.size(); ++b) {
            const auto lp = model.next_log_probs(beams[b].ids, z, temperature);
            for (std::size_t v = 0; v < lp.size(); ++v) {
                if (!std::isfinite(lp[v])) continue;
                const double s = beams[b].score + lp[v];
                cands.push_back({b, static_cast<int>(v), s, opt.greedy ? s : s + gumbel(rng)});
            }
        }
        const std::size_t keep = std::min(cands.size(), 2 * k);
        std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                          [](const Cand& a, const Cand& b) { return a.key > b.key; });
        cands.resize(keep);
        std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.score > b.score; });
        std::vector<Beam> next;
        for (const auto& c : cands) {
            if (next.size() >= k) break;
            Beam nb{beams[c.beam].ids, c.score};
            if (c.token == eos) {
                finished.push_back(std::move(nb));
            } else {
                nb.ids.push_back(c.token);
                next.push_back(std::move(nb));
            }
        }
        beams = std::move(next);
    }
    for (auto& b : beams) finished.push_back(std::move(b));
    auto norm_score = [](const Beam& b) { return b.score / static_cast<double>(b.ids.size()); };
    const auto best = std::max_element(finished.begin(), finished.end(),
                                       [&](const Beam& a, const Beam& b) { return norm_score(a) < norm_score(b); });
    return std::vector<int>(best->ids.begin() + 1, best->ids.end());
}

}  // namespace

template <class T>
std::vector<std::vector<int>> sample_sequences(const LanguageModel<T>& model, std::size_t n,
                                               const SampleOptions& options, Rng& rng, std::span<const double> z) {
    if (!options.greedy && !(options.temperature > 0.0)) throw LmError("temperature must be positive");
    if (options.beam_size == 0) throw LmError("beam_size must be at least 1");
    if (!z.empty() && z.size() != n) {
        throw LmError("got " + std::to_string(z.size()) + " property values for " + std::to_string(n) + " samples");
    }
    if (!z.empty() && !model.config().conditional) throw LmError("property values given to an unconditional model");
    const auto& vocab = selfies::Vocabulary::builtin();
    const int bos = vocab.bos_id();
    const int eos = vocab.eos_id();
    const std::size_t cap = model.config().max_seq_len - 1;
    const std::size_t max_len = options.max_len ? std::min(options.max_len, cap) : cap;
    if (!options.prefix.empty() && options.beam_size > 1) throw LmError("a forced prefix needs beam_size 1");
    if (options.prefix.size() > max_len) throw LmError("forced prefix is longer than max_len");
    std::vector<std::vector<int>> out;
    out.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        const std::optional<double> zs = z.empty() ? std::nullopt : std::optional<double>(z[s]);
        if (options.beam_size > 1) {
            out.push_back(beam_search(model, options, max_len, rng, zs, bos, eos));
            continue;
        }
        std::vector<int> ids{bos};
        ids.insert(ids.end(), options.prefix.begin(), options.prefix.end());
        while (ids.size() - 1 < max_len) {
            const auto lp = model.next_log_probs(ids, zs, options.greedy ? 1.0 : options.temperature);
            const int tok = options.greedy ? argmax(lp) : draw(lp, rng);
            if (tok == eos || tok < 0) break;
            ids.push_back(tok);
        }
        out.emplace_back(ids.begin() + 1, ids.end());
    }
    return out;
}

// ---- training ---------------------------------------------------------------------

template <class T>
LmTrainResult train_lm(LanguageModel<T>& model, std::span<const std::vector<int>> corpus, std::span<const double> z,
                       const LmTrainOptions& options) {
    if (corpus.empty()) throw LmError("cannot train on an empty corpus");
    if (!z.empty() && z.size() != corpus.size()) throw LmError("property count does not match corpus size");
    if (options.batch_size == 0) throw LmError("batch_size must be positive");
    model.check_lengths(corpus);
    auto& store = model.store();
    std::vector<nn::Parameter<T>*> params;
    for (auto* p : store.with_prefix("lm/")) {
        if (!p->frozen) params.push_back(p);
    }
    nn::AdamW<T> opt(params, options.adamw);
    Rng rng(options.seed);
    Rng dropout_rng = rng.fork(1);
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    LmTrainResult result;
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        double total = 0;
        double tokens = 0;
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t end = std::min(order.size(), start + options.batch_size);
            for (auto* p : params) p->zero_grad();
            double batch_loss = 0;
            for (std::size_t b = start; b < end; ++b) {
                const std::size_t idx = order[b];
                Graph<T> g;
                const std::optional<double> zi = z.empty() ? std::nullopt : std::optional<double>(z[idx]);
                Var<T> l = model.loss(g, corpus[idx], zi, model.config().dropout_rate > 0 ? &dropout_rng : nullptr);
                const double ntok = static_cast<double>(corpus[idx].size() + 1);
                total += l.value().data[0] * ntok;
                tokens += ntok;
                batch_loss += l.value().data[0];
                g.backward(nn::scale(l, 1.0 / static_cast<double>(end - start)));
            }
            if (options.grad_clip > 0) nn::clip_grad_norm(params, options.grad_clip);
            const double lr = options.schedule.at(result.steps);
            opt.step(lr);
            ++result.steps;
            if (options.on_step) {
                options.on_step({result.steps, batch_loss / static_cast<double>(end - start), lr});
            }
        }
        result.epoch_loss.push_back(total / tokens);
        result.epoch_perplexity.push_back(std::exp(total / tokens));
    }
    return result;
}

template <class T>
double evaluate_lm(const LanguageModel<T>& model, std::span<const std::vector<int>> corpus, std::span<const double> z) {
    if (corpus.empty()) throw LmError("cannot evaluate on an empty corpus");
    double total = 0, tokens = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        Graph<T> g(false);
        const std::optional<double> zi = z.empty() ? std::nullopt : std::optional<double>(z[i]);
        const double ntok = static_cast<double>(corpus[i].size() + 1);
        total += model.loss(g, corpus[i], zi, nullptr).value().data[0] * ntok;
        tokens += ntok;
    }
    return total / tokens;
}

#define S3D_INSTANTIATE_LM(T)                                                                                   \
    template class LanguageModel<T>;                                                                            \
    template Var<T> make_soft_prompt(const LanguageModel<T>&, Graph<T>&, double, const Normalizer&);            \
    template std::vector<std::vector<int>> sample_sequences(const LanguageModel<T>&, std::size_t,               \
                                                            const SampleOptions&, Rng&, std::span<const double>); \
    template LmTrainResult train_lm(LanguageModel<T>&, std::span<const std::vector<int>>, std::span<const double>, \
                                    const LmTrainOptions&);                                                     \
    template double evaluate_lm(const LanguageModel<T>&, std::span<const std::vector<int>>, std::span<const double>);

S3D_INSTANTIATE_LM(float)
S3D_INSTANTIATE_LM(double)

}  // namespace s3d::lm
