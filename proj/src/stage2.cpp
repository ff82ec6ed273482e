#include "s3d/stage2.hpp"

#include <numeric>

#include "s3d/selfies.hpp"

namespace s3d::stage2 {

using nn::Graph;
using nn::Tensor;
using nn::Var;

template <class T>
Example<T> make_example(const lm::LanguageModel<T>& model, const std::string& selfies_text,
                        const chem::MolecularGraph2D& graph, const chem::Conformer& conformer,
                        std::optional<double> z) {
    Example<T> ex;
    ex.tokens = selfies::tokenize(selfies_text).vocab_ids;
    ex.graph = graph;
    ex.mol = diffusion::MoleculeFeatures<T>::from_graph(graph);
    ex.x0 = conformer.coordinates;
    diffusion::center(ex.x0);
    ex.z = z;
    ex.hidden = model.hidden_states(ex.tokens, z);
    return ex;
}

template <class T>
std::optional<Var<T>> chem_condition(Graph<T>& g, const lm::LanguageModel<T>& model, const bridge::Bridge<T>& bridge,
                                     const Example<T>& ex, const Options& options) {
    if (options.zero_bridge) return std::nullopt;
    Var<T> h;
    if (options.finetune_lm && g.grad_enabled()) {
        std::vector<int> ids{selfies::Vocabulary::builtin().bos_id()};
        ids.insert(ids.end(), ex.tokens.begin(), ex.tokens.end());
        Var<T> states = model.forward(g, ids, ex.z, nullptr);
        h = nn::slice_rows(states, model.prompt_rows(ex.z) + 1, ex.tokens.size());
    } else {
        h = g.constant(ex.hidden);
    }
    return bridge(g, h);
}

Draw make_draw(std::size_t n_atoms, int T, bool centered, Rng& rng) {
    Draw d;
    d.t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(T)));
    if (centered) {
        d.eps = diffusion::centered_noise(n_atoms, rng);
    } else {
        d.eps.resize(n_atoms);
        for (auto& p : d.eps)
            for (double& v : p) v = rng.normal();
    }
    d.rotation = diffusion::random_rotation(rng);
    return d;
}

template <class T>
Var<T> example_loss(Graph<T>& g, const lm::LanguageModel<T>& model, const bridge::Bridge<T>& bridge,
                    const diffusion::DiffusionModel<T>& diff, const Example<T>& ex, const Draw& draw,
                    const Options& options) {
    const auto x0 = diffusion::rotate(ex.x0, draw.rotation);
    const auto xt = diffusion::forward_noise(diff.schedule(), x0, draw.t, draw.eps);
    Var<T> cond = diff.condition(g, draw.t, chem_condition(g, model, bridge, ex, options), ex.z);
    Var<T> eps_hat = diff.predict(g, ex.mol, diffusion::to_tensor<T>(xt), cond);
    return diffusion::diffusion_loss(eps_hat, g.constant(diffusion::to_tensor<T>(draw.eps)));
}

template <class T>
double validation_loss(const lm::LanguageModel<T>& model, const bridge::Bridge<T>& bridge,
                       const diffusion::DiffusionModel<T>& diff, const std::vector<Example<T>>& examples,
                       const Options& options) {
    if (examples.empty()) throw diffusion::DiffusionError("validation set is empty");
    Rng rng = Rng(options.seed).fork(0x7661);
    double total = 0;
    std::size_t count = 0;
    for (const auto& ex : examples) {
        for (std::size_t k = 0; k < options.validation_draws; ++k) {
            const Draw d = make_draw(ex.mol.n, diff.schedule().T(), diff.config().center, rng);
            Graph<T> g(false);
            total += static_cast<double>(example_loss(g, model, bridge, diff, ex, d, options).value().data[0]);
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

template <class T>
Result train(lm::LanguageModel<T>& model, bridge::Bridge<T>& bridge, diffusion::DiffusionModel<T>& diff,
             nn::ParameterStore<T>& store, const std::vector<Example<T>>& train_set,
             const std::vector<Example<T>>& valid_set, const Options& options) {
    if (train_set.empty()) throw diffusion::DiffusionError("stage-2 training set is empty");
    if (options.batch_size == 0) throw diffusion::DiffusionError("batch size must be positive");
    (void)model;
    store.set_frozen("lm/", !options.finetune_lm);
    std::vector<nn::Parameter<T>*> params;
    for (auto* p : store.with_prefix("diffusion/")) params.push_back(p);
    if (!options.zero_bridge)
        for (auto* p : store.with_prefix("bridge/")) params.push_back(p);
    if (options.finetune_lm)
        for (auto* p : store.with_prefix("lm/")) params.push_back(p);
    nn::AdamW<T> opt(params, options.adamw);
    Rng rng(options.seed);
    Rng draws = rng.fork(1);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    Result result;
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        double total = 0;
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t end = std::min(order.size(), start + options.batch_size);
            for (auto* p : params) p->zero_grad();
            double batch = 0;
            for (std::size_t b = start; b < end; ++b) {
                const auto& ex = train_set[order[b]];
                const Draw d = make_draw(ex.mol.n, diff.schedule().T(), diff.config().center, draws);
                Graph<T> g;
                Var<T> l = example_loss(g, model, bridge, diff, ex, d, options);
                batch += static_cast<double>(l.value().data[0]);
                g.backward(nn::scale(l, 1.0 / static_cast<double>(end - start)));
            }
            total += batch;
            if (options.grad_clip > 0) nn::clip_grad_norm(params, options.grad_clip);
            const double lr = options.schedule.at(result.steps);
            opt.step(lr);
            ++result.steps;
            if (options.on_step) options.on_step({result.steps, batch / static_cast<double>(end - start), lr});
        }
        result.epoch_loss.push_back(total / static_cast<double>(order.size()));
    }
    store.set_frozen("lm/", false);
    if (!valid_set.empty()) result.validation_loss = validation_loss(model, bridge, diff, valid_set, options);
    return result;
}

#define S3D_INSTANTIATE_STAGE2(T)                                                                                  \
    template struct Example<T>;                                                                                    \
    template Example<T> make_example(const lm::LanguageModel<T>&, const std::string&, const chem::MolecularGraph2D&, \
                                     const chem::Conformer&, std::optional<double>);                               \
    template std::optional<Var<T>> chem_condition(Graph<T>&, const lm::LanguageModel<T>&, const bridge::Bridge<T>&, \
                                                  const Example<T>&, const Options&);                              \
    template Var<T> example_loss(Graph<T>&, const lm::LanguageModel<T>&, const bridge::Bridge<T>&,                 \
                                 const diffusion::DiffusionModel<T>&, const Example<T>&, const Draw&,              \
                                 const Options&);                                                                  \
    template double validation_loss(const lm::LanguageModel<T>&, const bridge::Bridge<T>&,                         \
                                    const diffusion::DiffusionModel<T>&, const std::vector<Example<T>>&,           \
                                    const Options&);                                                               \
    template Result train(lm::LanguageModel<T>&, bridge::Bridge<T>&, diffusion::DiffusionModel<T>&,                \
                          nn::ParameterStore<T>&, const std::vector<Example<T>>&, const std::vector<Example<T>>&,  \
                          const Options&);

S3D_INSTANTIATE_STAGE2(float)
S3D_INSTANTIATE_STAGE2(double)

}  // namespace s3d::stage2
