#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "s3d/bridge.hpp"
#include "s3d/diffusion.hpp"
#include "s3d/lm.hpp"

namespace s3d::stage2 {

// One training conformer with everything the denoiser needs.
template <class T>
struct Example {
    std::vector<int> tokens;  // SELFIES ids without [BOS]/[EOS]
    chem::MolecularGraph2D graph;
    diffusion::MoleculeFeatures<T> mol;
    diffusion::Coords x0;   // centered
    std::optional<double> z;  // z-scored property for conditional runs
    nn::Tensor<T> hidden;   // frozen LM states [L, d]
};

template <class T>
Example<T> make_example(const lm::LanguageModel<T>& model, const std::string& selfies_text,
                        const chem::MolecularGraph2D& graph, const chem::Conformer& conformer,
                        std::optional<double> z);

struct Options {
    std::size_t epochs = 10;
    std::size_t batch_size = 16;
    nn::LrSchedule schedule;
    nn::AdamWConfig adamw;
    double grad_clip = 1.0;
    std::uint64_t seed = 0;
    bool zero_bridge = false;  // condition vector forced to zero
    bool finetune_lm = false;  // LM parameters join the optimizer
    std::size_t validation_draws = 4;
    std::function<void(const lm::LmStepLog&)> on_step;
};

struct Result {
    std::vector<double> epoch_loss;
    std::optional<double> validation_loss;  // after the last epoch, when a validation set is given
    std::int64_t steps = 0;
};

// Chemical condition c_chem [1, cond_dim] for one example; absent under zero_bridge.
template <class T>
std::optional<nn::Var<T>> chem_condition(nn::Graph<T>& g, const lm::LanguageModel<T>& model,
                                         const bridge::Bridge<T>& bridge, const Example<T>& ex,
                                         const Options& options);

struct Draw {
    int t = 1;
    diffusion::Coords eps;
    std::array<std::array<double, 3>, 3> rotation{};
};

Draw make_draw(std::size_t n_atoms, int T, bool centered, Rng& rng);

// Noise-prediction loss for one example under a given draw.
template <class T>
nn::Var<T> example_loss(nn::Graph<T>& g, const lm::LanguageModel<T>& model, const bridge::Bridge<T>& bridge,
                        const diffusion::DiffusionModel<T>& diff, const Example<T>& ex, const Draw& draw,
                        const Options& options);

// Mean loss over validation_draws fixed draws per example. The draws depend
// only on `seed`, so runs that share a seed see identical noise.
template <class T>
double validation_loss(const lm::LanguageModel<T>& model, const bridge::Bridge<T>& bridge,
                       const diffusion::DiffusionModel<T>& diff, const std::vector<Example<T>>& examples,
                       const Options& options);

// Trains the bridge and denoiser (plus the LM under finetune_lm) with AdamW.
template <class T>
Result train(lm::LanguageModel<T>& model, bridge::Bridge<T>& bridge, diffusion::DiffusionModel<T>& diff,
             nn::ParameterStore<T>& store, const std::vector<Example<T>>& train_set,
             const std::vector<Example<T>>& valid_set, const Options& options);

}  // namespace s3d::stage2
