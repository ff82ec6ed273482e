#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "s3d/chem.hpp"
#include "s3d/layers.hpp"

namespace s3d::diffusion {

class DiffusionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Coords = std::vector<chem::Vec3>;

enum class ScheduleKind { Cosine, Linear };
ScheduleKind schedule_kind_from_string(const std::string& name);
std::string to_string(ScheduleKind kind);

// Tables are indexed by t = 0..T with alpha_bar(0) = 1.
class NoiseSchedule {
public:
    static NoiseSchedule build(ScheduleKind kind, int T);

    int T() const noexcept { return T_; }
    ScheduleKind kind() const noexcept { return kind_; }
    double alpha_bar(int t) const;
    double alpha(int t) const;  // alpha_bar(t) / alpha_bar(t-1)
    double beta(int t) const { return 1.0 - alpha(t); }

private:
    ScheduleKind kind_ = ScheduleKind::Cosine;
    int T_ = 0;
    std::vector<double> alpha_bar_;
};

// sqrt(ab_t) x0 + sqrt(1 - ab_t) eps
Coords forward_noise(const NoiseSchedule& s, const Coords& x0, int t, const Coords& eps);
void center(Coords& x);
Coords centered_noise(std::size_t n, Rng& rng);
std::array<std::array<double, 3>, 3> random_rotation(Rng& rng);
Coords rotate(const Coords& x, const std::array<std::array<double, 3>, 3>& r);

// Evenly spaced increasing sub-schedule of `steps` timesteps in [1, T];
// steps == T gives 1..T.
std::vector<int> respaced_timesteps(int T, int steps);

// Reverse step from timestep t to t_prev (t_prev = 0 at the end) on a
// possibly respaced schedule.
Coords posterior_mean(const NoiseSchedule& s, const Coords& xt, int t, int t_prev, const Coords& eps_hat);
double posterior_std(const NoiseSchedule& s, int t, int t_prev);

struct DenoiserConfig {
    std::size_t n_layers = 4;
    std::size_t atom_hidden = 128;
    std::size_t atom_intermediate = 256;
    std::size_t pair_hidden = 32;
    std::size_t pair_intermediate = 64;
    std::size_t n_heads = 4;
    std::size_t cond_dim = 128;
    double dropout = 0.0;

    void validate() const;
};

struct DiffusionConfig {
    DenoiserConfig denoiser;
    ScheduleKind schedule = ScheduleKind::Cosine;
    int T = 1000;
    bool center = true;
    bool conditional = false;  // property embedding enabled
    std::size_t property_hidden = 64;
};

void to_json(nlohmann::json& j, const DenoiserConfig& c);
void from_json(const nlohmann::json& j, DenoiserConfig& c);

// Static per-molecule inputs: atom features and distance-free pair channels
// (bond channels plus a shortest-path one-hot).
template <class T>
struct MoleculeFeatures {
    std::size_t n = 0;
    nn::Tensor<T> atoms;  // [N, atom_feature_dim]
    nn::Tensor<T> pairs;  // [N*N, kStaticPairDim]

    static MoleculeFeatures from_graph(const chem::MolecularGraph2D& graph);
};

constexpr std::size_t kMaxPathBucket = 6;
constexpr std::size_t kStaticPairDim = chem::kPairFeatureDim + kMaxPathBucket + 1;
// 16 coarse Gaussians over 0..8 A, 16 fine ones over 0.8..3.2 A, d and 1/(1+d).
constexpr std::size_t kRadialDim = 34;

// Radial encoding of the current coordinates, [N*N, kRadialDim].
template <class T>
nn::Tensor<T> radial_features(const nn::Tensor<T>& x);

template <class T>
nn::Tensor<T> to_tensor(const Coords& x);
template <class T>
Coords from_tensor(const nn::Tensor<T>& x);

// Noise predictor with relational attention, outer-product pair updates and
// adaLN conditioning. The output is a weighted sum of relative position
// vectors plus a scalar multiple of x_t, so it rotates with the input.
// Parameters live under "diffusion/".
template <class T>
class DiffusionModel {
public:
    DiffusionModel(DiffusionConfig config, nn::ParameterStore<T>& store, Rng& rng);

    const DiffusionConfig& config() const noexcept { return config_; }
    const NoiseSchedule& schedule() const noexcept { return schedule_; }

    nn::Var<T> time_embedding(nn::Graph<T>& g, int t) const;
    // z-scored property -> [1, cond_dim].
    nn::Var<T> property_embedding(nn::Graph<T>& g, double z) const;
    // c_chem (absent = zero) + time embedding + optional property embedding.
    nn::Var<T> condition(nn::Graph<T>& g, int t, std::optional<nn::Var<T>> c_chem, std::optional<double> z) const;

    // x_t: [N, 3]; cond: [1, cond_dim]. Returns eps_hat [N, 3].
    nn::Var<T> predict(nn::Graph<T>& g, const MoleculeFeatures<T>& mol, const nn::Tensor<T>& xt,
                       nn::Var<T> cond) const;

private:
    struct Block {
        nn::Linear<T> ada;  // cond -> 6 * atom_hidden + pair_hidden, zero init
        nn::Linear<T> wq, wk, wv, wo;
        nn::LayerNorm<T> pair_ln;
        nn::Linear<T> pair_bias;
        nn::LayerNorm<T> outer_ln;
        nn::Linear<T> outer_u, outer_v, outer_out;
        nn::Mlp<T> ffn;
    };

    DiffusionConfig config_;
    NoiseSchedule schedule_;
    nn::Linear<T> atom_in_;
    nn::Linear<T> pair_in_;
    std::vector<Block> blocks_;
    nn::Linear<T> final_ada_;
    nn::Linear<T> head_a_, head_b_, head_p_, head_out_;
    nn::Linear<T> skip_scale_;
    nn::Mlp<T> time_mlp_;
    std::optional<nn::Mlp<T>> prop_mlp_;
    std::optional<nn::Linear<T>> prop_out_;
};

// Mean squared error over all N x 3 entries.
template <class T>
nn::Var<T> diffusion_loss(nn::Var<T> eps_hat, nn::Var<T> eps);

struct SamplerOptions {
    int steps = 100;
};

// Ancestral sampling from x_T ~ N(0, I) (centered). c_chem is [1, cond_dim]
// or empty for a zero chemical condition.
template <class T>
Coords sample_conformer(const DiffusionModel<T>& model, const chem::MolecularGraph2D& graph,
                        const nn::Tensor<T>& c_chem, std::optional<double> z, const SamplerOptions& options, Rng& rng);

}  // namespace s3d::diffusion
