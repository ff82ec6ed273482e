#include "s3d/diffusion.hpp"

#include "s3d/bridge.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>

namespace s3d::diffusion {

using nn::Graph;
using nn::Tensor;
using nn::Var;

ScheduleKind schedule_kind_from_string(const std::string& name) {
    if (name == "cosine") return ScheduleKind::Cosine;
    if (name == "linear") return ScheduleKind::Linear;
    throw DiffusionError("unknown noise schedule '" + name + "' (expected cosine or linear)");
}

std::string to_string(ScheduleKind kind) { return kind == ScheduleKind::Cosine ? "cosine" : "linear"; }

NoiseSchedule NoiseSchedule::build(ScheduleKind kind, int T) {
    if (T < 2) throw DiffusionError("schedule needs T >= 2, got " + std::to_string(T));
    NoiseSchedule s;
    s.kind_ = kind;
    s.T_ = T;
    s.alpha_bar_.assign(static_cast<std::size_t>(T) + 1, 1.0);
    if (kind == ScheduleKind::Cosine) {
        constexpr double shift = 0.008;
        auto f = [&](double t) {
            const double c = std::cos((t / T + shift) / (1.0 + shift) * std::numbers::pi / 2.0);
            return c * c;
        };
        const double f0 = f(0.0);
        for (int t = 1; t <= T; ++t) {
            s.alpha_bar_[static_cast<std::size_t>(t)] = std::clamp(f(t) / f0, 1e-5, 1.0 - 1e-5);
        }
    } else {
        double prod = 1.0;
        for (int t = 1; t <= T; ++t) {
            const double beta = 1e-4 + (0.02 - 1e-4) * (t - 1) / static_cast<double>(T - 1);
            prod *= 1.0 - beta;
            s.alpha_bar_[static_cast<std::size_t>(t)] = prod;
        }
    }
    return s;
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > T_) {
        throw DiffusionError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(T_) + "]");
    }
    return alpha_bar_[static_cast<std::size_t>(t)];
}

double NoiseSchedule::alpha(int t) const {
    if (t < 1) throw DiffusionError("alpha is defined for t >= 1");
    return alpha_bar(t) / alpha_bar(t - 1);
}

Coords forward_noise(const NoiseSchedule& s, const Coords& x0, int t, const Coords& eps) {
    if (t < 1 || t > s.T()) {
        throw DiffusionError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(s.T()) + "]");
    }
    if (x0.size() != eps.size()) throw DiffusionError("noise and coordinates differ in atom count");
    const double a = std::sqrt(s.alpha_bar(t));
    const double b = std::sqrt(1.0 - s.alpha_bar(t));
    Coords out(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i)
        for (int k = 0; k < 3; ++k) out[i][k] = a * x0[i][k] + b * eps[i][k];
    return out;
}

void center(Coords& x) {
    if (x.empty()) return;
    chem::Vec3 m{0, 0, 0};
    for (const auto& p : x)
        for (int k = 0; k < 3; ++k) m[k] += p[k];
    for (int k = 0; k < 3; ++k) m[k] /= static_cast<double>(x.size());
    for (auto& p : x)
        for (int k = 0; k < 3; ++k) p[k] -= m[k];
}

Coords centered_noise(std::size_t n, Rng& rng) {
    Coords e(n);
    for (auto& p : e)
        for (int k = 0; k < 3; ++k) p[k] = rng.normal();
    center(e);
    return e;
}

std::array<std::array<double, 3>, 3> random_rotation(Rng& rng) {
    double q[4];
    double norm = 0;
    do {
        norm = 0;
        for (double& v : q) {
            v = rng.normal();
            norm += v * v;
        }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (double& v : q) v /= norm;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    return {{{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
             {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
             {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}}};
}

Coords rotate(const Coords& x, const std::array<std::array<double, 3>, 3>& r) {
    Coords out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        for (int a = 0; a < 3; ++a) out[i][a] = r[a][0] * x[i][0] + r[a][1] * x[i][1] + r[a][2] * x[i][2];
    return out;
}

std::vector<int> respaced_timesteps(int T, int steps) {
    if (steps < 1 || steps > T) {
        throw DiffusionError("sampling steps must lie in [1, " + std::to_string(T) + "], got " + std::to_string(steps));
    }
    if (steps == 1) return {T};
    std::vector<int> out;
    for (int i = 0; i < steps; ++i) {
        const double pos = 1.0 + static_cast<double>(i) * (T - 1) / (steps - 1);
        out.push_back(static_cast<int>(std::lround(pos)));
    }
    return out;
}

Coords posterior_mean(const NoiseSchedule& s, const Coords& xt, int t, int t_prev, const Coords& eps_hat) {
    const double ab = s.alpha_bar(t);
    const double ab_prev = t_prev == 0 ? 1.0 : s.alpha_bar(t_prev);
    const double alpha = ab / ab_prev;
    const double beta = 1.0 - alpha;
    const double coef = beta / std::sqrt(1.0 - ab);
    const double inv = 1.0 / std::sqrt(alpha);
    Coords out(xt.size());
    for (std::size_t i = 0; i < xt.size(); ++i)
        for (int k = 0; k < 3; ++k) out[i][k] = inv * (xt[i][k] - coef * eps_hat[i][k]);
    return out;
}

double posterior_std(const NoiseSchedule& s, int t, int t_prev) {
    if (t_prev == 0) return 0.0;
    const double ab = s.alpha_bar(t);
    const double ab_prev = s.alpha_bar(t_prev);
    const double beta = 1.0 - ab / ab_prev;
    return std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab));
}

// ---- configuration ---------------------------------------------------------------

void DenoiserConfig::validate() const {
    if (n_layers == 0) throw DiffusionError("denoiser needs at least one layer");
    if (n_heads == 0 || atom_hidden % n_heads != 0) {
        throw DiffusionError("atom hidden size " + std::to_string(atom_hidden) + " is not divisible by " +
                             std::to_string(n_heads) + " heads");
    }
    if (!atom_intermediate || !pair_hidden || !pair_intermediate || !cond_dim) {
        throw DiffusionError("denoiser sizes must be positive");
    }
}

void to_json(nlohmann::json& j, const DenoiserConfig& c) {
    j = {{"n layers", c.n_layers},
         {"atom hidden size", c.atom_hidden},
         {"atom intermediate size", c.atom_intermediate},
         {"pair hidden size", c.pair_hidden},
         {"pair intermediate size", c.pair_intermediate},
         {"n heads", c.n_heads},
         {"cond dim", c.cond_dim},
         {"dropout", c.dropout}};
}

void from_json(const nlohmann::json& j, DenoiserConfig& c) {
    DenoiserConfig d;
    c.n_layers = j.value("n layers", d.n_layers);
    c.atom_hidden = j.value("atom hidden size", d.atom_hidden);
    c.atom_intermediate = j.value("atom intermediate size", d.atom_intermediate);
    c.pair_hidden = j.value("pair hidden size", d.pair_hidden);
    c.pair_intermediate = j.value("pair intermediate size", d.pair_intermediate);
    c.n_heads = j.value("n heads", d.n_heads);
    c.cond_dim = j.value("cond dim", d.cond_dim);
    c.dropout = j.value("dropout", d.dropout);
}

// ---- features ----------------------------------------------------------------------

template <class T>
MoleculeFeatures<T> MoleculeFeatures<T>::from_graph(const chem::MolecularGraph2D& graph) {
    graph.validate();
    const std::size_t n = graph.atom_count();
    if (n == 0) throw DiffusionError("cannot featurize an empty molecule");
    MoleculeFeatures f;
    f.n = n;
    const auto af = chem::atom_features(graph);
    f.atoms = Tensor<T>({n, af.shape[1]});
    for (std::size_t i = 0; i < af.data.size(); ++i) f.atoms.data[i] = static_cast<T>(af.data[i]);

    const auto pf = chem::pair_features(graph);
    const auto adj = graph.adjacency();
    f.pairs = Tensor<T>({n * n, kStaticPairDim});
    for (std::size_t src = 0; src < n; ++src) {
        std::vector<int> dist(n, -1);
        std::deque<std::size_t> queue{src};
        dist[src] = 0;
        while (!queue.empty()) {
            const std::size_t u = queue.front();
            queue.pop_front();
            for (const auto& nb : adj[u]) {
                const auto v = static_cast<std::size_t>(nb.atom);
                if (dist[v] < 0) {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t row = src * n + j;
            for (std::size_t c = 0; c < chem::kPairFeatureDim; ++c) {
                f.pairs.data[row * kStaticPairDim + c] = static_cast<T>(pf.at(src, j, c));
            }
            const std::size_t bucket =
                dist[j] < 0 ? kMaxPathBucket : std::min<std::size_t>(static_cast<std::size_t>(dist[j]), kMaxPathBucket);
            f.pairs.data[row * kStaticPairDim + chem::kPairFeatureDim + bucket] = T(1);
        }
    }
    return f;
}

template <class T>
Tensor<T> radial_features(const Tensor<T>& x) {
    const std::size_t n = x.rows();
    Tensor<T> out({n * n, kRadialDim});
    constexpr std::size_t kCoarse = 16, kFine = 16;
    const double coarse_w = 8.0 / (kCoarse - 1);
    const double fine_lo = 0.8, fine_w = (3.2 - fine_lo) / (kFine - 1);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double r2 = 0;
            for (int k = 0; k < 3; ++k) {
                const double d = static_cast<double>(x.data[i * 3 + k]) - x.data[j * 3 + k];
                r2 += d * d;
            }
            const double r = std::sqrt(r2);
            T* row = out.data.data() + (i * n + j) * kRadialDim;
            for (std::size_t c = 0; c < kCoarse; ++c) {
                const double u = (r - coarse_w * static_cast<double>(c)) / coarse_w;
                row[c] = static_cast<T>(std::exp(-0.5 * u * u));
            }
            for (std::size_t c = 0; c < kFine; ++c) {
                const double u = (r - fine_lo - fine_w * static_cast<double>(c)) / fine_w;
                row[kCoarse + c] = static_cast<T>(std::exp(-0.5 * u * u));
            }
            row[kCoarse + kFine] = static_cast<T>(r);
            row[kCoarse + kFine + 1] = static_cast<T>(1.0 / (1.0 + r));
        }
    return out;
}

template <class T>
Tensor<T> to_tensor(const Coords& x) {
    Tensor<T> t({x.size(), 3});
    for (std::size_t i = 0; i < x.size(); ++i)
        for (int k = 0; k < 3; ++k) t.data[i * 3 + k] = static_cast<T>(x[i][k]);
    return t;
}

template <class T>
Coords from_tensor(const Tensor<T>& x) {
    Coords c(x.rows());
    for (std::size_t i = 0; i < c.size(); ++i)
        for (int k = 0; k < 3; ++k) c[i][k] = static_cast<double>(x.data[i * 3 + k]);
    return c;
}

// ---- model -------------------------------------------------------------------------

template <class T>
DiffusionModel<T>::DiffusionModel(DiffusionConfig config, nn::ParameterStore<T>& store, Rng& rng)
    : config_(config), schedule_(NoiseSchedule::build(config.schedule, config.T)) {
    const auto& c = config_.denoiser;
    c.validate();
    const std::size_t h = c.atom_hidden, p = c.pair_hidden;
    using L = nn::Linear<T>;
    atom_in_ = L::create(store, "diffusion/atom_in", chem::atom_feature_dim(), h, rng);
    pair_in_ = L::create(store, "diffusion/pair_in", kStaticPairDim + kRadialDim, p, rng);
    for (std::size_t b = 0; b < c.n_layers; ++b) {
        const std::string n = "diffusion/block" + std::to_string(b);
        Block blk;
        blk.ada = L::create(store, n + ".ada", c.cond_dim, 6 * h + p, rng, 1.0, true, true);
        blk.wq = L::create(store, n + ".wq", h, h, rng);
        blk.wk = L::create(store, n + ".wk", h, h, rng);
        blk.wv = L::create(store, n + ".wv", h, h, rng);
        blk.wo = L::create(store, n + ".wo", h, h, rng);
        blk.pair_ln = nn::LayerNorm<T>::create(store, n + ".pair_ln", p);
        blk.pair_bias = L::create(store, n + ".pair_bias", p, c.n_heads, rng);
        blk.outer_ln = nn::LayerNorm<T>::create(store, n + ".outer_ln", h);
        blk.outer_u = L::create(store, n + ".outer_u", h, c.pair_intermediate, rng);
        blk.outer_v = L::create(store, n + ".outer_v", h, c.pair_intermediate, rng);
        blk.outer_out = L::create(store, n + ".outer_out", c.pair_intermediate, p, rng);
        blk.ffn = nn::Mlp<T>::create(store, n + ".ffn", h, c.atom_intermediate, h, rng);
        blocks_.push_back(blk);
    }
    final_ada_ = L::create(store, "diffusion/final_ada", c.cond_dim, 2 * h, rng, 1.0, true, true);
    head_a_ = L::create(store, "diffusion/head_a", h, p, rng);
    head_b_ = L::create(store, "diffusion/head_b", h, p, rng, 1.0, false);
    head_p_ = L::create(store, "diffusion/head_p", p, p, rng);
    head_out_ = L::create(store, "diffusion/head_out", p, 1, rng, 0.1);
    skip_scale_ = L::create(store, "diffusion/skip_scale", c.cond_dim, 1, rng, 1.0, true, true);
    time_mlp_ = nn::Mlp<T>::create(store, "diffusion/time_mlp", c.cond_dim, c.cond_dim, c.cond_dim, rng);
    if (config_.conditional) {
        prop_mlp_ = nn::Mlp<T>::create(store, "diffusion/prop_mlp", 1, config_.property_hidden,
                                       config_.property_hidden, rng);
        prop_out_ = L::create(store, "diffusion/prop_out", config_.property_hidden, c.cond_dim, rng);
    }
}

template <class T>
Var<T> DiffusionModel<T>::time_embedding(Graph<T>& g, int t) const {
    const std::size_t d = config_.denoiser.cond_dim;
    const std::size_t half = d / 2;
    const double u = 1000.0 * static_cast<double>(t) / config_.T;
    Tensor<T> s({1, d});
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        s.data[i] = static_cast<T>(std::sin(u * freq));
        s.data[half + i] = static_cast<T>(std::cos(u * freq));
    }
    return time_mlp_(g, g.constant(std::move(s)));
}

template <class T>
Var<T> DiffusionModel<T>::property_embedding(Graph<T>& g, double z) const {
    if (!prop_mlp_) throw DiffusionError("property embedding requested from an unconditional model");
    Var<T> in = g.constant(Tensor<T>({1, 1}, static_cast<T>(z)));
    return (*prop_out_)(g, nn::gelu((*prop_mlp_)(g, in)));
}

template <class T>
Var<T> DiffusionModel<T>::condition(Graph<T>& g, int t, std::optional<Var<T>> c_chem, std::optional<double> z) const {
    Var<T> temb = time_embedding(g, t);
    Var<T> chem_term = c_chem ? *c_chem : g.constant(Tensor<T>({1, config_.denoiser.cond_dim}));
    std::optional<Var<T>> prop;
    if (z) prop = property_embedding(g, *z);
    return bridge::fuse_condition(chem_term, temb, prop);
}

template <class T>
Var<T> DiffusionModel<T>::predict(Graph<T>& g, const MoleculeFeatures<T>& mol, const Tensor<T>& xt,
                                  Var<T> cond) const {
    const auto& c = config_.denoiser;
    if (xt.rows() != mol.n || xt.cols() != 3) {
        throw DiffusionError("coordinates " + nn::shape_str(xt.shape) + " do not match " + std::to_string(mol.n) +
                             " atoms");
    }
    if (cond.rows() != 1 || cond.cols() != c.cond_dim) {
        throw DiffusionError("condition has shape " + nn::shape_str(cond.shape()) + ", expected [1, " +
                             std::to_string(c.cond_dim) + "]");
    }
    const std::size_t h = c.atom_hidden, p = c.pair_hidden;
    const std::optional<Var<T>> none;
    Var<T> sc = nn::silu(cond);
    Var<T> a = atom_in_(g, g.constant(mol.atoms));
    const Tensor<T> radial = radial_features(xt);
    Tensor<T> pin({mol.n * mol.n, kStaticPairDim + kRadialDim});
    for (std::size_t r = 0; r < mol.n * mol.n; ++r) {
        std::copy_n(mol.pairs.data.begin() + static_cast<std::ptrdiff_t>(r * kStaticPairDim), kStaticPairDim,
                    pin.data.begin() + static_cast<std::ptrdiff_t>(r * pin.cols()));
        std::copy_n(radial.data.begin() + static_cast<std::ptrdiff_t>(r * kRadialDim), kRadialDim,
                    pin.data.begin() + static_cast<std::ptrdiff_t>(r * pin.cols() + kStaticPairDim));
    }
    Var<T> pr = pair_in_(g, g.constant(std::move(pin)));

    for (const auto& blk : blocks_) {
        Var<T> mod = blk.ada(g, sc);
        auto chunk = [&](std::size_t k) { return nn::slice_cols(mod, k * h, h); };
        Var<T> gate_p = nn::slice_cols(mod, 6 * h, p);

        Var<T> x1 = nn::modulate(nn::layer_norm(a, none, none), chunk(0), chunk(1));
        Var<T> bias = blk.pair_bias(g, blk.pair_ln(g, pr));
        Var<T> att = nn::attention(blk.wq(g, x1), blk.wk(g, x1), blk.wv(g, x1), c.n_heads, {}, std::optional(bias));
        a = nn::gated_residual(a, chunk(2), blk.wo(g, att));

        Var<T> on = blk.outer_ln(g, a);
        Var<T> outer = nn::pair_product(blk.outer_u(g, on), blk.outer_v(g, on));
        pr = nn::gated_residual(pr, gate_p, blk.outer_out(g, outer));

        Var<T> x2 = nn::modulate(nn::layer_norm(a, none, none), chunk(3), chunk(4));
        a = nn::gated_residual(a, chunk(5), blk.ffn(g, x2));
    }

    Var<T> fmod = final_ada_(g, sc);
    Var<T> hf = nn::modulate(nn::layer_norm(a, none, none), nn::slice_cols(fmod, 0, h), nn::slice_cols(fmod, h, h));
    Var<T> e = nn::gelu(nn::add(head_p_(g, pr), nn::pair_sum(head_a_(g, hf), head_b_(g, hf))));
    Var<T> w = head_out_(g, e);
    Var<T> eps = nn::relative_vector_sum(w, xt);
    eps = nn::add(eps, nn::mul(g.constant(xt), skip_scale_(g, sc)));
    if (config_.center) eps = nn::center_rows(eps);
    return eps;
}

template <class T>
Var<T> diffusion_loss(Var<T> eps_hat, Var<T> eps) {
    if (eps_hat.shape() != eps.shape()) {
        throw DiffusionError("loss operands differ in shape: " + nn::shape_str(eps_hat.shape()) + " vs " +
                             nn::shape_str(eps.shape()));
    }
    return nn::mse(eps_hat, eps);
}

template <class T>
Coords sample_conformer(const DiffusionModel<T>& model, const chem::MolecularGraph2D& graph, const Tensor<T>& c_chem,
                        std::optional<double> z, const SamplerOptions& options, Rng& rng) {
    const auto mol = MoleculeFeatures<T>::from_graph(graph);
    const auto& sched = model.schedule();
    const auto taus = respaced_timesteps(sched.T(), options.steps);
    Coords x = centered_noise(mol.n, rng);
    if (!model.config().center) {
        for (auto& p : x)
            for (int k = 0; k < 3; ++k) p[k] = rng.normal();
    }
    for (std::size_t i = taus.size(); i-- > 0;) {
        const int t = taus[i];
        const int t_prev = i > 0 ? taus[i - 1] : 0;
        Graph<T> g(false);
        std::optional<Var<T>> cc;
        if (!c_chem.data.empty()) cc = g.constant(c_chem);
        Var<T> cond = model.condition(g, t, cc, z);
        const Coords eps = from_tensor(model.predict(g, mol, to_tensor<T>(x), cond).value());
        Coords next = posterior_mean(sched, x, t, t_prev, eps);
        const double sd = posterior_std(sched, t, t_prev);
        if (sd > 0) {
            const Coords noise = model.config().center ? centered_noise(mol.n, rng) : [&] {
                Coords e(mol.n);
                for (auto& q : e)
                    for (int k = 0; k < 3; ++k) q[k] = rng.normal();
                return e;
            }();
            for (std::size_t a = 0; a < next.size(); ++a)
                for (int k = 0; k < 3; ++k) next[a][k] += sd * noise[a][k];
        }
        if (model.config().center) center(next);
        x = std::move(next);
    }
    return x;
}

#define S3D_INSTANTIATE_DIFFUSION(T)                                                                              \
    template struct MoleculeFeatures<T>;                                                                          \
    template Tensor<T> radial_features(const Tensor<T>&);                                                         \
    template Tensor<T> to_tensor<T>(const Coords&);                                                               \
    template Coords from_tensor(const Tensor<T>&);                                                                \
    template class DiffusionModel<T>;                                                                             \
    template Var<T> diffusion_loss(Var<T>, Var<T>);                                                               \
    template Coords sample_conformer(const DiffusionModel<T>&, const chem::MolecularGraph2D&, const Tensor<T>&,   \
                                     std::optional<double>, const SamplerOptions&, Rng&);

S3D_INSTANTIATE_DIFFUSION(float)
S3D_INSTANTIATE_DIFFUSION(double)

}  // namespace s3d::diffusion
