#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "s3d/autograd.hpp"

namespace s3d::nn {

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <class T>
bool Tensor<T>::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](T v) { return std::isfinite(v); });
}

// ---- parameters -------------------------------------------------------------------

template <class T>
Parameter<T>& ParameterStore<T>::add(const std::string& name, Tensor<T> value) {
    if (index_.contains(name)) {
        throw std::invalid_argument("duplicate parameter name " + name);
    }
    index_.emplace(name, params_.size());
    Parameter<T>& p = params_.emplace_back();
    p.name = name;
    p.grad = Tensor<T>(value.shape);
    p.value = std::move(value);
    return p;
}

template <class T>
Parameter<T>& ParameterStore<T>::normal(const std::string& name, Shape shape, Rng& rng, double gain) {
    Tensor<T> value(shape);
    const double fan_in = shape.empty() ? 1.0 : static_cast<double>(std::max<std::size_t>(shape[0], 1));
    const double sd = gain / std::sqrt(fan_in);
    for (auto& v : value.data) v = static_cast<T>(rng.normal() * sd);
    return add(name, std::move(value));
}

template <class T>
Parameter<T>& ParameterStore<T>::constant(const std::string& name, Shape shape, T value) {
    return add(name, Tensor<T>(std::move(shape), value));
}

template <class T>
Parameter<T>* ParameterStore<T>::find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
}

template <class T>
const Parameter<T>* ParameterStore<T>::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
}

template <class T>
Parameter<T>& ParameterStore<T>::at(const std::string& name) {
    if (auto* p = find(name)) return *p;
    throw std::out_of_range("no parameter named " + name);
}

template <class T>
std::vector<Parameter<T>*> ParameterStore<T>::with_prefix(std::string_view prefix) {
    std::vector<Parameter<T>*> out;
    for (auto& p : params_) {
        if (p.name.starts_with(prefix)) out.push_back(&p);
    }
    return out;
}

template <class T>
void ParameterStore<T>::set_frozen(std::string_view prefix, bool frozen) {
    for (auto* p : with_prefix(prefix)) p->frozen = frozen;
}

template <class T>
void ParameterStore<T>::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

template <class T>
std::size_t ParameterStore<T>::count(std::string_view prefix) const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        if (p.name.starts_with(prefix)) n += p.value.size();
    }
    return n;
}

// ---- graph ----------------------------------------------------------------------

template <class T>
Graph<T>::Graph(bool grad_enabled) : grad_enabled_(grad_enabled) {
#ifdef NDEBUG
    check_finite_ = false;
#else
    check_finite_ = true;
#endif
}

template <class T>
Var<T> Graph<T>::constant(Tensor<T> value) {
    Node& n = nodes_.emplace_back();
    n.value = std::move(value);
    return {this, static_cast<int>(nodes_.size() - 1)};
}

template <class T>
Var<T> Graph<T>::param(Parameter<T>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
        return {this, it->second};
    }
    Node& n = nodes_.emplace_back();
    n.value = p.value;
    n.requires_grad = grad_enabled_ && !p.frozen;
    n.param = n.requires_grad ? &p : nullptr;
    const int id = static_cast<int>(nodes_.size() - 1);
    param_nodes_.emplace(&p, id);
    return {this, id};
}

template <class T>
Var<T> Graph<T>::record(Tensor<T> value, std::span<const Var<T>> inputs, std::function<void(Graph&, int)> backward,
                        const char* op) {
    if (check_finite_ && !value.all_finite()) {
        throw NumericError(std::string("non-finite value produced by ") + op);
    }
    Node& n = nodes_.emplace_back();
    n.value = std::move(value);
    if (grad_enabled_) {
        for (const auto& in : inputs) {
            if (in.g != this) throw std::invalid_argument(std::string(op) + ": operands belong to different graphs");
            if (node(in.id).requires_grad) {
                n.requires_grad = true;
                break;
            }
        }
    }
    if (n.requires_grad) n.backward = std::move(backward);
    return {this, static_cast<int>(nodes_.size() - 1)};
}

template <class T>
Tensor<T>& Graph<T>::grad_of(int id) {
    Node& n = node(id);
    if (n.grad.data.size() != n.value.data.size() || n.grad.shape != n.value.shape) {
        n.grad = Tensor<T>(n.value.shape);
    }
    return n.grad;
}

template <class T>
void Graph<T>::backward(Var<T> root) {
    if (root.g != this) throw std::invalid_argument("backward: root belongs to another graph");
    if (!node(root.id).requires_grad) return;
    auto& seed = grad_of(root.id);
    std::fill(seed.data.begin(), seed.data.end(), T(1));
    for (int id = root.id; id >= 0; --id) {
        Node& n = node(id);
        if (!n.requires_grad || n.grad.data.empty()) continue;
        if (n.backward) n.backward(*this, id);
        if (n.param) {
            auto& pg = n.param->grad.data;
            for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad.data[i];
        }
    }
}

// ---- op helpers -------------------------------------------------------------------

namespace {

template <class T>
Tensor<T>* grad_target(Graph<T>& g, int id) {
    return g.node(id).requires_grad ? &g.grad_of(id) : nullptr;
}

template <class T>
[[noreturn]] void shape_fail(const char* op, const Var<T>& a, const Var<T>& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
}

struct Broadcast {
    std::size_t rows, cols, brows, bcols;
    std::size_t b_index(std::size_t i, std::size_t j) const {
        return (brows == 1 ? 0 : i) * bcols + (bcols == 1 ? 0 : j);
    }
};

template <class T>
Broadcast broadcast_of(const char* op, const Var<T>& a, const Var<T>& b) {
    const std::size_t r = a.rows(), c = a.cols(), br = b.rows(), bc = b.cols();
    if ((br != r && br != 1) || (bc != c && bc != 1)) shape_fail(op, a, b);
    return {r, c, br, bc};
}

template <class T>
Var<T> make(Graph<T>& g, Tensor<T> value, std::initializer_list<Var<T>> inputs,
            std::function<void(Graph<T>&, int)> backward, const char* op) {
    std::vector<Var<T>> ins(inputs);
    return g.record(std::move(value), ins, std::move(backward), op);
}

}  // namespace

// ---- elementwise ------------------------------------------------------------------

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
    const auto bc = broadcast_of("add", a, b);
    Tensor<T> out = a.value();
    const auto& bv = b.value().data;
    for (std::size_t i = 0; i < bc.rows; ++i)
        for (std::size_t j = 0; j < bc.cols; ++j) out.data[i * bc.cols + j] += bv[bc.b_index(i, j)];
    return make<T>(*a.g, std::move(out), {a, b}, [a, b, bc](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        if (auto* ga = grad_target(g, a.id))
            for (std::size_t i = 0; i < go.size(); ++i) ga->data[i] += go[i];
        if (auto* gb = grad_target(g, b.id))
            for (std::size_t i = 0; i < bc.rows; ++i)
                for (std::size_t j = 0; j < bc.cols; ++j) gb->data[bc.b_index(i, j)] += go[i * bc.cols + j];
    }, "add");
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
    const auto bc = broadcast_of("sub", a, b);
    Tensor<T> out = a.value();
    const auto& bv = b.value().data;
    for (std::size_t i = 0; i < bc.rows; ++i)
        for (std::size_t j = 0; j < bc.cols; ++j) out.data[i * bc.cols + j] -= bv[bc.b_index(i, j)];
    return make<T>(*a.g, std::move(out), {a, b}, [a, b, bc](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        if (auto* ga = grad_target(g, a.id))
            for (std::size_t i = 0; i < go.size(); ++i) ga->data[i] += go[i];
        if (auto* gb = grad_target(g, b.id))
            for (std::size_t i = 0; i < bc.rows; ++i)
                for (std::size_t j = 0; j < bc.cols; ++j) gb->data[bc.b_index(i, j)] -= go[i * bc.cols + j];
    }, "sub");
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
    const auto bc = broadcast_of("mul", a, b);
    Tensor<T> out = a.value();
    const auto& bv = b.value().data;
    for (std::size_t i = 0; i < bc.rows; ++i)
        for (std::size_t j = 0; j < bc.cols; ++j) out.data[i * bc.cols + j] *= bv[bc.b_index(i, j)];
    return make<T>(*a.g, std::move(out), {a, b}, [a, b, bc](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        const auto& av = g.node(a.id).value.data;
        const auto& bv = g.node(b.id).value.data;
        if (auto* ga = grad_target(g, a.id))
            for (std::size_t i = 0; i < bc.rows; ++i)
                for (std::size_t j = 0; j < bc.cols; ++j)
                    ga->data[i * bc.cols + j] += go[i * bc.cols + j] * bv[bc.b_index(i, j)];
        if (auto* gb = grad_target(g, b.id))
            for (std::size_t i = 0; i < bc.rows; ++i)
                for (std::size_t j = 0; j < bc.cols; ++j)
                    gb->data[bc.b_index(i, j)] += go[i * bc.cols + j] * av[i * bc.cols + j];
    }, "mul");
}

template <class T>
Var<T> scale(Var<T> a, double s) {
    Tensor<T> out = a.value();
    for (auto& v : out.data) v = static_cast<T>(v * s);
    return make<T>(*a.g, std::move(out), {a}, [a, s](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        auto& ga = g.grad_of(a.id).data;
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += static_cast<T>(go[i] * s);
    }, "scale");
}

template <class T>
Var<T> add_const(Var<T> a, double s) {
    Tensor<T> out = a.value();
    for (auto& v : out.data) v = static_cast<T>(v + s);
    return make<T>(*a.g, std::move(out), {a}, [a](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        auto& ga = g.grad_of(a.id).data;
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }, "add_const");
}

// ---- matmul / linear ----------------------------------------------------------------

namespace {

template <class T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        T* ci = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T aip = a[i * k + p];
            if (aip == T(0)) continue;
            const T* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

// ga[m,k] += go[m,n] * b[k,n]^T ; gb[k,n] += a[m,k]^T * go[m,n]
template <class T>
void gemm_backward(const T* a, const T* b, const T* go, T* ga, T* gb, std::size_t m, std::size_t k, std::size_t n) {
    if (ga) {
        for (std::size_t i = 0; i < m; ++i) {
            const T* gi = go + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const T* bp = b + p * n;
                T s = 0;
                for (std::size_t j = 0; j < n; ++j) s += gi[j] * bp[j];
                ga[i * k + p] += s;
            }
        }
    }
    if (gb) {
        for (std::size_t i = 0; i < m; ++i) {
            const T* gi = go + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const T aip = a[i * k + p];
                if (aip == T(0)) continue;
                T* gbp = gb + p * n;
                for (std::size_t j = 0; j < n; ++j) gbp[j] += aip * gi[j];
            }
        }
    }
}

}  // namespace

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) shape_fail("matmul", a, b);
    Tensor<T> out({m, n});
    gemm_acc(a.value().data.data(), b.value().data.data(), out.data.data(), m, k, n);
    return make<T>(*a.g, std::move(out), {a, b}, [a, b, m, k, n](Graph<T>& g, int self) {
        auto* ga = grad_target(g, a.id);
        auto* gb = grad_target(g, b.id);
        gemm_backward(g.node(a.id).value.data.data(), g.node(b.id).value.data.data(), g.node(self).grad.data.data(),
                      ga ? ga->data.data() : nullptr, gb ? gb->data.data() : nullptr, m, k, n);
    }, "matmul");
}

template <class T>
Var<T> linear(Var<T> x, Var<T> w, std::optional<Var<T>> b) {
    const std::size_t m = x.rows(), k = x.cols(), n = w.cols();
    if (w.rows() != k) shape_fail("linear", x, w);
    if (b && (b->rows() != 1 || b->cols() != n)) shape_fail("linear(bias)", w, *b);
    Tensor<T> out({m, n});
    if (b) {
        const auto& bv = b->value().data;
        for (std::size_t i = 0; i < m; ++i) std::copy(bv.begin(), bv.end(), out.data.begin() + i * n);
    }
    gemm_acc(x.value().data.data(), w.value().data.data(), out.data.data(), m, k, n);
    std::vector<Var<T>> ins{x, w};
    if (b) ins.push_back(*b);
    const int bias_id = b ? b->id : -1;
    return x.g->record(std::move(out), ins, [x, w, bias_id, m, k, n](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        auto* gx = grad_target(g, x.id);
        auto* gw = grad_target(g, w.id);
        gemm_backward(g.node(x.id).value.data.data(), g.node(w.id).value.data.data(), go.data(),
                      gx ? gx->data.data() : nullptr, gw ? gw->data.data() : nullptr, m, k, n);
        if (bias_id >= 0) {
            if (auto* gb = grad_target(g, bias_id))
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) gb->data[j] += go[i * n + j];
        }
    }, "linear");
}

// ---- normalization / activations -------------------------------------------------

template <class T>
Var<T> layer_norm(Var<T> x, std::optional<Var<T>> gamma, std::optional<Var<T>> beta, double eps) {
    const std::size_t r = x.rows(), c = x.cols();
    if (gamma && (gamma->rows() != 1 || gamma->cols() != c)) shape_fail("layer_norm(gamma)", x, *gamma);
    if (beta && (beta->rows() != 1 || beta->cols() != c)) shape_fail("layer_norm(beta)", x, *beta);
    const auto& xv = x.value().data;
    std::vector<T> xhat(r * c);
    std::vector<T> rstd(r);
    Tensor<T> out({r, c});
    for (std::size_t i = 0; i < r; ++i) {
        double mu = 0;
        for (std::size_t j = 0; j < c; ++j) mu += xv[i * c + j];
        mu /= static_cast<double>(c);
        double var = 0;
        for (std::size_t j = 0; j < c; ++j) {
            const double d = xv[i * c + j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double rs = 1.0 / std::sqrt(var + eps);
        rstd[i] = static_cast<T>(rs);
        for (std::size_t j = 0; j < c; ++j) {
            const T h = static_cast<T>((xv[i * c + j] - mu) * rs);
            xhat[i * c + j] = h;
            T y = h;
            if (gamma) y *= gamma->value().data[j];
            if (beta) y += beta->value().data[j];
            out.data[i * c + j] = y;
        }
    }
    std::vector<Var<T>> ins{x};
    if (gamma) ins.push_back(*gamma);
    if (beta) ins.push_back(*beta);
    const int gid = gamma ? gamma->id : -1;
    const int bid = beta ? beta->id : -1;
    return x.g->record(std::move(out), ins,
                       [x, gid, bid, r, c, xhat = std::move(xhat), rstd = std::move(rstd)](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        const T* gam = gid >= 0 ? g.node(gid).value.data.data() : nullptr;
        if (gid >= 0) {
            if (auto* gg = grad_target(g, gid))
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) gg->data[j] += go[i * c + j] * xhat[i * c + j];
        }
        if (bid >= 0) {
            if (auto* gb = grad_target(g, bid))
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) gb->data[j] += go[i * c + j];
        }
        if (auto* gx = grad_target(g, x.id)) {
            std::vector<double> dh(c);
            for (std::size_t i = 0; i < r; ++i) {
                double m1 = 0, m2 = 0;
                for (std::size_t j = 0; j < c; ++j) {
                    dh[j] = go[i * c + j] * (gam ? gam[j] : T(1));
                    m1 += dh[j];
                    m2 += dh[j] * xhat[i * c + j];
                }
                m1 /= static_cast<double>(c);
                m2 /= static_cast<double>(c);
                for (std::size_t j = 0; j < c; ++j)
                    gx->data[i * c + j] += static_cast<T>(rstd[i] * (dh[j] - m1 - xhat[i * c + j] * m2));
            }
        }
    }, "layer_norm");
}

template <class T>
Var<T> softmax_rows(Var<T> x) {
    const std::size_t r = x.rows(), c = x.cols();
    const auto& xv = x.value().data;
    Tensor<T> out({r, c});
    for (std::size_t i = 0; i < r; ++i) {
        T mx = xv[i * c];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, xv[i * c + j]);
        double s = 0;
        for (std::size_t j = 0; j < c; ++j) {
            const double e = std::exp(static_cast<double>(xv[i * c + j] - mx));
            out.data[i * c + j] = static_cast<T>(e);
            s += e;
        }
        for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] = static_cast<T>(out.data[i * c + j] / s);
    }
    return make<T>(*x.g, std::move(out), {x}, [x, r, c](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        const auto& y = g.node(self).value.data;
        auto& gx = g.grad_of(x.id).data;
        for (std::size_t i = 0; i < r; ++i) {
            double dot = 0;
            for (std::size_t j = 0; j < c; ++j) dot += go[i * c + j] * y[i * c + j];
            for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += static_cast<T>(y[i * c + j] * (go[i * c + j] - dot));
        }
    }, "softmax_rows");
}

template <class T>
Var<T> gelu(Var<T> x) {
    Tensor<T> out = x.value();
    for (auto& v : out.data) v = static_cast<T>(0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)));
    return make<T>(*x.g, std::move(out), {x}, [x](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        const auto& xv = g.node(x.id).value.data;
        auto& gx = g.grad_of(x.id).data;
        const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
        for (std::size_t i = 0; i < go.size(); ++i) {
            const double v = xv[i];
            const double d = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
            gx[i] += static_cast<T>(go[i] * d);
        }
    }, "gelu");
}

template <class T>
Var<T> silu(Var<T> x) {
    Tensor<T> out = x.value();
    for (auto& v : out.data) v = static_cast<T>(v / (1.0 + std::exp(-static_cast<double>(v))));
    return make<T>(*x.g, std::move(out), {x}, [x](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        const auto& xv = g.node(x.id).value.data;
        auto& gx = g.grad_of(x.id).data;
        for (std::size_t i = 0; i < go.size(); ++i) {
            const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(xv[i])));
            gx[i] += static_cast<T>(go[i] * (s + xv[i] * s * (1.0 - s)));
        }
    }, "silu");
}

// ---- indexing / shape -------------------------------------------------------------

template <class T>
Var<T> embedding(Var<T> table, std::span<const int> ids) {
    const std::size_t v = table.rows(), d = table.cols();
    Tensor<T> out({ids.size(), d});
    const auto& tv = table.value().data;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
            throw ShapeError("embedding: id " + std::to_string(ids[i]) + " outside table of " + std::to_string(v) +
                             " rows");
        }
        std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(ids[i]) * d), d,
                    out.data.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    std::vector<int> saved(ids.begin(), ids.end());
    return make<T>(*table.g, std::move(out), {table}, [table, d, saved = std::move(saved)](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        auto& gt = g.grad_of(table.id).data;
        for (std::size_t i = 0; i < saved.size(); ++i)
            for (std::size_t j = 0; j < d; ++j) gt[static_cast<std::size_t>(saved[i]) * d + j] += go[i * d + j];
    }, "embedding");
}

template <class T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t c = parts[0].cols();
    std::size_t r = 0;
    for (const auto& p : parts) {
        if (p.cols() != c) shape_fail("concat_rows", parts[0], p);
        r += p.rows();
    }
    Tensor<T> out({r, c});
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.value().data.begin(), p.value().data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
        off += p.value().size();
    }
    std::vector<Var<T>> saved(parts.begin(), parts.end());
    return parts[0].g->record(std::move(out), saved, [saved](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        std::size_t off = 0;
        for (const auto& p : saved) {
            const std::size_t n = g.node(p.id).value.size();
            if (auto* gp = grad_target(g, p.id))
                for (std::size_t i = 0; i < n; ++i) gp->data[i] += go[off + i];
            off += n;
        }
    }, "concat_rows");
}

template <class T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t r = parts[0].rows();
    std::size_t c = 0;
    for (const auto& p : parts) {
        if (p.rows() != r) shape_fail("concat_cols", parts[0], p);
        c += p.cols();
    }
    Tensor<T> out({r, c});
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t pc = p.cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < pc; ++j) out.data[i * c + off + j] = p.value().data[i * pc + j];
        off += pc;
    }
    std::vector<Var<T>> saved(parts.begin(), parts.end());
    return parts[0].g->record(std::move(out), saved, [saved, r, c](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        std::size_t off = 0;
        for (const auto& p : saved) {
            const std::size_t pc = g.node(p.id).value.cols();
            if (auto* gp = grad_target(g, p.id))
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < pc; ++j) gp->data[i * pc + j] += go[i * c + off + j];
            off += pc;
        }
    }, "concat_cols");
}

template <class T>
Var<T> slice_rows(Var<T> x, std::size_t start, std::size_t count) {
    const std::size_t c = x.cols();
    if (start + count > x.rows()) {
        throw ShapeError("slice_rows: rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of " + shape_str(x.shape()));
    }
    Tensor<T> out({count, c});
    std::copy_n(x.value().data.begin() + static_cast<std::ptrdiff_t>(start * c), count * c, out.data.begin());
    return make<T>(*x.g, std::move(out), {x}, [x, start, c](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        auto& gx = g.grad_of(x.id).data;
        for (std::size_t i = 0; i < go.size(); ++i) gx[start * c + i] += go[i];
    }, "slice_rows");
}

template <class T>
Var<T> slice_cols(Var<T> x, std::size_t start, std::size_t count) {
    const std::size_t r = x.rows(), c = x.cols();
    if (start + count > c) {
        throw ShapeError("slice_cols: cols [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of " + shape_str(x.shape()));
    }
    Tensor<T> out({r, count});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < count; ++j) out.data[i * count + j] = x.value().data[i * c + start + j];
    return make<T>(*x.g, std::move(out), {x}, [x, start, r, c, count](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        auto& gx = g.grad_of(x.id).data;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < count; ++j) gx[i * c + start + j] += go[i * count + j];
    }, "slice_cols");
}

template <class T>
Var<T> reshape(Var<T> x, std::size_t rows, std::size_t cols) {
    if (rows * cols != x.value().size()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str({rows, cols}));
    }
    Tensor<T> out({rows, cols}, x.value().data);
    return make<T>(*x.g, std::move(out), {x}, [x](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        auto& gx = g.grad_of(x.id).data;
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    }, "reshape");
}

template <class T>
Var<T> mean_rows(Var<T> x) {
    const std::size_t r = x.rows(), c = x.cols();
    if (r == 0) throw ShapeError("mean_rows: no rows");
    Tensor<T> out({1, c});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.data[j] += x.value().data[i * c + j];
    for (auto& v : out.data) v = static_cast<T>(v / static_cast<double>(r));
    return make<T>(*x.g, std::move(out), {x}, [x, r, c](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        auto& gx = g.grad_of(x.id).data;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += static_cast<T>(go[j] / static_cast<double>(r));
    }, "mean_rows");
}

template <class T>
Var<T> sum_all(Var<T> x) {
    double s = 0;
    for (T v : x.value().data) s += v;
    Tensor<T> out({1, 1}, static_cast<T>(s));
    return make<T>(*x.g, std::move(out), {x}, [x](Graph<T>& g, int self) {
        const T go = g.node(self).grad.data[0];
        for (auto& v : g.grad_of(x.id).data) v += go;
    }, "sum_all");
}

template <class T>
Var<T> repeat_rows(Var<T> x, std::size_t n) {
    if (x.rows() != 1) throw ShapeError("repeat_rows: expected one row, got " + shape_str(x.shape()));
    const std::size_t c = x.cols();
    Tensor<T> out({n, c});
    for (std::size_t i = 0; i < n; ++i) std::copy_n(x.value().data.begin(), c, out.data.begin() + static_cast<std::ptrdiff_t>(i * c));
    return make<T>(*x.g, std::move(out), {x}, [x, n, c](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        auto& gx = g.grad_of(x.id).data;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) gx[j] += go[i * c + j];
    }, "repeat_rows");
}

template <class T>
Var<T> center_rows(Var<T> x) {
    const std::size_t r = x.rows(), c = x.cols();
    Tensor<T> out = x.value();
    for (std::size_t j = 0; j < c; ++j) {
        double m = 0;
        for (std::size_t i = 0; i < r; ++i) m += out.data[i * c + j];
        m /= static_cast<double>(r);
        for (std::size_t i = 0; i < r; ++i) out.data[i * c + j] = static_cast<T>(out.data[i * c + j] - m);
    }
    return make<T>(*x.g, std::move(out), {x}, [x, r, c](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        auto& gx = g.grad_of(x.id).data;
        for (std::size_t j = 0; j < c; ++j) {
            double m = 0;
            for (std::size_t i = 0; i < r; ++i) m += go[i * c + j];
            m /= static_cast<double>(r);
            for (std::size_t i = 0; i < r; ++i) gx[i * c + j] += static_cast<T>(go[i * c + j] - m);
        }
    }, "center_rows");
}

template <class T>
Var<T> dropout(Var<T> x, double p, Rng& rng) {
    if (p <= 0.0 || !x.g->grad_enabled()) return x;
    if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
    const double keep = 1.0 - p;
    std::vector<T> mask(x.value().size());
    for (auto& m : mask) m = rng.uniform() < keep ? static_cast<T>(1.0 / keep) : T(0);
    Tensor<T> out = x.value();
    for (std::size_t i = 0; i < mask.size(); ++i) out.data[i] *= mask[i];
    return make<T>(*x.g, std::move(out), {x}, [x, mask = std::move(mask)](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        auto& gx = g.grad_of(x.id).data;
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * mask[i];
    }, "dropout");
}

// ---- attention ----------------------------------------------------------------------

template <class T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::size_t heads, std::span<const std::uint8_t> mask,
                 std::optional<Var<T>> bias) {
    const std::size_t lq = q.rows(), lk = k.rows(), d = q.cols();
    if (k.cols() != d || v.cols() != d) shape_fail("attention(q,k/v)", q, k.cols() != d ? k : v);
    if (v.rows() != lk) shape_fail("attention(k,v)", k, v);
    if (heads == 0 || d % heads != 0) {
        throw ShapeError("attention: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                         " heads");
    }
    if (!mask.empty() && mask.size() != lq * lk) {
        throw ShapeError("attention: mask has " + std::to_string(mask.size()) + " entries, expected " +
                         std::to_string(lq * lk));
    }
    if (bias && (bias->rows() != lq * lk || bias->cols() != heads)) {
        throw ShapeError("attention: bias shape " + shape_str(bias->shape()) + ", expected " +
                         shape_str({lq * lk, heads}));
    }
    const std::size_t dh = d / heads;
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    const auto& qv = q.value().data;
    const auto& kv = k.value().data;
    const auto& vv = v.value().data;
    const T* bv = bias ? bias->value().data.data() : nullptr;
    std::vector<T> probs(heads * lq * lk, T(0));
    Tensor<T> out({lq, d});
    std::vector<double> row(lk);
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < lq; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < lk; ++j) {
                if (!mask.empty() && !mask[i * lk + j]) continue;
                double s = 0;
                for (std::size_t e = 0; e < dh; ++e) s += qv[i * d + h * dh + e] * kv[j * d + h * dh + e];
                s *= inv;
                if (bv) s += bv[(i * lk + j) * heads + h];
                row[j] = s;
                mx = std::max(mx, s);
            }
            if (mx == -std::numeric_limits<double>::infinity()) continue;  // fully masked
            double z = 0;
            for (std::size_t j = 0; j < lk; ++j) {
                if (!mask.empty() && !mask[i * lk + j]) continue;
                row[j] = std::exp(row[j] - mx);
                z += row[j];
            }
            T* p = probs.data() + (h * lq + i) * lk;
            for (std::size_t j = 0; j < lk; ++j) {
                if (!mask.empty() && !mask[i * lk + j]) continue;
                p[j] = static_cast<T>(row[j] / z);
                const T pj = p[j];
                for (std::size_t e = 0; e < dh; ++e) out.data[i * d + h * dh + e] += pj * vv[j * d + h * dh + e];
            }
        }
    }
    std::vector<Var<T>> ins{q, k, v};
    if (bias) ins.push_back(*bias);
    const int bias_id = bias ? bias->id : -1;
    return q.g->record(std::move(out), ins,
                       [q, k, v, bias_id, heads, lq, lk, d, dh, inv, probs = std::move(probs)](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        const auto& qv = g.node(q.id).value.data;
        const auto& kv = g.node(k.id).value.data;
        const auto& vv = g.node(v.id).value.data;
        auto* gq = grad_target(g, q.id);
        auto* gk = grad_target(g, k.id);
        auto* gv = grad_target(g, v.id);
        Tensor<T>* gb = bias_id >= 0 ? grad_target(g, bias_id) : nullptr;
        std::vector<double> dp(lk);
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < lq; ++i) {
                const T* p = probs.data() + (h * lq + i) * lk;
                double dot = 0;
                for (std::size_t j = 0; j < lk; ++j) {
                    if (p[j] == T(0)) {
                        dp[j] = 0;
                        continue;
                    }
                    double s = 0;
                    for (std::size_t e = 0; e < dh; ++e) s += go[i * d + h * dh + e] * vv[j * d + h * dh + e];
                    dp[j] = s;
                    dot += p[j] * s;
                    if (gv)
                        for (std::size_t e = 0; e < dh; ++e) gv->data[j * d + h * dh + e] += p[j] * go[i * d + h * dh + e];
                }
                for (std::size_t j = 0; j < lk; ++j) {
                    if (p[j] == T(0)) continue;
                    const double ds = p[j] * (dp[j] - dot);
                    if (gb) gb->data[(i * lk + j) * heads + h] += static_cast<T>(ds);
                    const double dsi = ds * inv;
                    if (gq)
                        for (std::size_t e = 0; e < dh; ++e)
                            gq->data[i * d + h * dh + e] += static_cast<T>(dsi * kv[j * d + h * dh + e]);
                    if (gk)
                        for (std::size_t e = 0; e < dh; ++e)
                            gk->data[j * d + h * dh + e] += static_cast<T>(dsi * qv[i * d + h * dh + e]);
                }
            }
        }
    }, "attention");
}

template <class T>
Var<T> rope(Var<T> x, std::size_t heads, std::span<const int> positions) {
    const std::size_t l = x.rows(), d = x.cols();
    if (heads == 0 || d % heads != 0 || (d / heads) % 2 != 0) {
        throw ShapeError("rope: width " + std::to_string(d) + " must split into even-sized heads (" +
                         std::to_string(heads) + ")");
    }
    if (positions.size() != l) {
        throw ShapeError("rope: " + std::to_string(positions.size()) + " positions for " + std::to_string(l) + " rows");
    }
    const std::size_t dh = d / heads;
    std::vector<T> cs(l * dh / 2), sn(l * dh / 2);
    for (std::size_t i = 0; i < l; ++i) {
        for (std::size_t m = 0; m < dh / 2; ++m) {
            const double theta = positions[i] * std::pow(10000.0, -2.0 * static_cast<double>(m) / static_cast<double>(dh));
            cs[i * dh / 2 + m] = static_cast<T>(std::cos(theta));
            sn[i * dh / 2 + m] = static_cast<T>(std::sin(theta));
        }
    }
    Tensor<T> out({l, d});
    const auto& xv = x.value().data;
    for (std::size_t i = 0; i < l; ++i)
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t m = 0; m < dh / 2; ++m) {
                const std::size_t a = i * d + h * dh + 2 * m;
                const T c = cs[i * dh / 2 + m], s = sn[i * dh / 2 + m];
                out.data[a] = xv[a] * c - xv[a + 1] * s;
                out.data[a + 1] = xv[a] * s + xv[a + 1] * c;
            }
    return make<T>(*x.g, std::move(out), {x},
                   [x, l, d, dh, heads, cs = std::move(cs), sn = std::move(sn)](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        auto& gx = g.grad_of(x.id).data;
        for (std::size_t i = 0; i < l; ++i)
            for (std::size_t h = 0; h < heads; ++h)
                for (std::size_t m = 0; m < dh / 2; ++m) {
                    const std::size_t a = i * d + h * dh + 2 * m;
                    const T c = cs[i * dh / 2 + m], s = sn[i * dh / 2 + m];
                    gx[a] += go[a] * c + go[a + 1] * s;
                    gx[a + 1] += -go[a] * s + go[a + 1] * c;
                }
    }, "rope");
}

// ---- losses --------------------------------------------------------------------------

template <class T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> targets) {
    const std::size_t r = logits.rows(), c = logits.cols();
    if (targets.size() != r) {
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_str(logits.shape()));
    }
    const auto& lv = logits.value().data;
    std::vector<T> probs(r * c, T(0));
    double total = 0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < r; ++i) {
        if (targets[i] < 0) continue;
        if (static_cast<std::size_t>(targets[i]) >= c) {
            throw ShapeError("cross_entropy: target " + std::to_string(targets[i]) + " >= " + std::to_string(c) +
                             " classes");
        }
        double mx = lv[i * c];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(lv[i * c + j]));
        double z = 0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(lv[i * c + j] - mx);
        const double lse = mx + std::log(z);
        total += lse - lv[i * c + static_cast<std::size_t>(targets[i])];
        for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = static_cast<T>(std::exp(lv[i * c + j] - lse));
        ++count;
    }
    const double n = count ? static_cast<double>(count) : 1.0;
    Tensor<T> out({1, 1}, static_cast<T>(total / n));
    std::vector<int> saved(targets.begin(), targets.end());
    return make<T>(*logits.g, std::move(out), {logits},
                   [logits, r, c, n, saved = std::move(saved), probs = std::move(probs)](Graph<T>& g, int self) {
        const double go = g.node(self).grad.data[0];
        auto& gl = g.grad_of(logits.id).data;
        for (std::size_t i = 0; i < r; ++i) {
            if (saved[i] < 0) continue;
            for (std::size_t j = 0; j < c; ++j) {
                const double y = j == static_cast<std::size_t>(saved[i]) ? 1.0 : 0.0;
                gl[i * c + j] += static_cast<T>(go * (probs[i * c + j] - y) / n);
            }
        }
    }, "cross_entropy");
}

template <class T>
Var<T> mse(Var<T> a, Var<T> b) {
    if (a.shape() != b.shape()) shape_fail("mse", a, b);
    const auto& av = a.value().data;
    const auto& bv = b.value().data;
    double s = 0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = static_cast<double>(av[i]) - bv[i];
        s += d * d;
    }
    const double n = static_cast<double>(std::max<std::size_t>(av.size(), 1));
    Tensor<T> out({1, 1}, static_cast<T>(s / n));
    return make<T>(*a.g, std::move(out), {a, b}, [a, b, n](Graph<T>& g, int self) {
        const double go = g.node(self).grad.data[0];
        const auto& av = g.node(a.id).value.data;
        const auto& bv = g.node(b.id).value.data;
        auto* ga = grad_target(g, a.id);
        auto* gb = grad_target(g, b.id);
        for (std::size_t i = 0; i < av.size(); ++i) {
            const double d = 2.0 * go * (static_cast<double>(av[i]) - bv[i]) / n;
            if (ga) ga->data[i] += static_cast<T>(d);
            if (gb) gb->data[i] -= static_cast<T>(d);
        }
    }, "mse");
}

// ---- pairwise ----------------------------------------------------------------------

template <class T>
Var<T> pair_product(Var<T> u, Var<T> v) {
    const std::size_t n = u.rows(), c = u.cols();
    if (v.rows() != n || v.cols() != c) shape_fail("pair_product", u, v);
    const auto& uv = u.value().data;
    const auto& vv = v.value().data;
    Tensor<T> out({n * n, c});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t e = 0; e < c; ++e) out.data[(i * n + j) * c + e] = uv[i * c + e] * vv[j * c + e];
    return make<T>(*u.g, std::move(out), {u, v}, [u, v, n, c](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        const auto& uv = g.node(u.id).value.data;
        const auto& vv = g.node(v.id).value.data;
        auto* gu = grad_target(g, u.id);
        auto* gv = grad_target(g, v.id);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t e = 0; e < c; ++e) {
                    const T gg = go[(i * n + j) * c + e];
                    if (gu) gu->data[i * c + e] += gg * vv[j * c + e];
                    if (gv) gv->data[j * c + e] += gg * uv[i * c + e];
                }
    }, "pair_product");
}

template <class T>
Var<T> pair_sum(Var<T> u, Var<T> v) {
    const std::size_t n = u.rows(), c = u.cols();
    if (v.rows() != n || v.cols() != c) shape_fail("pair_sum", u, v);
    const auto& uv = u.value().data;
    const auto& vv = v.value().data;
    Tensor<T> out({n * n, c});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t e = 0; e < c; ++e) out.data[(i * n + j) * c + e] = uv[i * c + e] + vv[j * c + e];
    return make<T>(*u.g, std::move(out), {u, v}, [u, v, n, c](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        auto* gu = grad_target(g, u.id);
        auto* gv = grad_target(g, v.id);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t e = 0; e < c; ++e) {
                    const T gg = go[(i * n + j) * c + e];
                    if (gu) gu->data[i * c + e] += gg;
                    if (gv) gv->data[j * c + e] += gg;
                }
    }, "pair_sum");
}

template <class T>
Var<T> relative_vector_sum(Var<T> w, const Tensor<T>& x) {
    const std::size_t n = x.rows();
    if (x.cols() != 3) throw ShapeError("relative_vector_sum: coordinates must be N x 3, got " + shape_str(x.shape));
    if (w.rows() != n * n || w.cols() != 1) {
        throw ShapeError("relative_vector_sum: weights " + shape_str(w.shape()) + " for " + std::to_string(n) + " atoms");
    }
    std::vector<T> rel(n * n * 3, T(0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            double d[3], r2 = 0;
            for (int a = 0; a < 3; ++a) {
                d[a] = static_cast<double>(x.data[i * 3 + a]) - x.data[j * 3 + a];
                r2 += d[a] * d[a];
            }
            const double s = 1.0 / (std::sqrt(r2) + 1.0);
            for (int a = 0; a < 3; ++a) rel[(i * n + j) * 3 + a] = static_cast<T>(d[a] * s);
        }
    const auto& wv = w.value().data;
    Tensor<T> out({n, 3});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (int a = 0; a < 3; ++a) out.data[i * 3 + a] += wv[i * n + j] * rel[(i * n + j) * 3 + a];
    return make<T>(*w.g, std::move(out), {w}, [w, n, rel = std::move(rel)](Graph<T>& g, int self) {
        const auto& go = g.node(self).grad.data;
        auto& gw = g.grad_of(w.id).data;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                T s = 0;
                for (int a = 0; a < 3; ++a) s += go[i * 3 + a] * rel[(i * n + j) * 3 + a];
                gw[i * n + j] += s;
            }
    }, "relative_vector_sum");
}

// ---- instantiation ---------------------------------------------------------------

#define S3D_INSTANTIATE_OPS(T)                                                                                  \
    template struct Tensor<T>;                                                                                  \
    template class ParameterStore<T>;                                                                           \
    template class Graph<T>;                                                                                    \
    template Var<T> add(Var<T>, Var<T>);                                                                        \
    template Var<T> sub(Var<T>, Var<T>);                                                                        \
    template Var<T> mul(Var<T>, Var<T>);                                                                        \
    template Var<T> scale(Var<T>, double);                                                                      \
    template Var<T> add_const(Var<T>, double);                                                                  \
    template Var<T> matmul(Var<T>, Var<T>);                                                                     \
    template Var<T> linear(Var<T>, Var<T>, std::optional<Var<T>>);                                              \
    template Var<T> layer_norm(Var<T>, std::optional<Var<T>>, std::optional<Var<T>>, double);                   \
    template Var<T> softmax_rows(Var<T>);                                                                       \
    template Var<T> gelu(Var<T>);                                                                               \
    template Var<T> silu(Var<T>);                                                                               \
    template Var<T> embedding(Var<T>, std::span<const int>);                                                    \
    template Var<T> concat_rows(std::span<const Var<T>>);                                                       \
    template Var<T> concat_cols(std::span<const Var<T>>);                                                       \
    template Var<T> slice_rows(Var<T>, std::size_t, std::size_t);                                               \
    template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);                                               \
    template Var<T> reshape(Var<T>, std::size_t, std::size_t);                                                  \
    template Var<T> mean_rows(Var<T>);                                                                          \
    template Var<T> sum_all(Var<T>);                                                                            \
    template Var<T> repeat_rows(Var<T>, std::size_t);                                                           \
    template Var<T> center_rows(Var<T>);                                                                        \
    template Var<T> dropout(Var<T>, double, Rng&);                                                              \
    template Var<T> attention(Var<T>, Var<T>, Var<T>, std::size_t, std::span<const std::uint8_t>,               \
                              std::optional<Var<T>>);                                                           \
    template Var<T> rope(Var<T>, std::size_t, std::span<const int>);                                            \
    template Var<T> cross_entropy(Var<T>, std::span<const int>);                                                \
    template Var<T> mse(Var<T>, Var<T>);                                                                        \
    template Var<T> pair_product(Var<T>, Var<T>);                                                               \
    template Var<T> pair_sum(Var<T>, Var<T>);                                                                   \
    template Var<T> relative_vector_sum(Var<T>, const Tensor<T>&);

S3D_INSTANTIATE_OPS(float)
S3D_INSTANTIATE_OPS(double)

}  // namespace s3d::nn
