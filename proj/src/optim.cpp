#include "s3d/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace s3d::nn {

double LrSchedule::at(std::int64_t step) const {
    if (step < warmup_steps) {
        return warmup_lr + (init_lr - warmup_lr) * static_cast<double>(step) / static_cast<double>(warmup_steps);
    }
    const double span = static_cast<double>(std::max<std::int64_t>(total_steps - warmup_steps, 1));
    const double progress = std::min(1.0, static_cast<double>(step - warmup_steps) / span);
    return min_lr + 0.5 * (init_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

template <class T>
AdamW<T>::AdamW(std::vector<Parameter<T>*> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
    for (auto* p : params_) {
        m_.emplace_back(p->value.shape);
        v_.emplace_back(p->value.shape);
    }
}

template <class T>
void AdamW<T>::step(double lr) {
    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Parameter<T>& p = *params_[k];
        if (p.frozen) continue;
        auto& w = p.value.data;
        const auto& g = p.grad.data;
        auto& m = m_[k].data;
        auto& v = v_[k].data;
        const double decay = 1.0 - lr * config_.weight_decay;
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = static_cast<T>(b1 * m[i] + (1.0 - b1) * g[i]);
            v[i] = static_cast<T>(b2 * v[i] + (1.0 - b2) * static_cast<double>(g[i]) * g[i]);
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            w[i] = static_cast<T>(w[i] * decay - lr * mhat / (std::sqrt(vhat) + config_.eps));
        }
    }
}

template <class T>
double clip_grad_norm(const std::vector<Parameter<T>*>& params, double max_norm) {
    double sq = 0;
    for (auto* p : params)
        for (T g : p->grad.data) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0) {
        const double s = max_norm / norm;
        for (auto* p : params)
            for (T& g : p->grad.data) g = static_cast<T>(g * s);
    }
    return norm;
}

template class AdamW<float>;
template class AdamW<double>;
template double clip_grad_norm(const std::vector<Parameter<float>*>&, double);
template double clip_grad_norm(const std::vector<Parameter<double>*>&, double);

}  // namespace s3d::nn
