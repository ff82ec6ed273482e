#pragma once

#include <cstdint>
#include <vector>

#include "s3d/autograd.hpp"

namespace s3d::nn {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.05;
};

// Linear warmup from warmup_lr to init_lr, then cosine decay to min_lr at
// total_steps (held afterwards).
struct LrSchedule {
    double warmup_lr = 1e-6;
    double init_lr = 1e-4;
    double min_lr = 1e-5;
    std::int64_t warmup_steps = 1000;
    std::int64_t total_steps = 10000;

    double at(std::int64_t step) const;
};

template <class T>
class AdamW {
public:
    AdamW(std::vector<Parameter<T>*> params, AdamWConfig config);

    // Decoupled decay, then the bias-corrected Adam update. Frozen
    // parameters are skipped.
    void step(double lr);
    std::int64_t steps() const noexcept { return t_; }
    const AdamWConfig& config() const noexcept { return config_; }
    const std::vector<Tensor<T>>& first_moments() const noexcept { return m_; }
    const std::vector<Tensor<T>>& second_moments() const noexcept { return v_; }

private:
    std::vector<Parameter<T>*> params_;
    AdamWConfig config_;
    std::vector<Tensor<T>> m_;
    std::vector<Tensor<T>> v_;
    std::int64_t t_ = 0;
};

// Rescales gradients so their global L2 norm is at most max_norm; returns the
// norm before clipping.
template <class T>
double clip_grad_norm(const std::vector<Parameter<T>*>& params, double max_norm);

}  // namespace s3d::nn
