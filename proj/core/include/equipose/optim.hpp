#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "equipose/tensor.hpp"

namespace equipose::mt {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are created lazily on the first
// step and stay shaped like their parameters.
class AdamState {
public:
    explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

    // Applies one update using each parameter's grad buffer, then clears the
    // grads. Parameters without a grad buffer are treated as zero-gradient.
    void step(std::span<Tensor> params);

    int64_t step_count() const { return step_count_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    int64_t step_count_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

}  // namespace equipose::mt
