#include "equipose/optim.hpp"

#include <cmath>

namespace equipose::mt {

void AdamState::step(std::span<Tensor> params) {
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (size_t p = 0; p < params.size(); ++p) {
            m_[p].assign(params[p].data().size(), 0.0f);
            v_[p].assign(params[p].data().size(), 0.0f);
        }
    }
    if (m_.size() != params.size())
        throw ShapeError("adam_step: parameter list size changed between steps");
    ++step_count_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
    for (size_t p = 0; p < params.size(); ++p) {
        auto& values = params[p].mutable_data();
        if (m_[p].size() != values.size())
            throw ShapeError("adam_step: parameter " + std::to_string(p) +
                             " changed shape between steps");
        const bool has_grad = params[p].has_grad();
        for (size_t i = 0; i < values.size(); ++i) {
            const double g = has_grad ? static_cast<double>(params[p].grad()[i]) : 0.0;
            const double m = cfg_.beta1 * m_[p][i] + (1.0 - cfg_.beta1) * g;
            const double v = cfg_.beta2 * v_[p][i] + (1.0 - cfg_.beta2) * g * g;
            m_[p][i] = static_cast<float>(m);
            v_[p][i] = static_cast<float>(v);
            const double m_hat = m / bc1;
            const double v_hat = v / bc2;
            values[i] = static_cast<float>(static_cast<double>(values[i]) -
                                           cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps));
        }
        params[p].zero_grad();
    }
}

}  // namespace equipose::mt
