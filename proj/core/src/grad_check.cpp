#include "equipose/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace equipose::mt {

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
    // Reverse-mode gradient.
    Tensor probe = Tensor::param(x.shape(), x.data());
    Tensor loss = f(probe);
    if (loss.numel() != 1) throw ShapeError("grad_check: f must be scalar-valued");
    backward(loss);
    const std::vector<float> g_ad = probe.grad();

    // Central differences on the 64-bit loss shadow.
    NoGradGuard no_grad;
    double max_rel = 0.0;
    std::vector<float> base = x.data();
    for (size_t i = 0; i < base.size(); ++i) {
        const auto hi = static_cast<float>(static_cast<double>(base[i]) + h);
        const auto lo = static_cast<float>(static_cast<double>(base[i]) - h);

        std::vector<float> values = base;
        values[i] = hi;
        const double f_hi = f(Tensor::from_data(x.shape(), values)).item();
        values[i] = lo;
        const double f_lo = f(Tensor::from_data(x.shape(), values)).item();

        const double step = static_cast<double>(hi) - static_cast<double>(lo);
        const double g_fd = (f_hi - f_lo) / step;
        const double denom = std::max(1e-8, std::abs(static_cast<double>(g_ad[i])) + std::abs(g_fd));
        max_rel = std::max(max_rel, std::abs(static_cast<double>(g_ad[i]) - g_fd) / denom);
    }
    return max_rel;
}

}  // namespace equipose::mt
