#include <cmath>
#include <numeric>

#include "doctest.h"
#include "equipose/grad_check.hpp"
#include "equipose/optim.hpp"
#include "equipose/rng.hpp"
#include "equipose/tensor.hpp"

using namespace equipose;
using namespace equipose::mt;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, float scale = 1.0f, float offset = 0.0f) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    std::vector<float> data(static_cast<size_t>(n));
    for (float& x : data) x = static_cast<float>(rng.uniform(-1.0, 1.0)) * scale + offset;
    return Tensor::from_data(std::move(shape), std::move(data));
}

}  // namespace

TEST_CASE("matmul with identity and shape checks") {
    Rng rng(1);
    Tensor a = random_tensor({3, 3}, rng);
    std::vector<float> eye = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    Tensor result = matmul(Tensor::from_data({3, 3}, eye), a);
    for (size_t i = 0; i < 9; ++i) CHECK(result.data()[i] == doctest::Approx(a.data()[i]));

    CHECK_THROWS_AS(matmul(Tensor::zeros({3, 4}), Tensor::zeros({3, 4})), ShapeError);
    CHECK_THROWS_AS(add(Tensor::zeros({2, 2}), Tensor::zeros({4})), ShapeError);
    CHECK_THROWS_AS(softmax(Tensor::zeros({4}), 3), ShapeError);
}

TEST_CASE("batched matmul broadcasts a rank-2 operand") {
    Rng rng(2);
    Tensor a = random_tensor({5, 2, 3}, rng);
    Tensor b = random_tensor({3, 4}, rng);
    Tensor c = matmul(a, b);
    CHECK(c.shape() == Shape{5, 2, 4});
    // Spot check one batch against a flat computation.
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 4; ++j) {
            float acc = 0.0f;
            for (int k = 0; k < 3; ++k)
                acc += a.data()[static_cast<size_t>(2 * 2 * 3 + i * 3 + k)] *
                       b.data()[static_cast<size_t>(k * 4 + j)];
            CHECK(c.data()[static_cast<size_t>(2 * 2 * 4 + i * 4 + j)] == doctest::Approx(acc));
        }
}

TEST_CASE("softmax of a constant vector is uniform") {
    Tensor t = softmax(Tensor::full({60}, 3.25f), 0);
    for (float v : t.data()) CHECK(v == doctest::Approx(1.0f / 60.0f));
}

TEST_CASE("mean over an axis of ones") {
    Tensor t = mean(Tensor::full({4, 5}, 1.0f), 1);
    CHECK(t.shape() == Shape{4});
    for (float v : t.data()) CHECK(v == doctest::Approx(1.0f));
}

TEST_CASE("backward of sum(2x)") {
    Tensor x = Tensor::param({3}, {1.0f, -2.0f, 0.5f});
    Tensor loss = sum(scale(x, 2.0), 0);
    backward(loss);
    for (float g : x.grad()) CHECK(g == doctest::Approx(2.0f));
}

TEST_CASE("mse(Ax, b) gradient matches central differences") {
    Rng rng(3);
    Tensor a = random_tensor({4, 4}, rng);
    Tensor b = random_tensor({4, 1}, rng);
    Tensor x0 = random_tensor({4, 1}, rng);
    const double err = grad_check(
        [&](const Tensor& x) { return mse_loss(matmul(a, x), b); }, x0, 1e-3);
    CHECK(err < 1e-4);
}

TEST_CASE("cross entropy gradient rows sum to zero") {
    Rng rng(4);
    Tensor logits = Tensor::param({6, 5}, random_tensor({6, 5}, rng).data());
    backward(cross_entropy_loss(logits, {0, 3, 2, 4, 1, 1}));
    for (int i = 0; i < 6; ++i) {
        double row = 0.0;
        for (int c = 0; c < 5; ++c) row += logits.grad()[static_cast<size_t>(i * 5 + c)];
        CHECK(std::abs(row) < 1e-6);
    }
}

TEST_CASE("grad_check: every primitive under random shapes") {
    Rng rng(5);
    const double tol = 1e-4;
    for (int trial = 0; trial < 5; ++trial) {
        const int64_t m = 2 + static_cast<int64_t>(rng.uniform_index(3));
        const int64_t k = 2 + static_cast<int64_t>(rng.uniform_index(3));
        const int64_t n = 2 + static_cast<int64_t>(rng.uniform_index(3));

        Tensor other = random_tensor({m, k}, rng);
        Tensor x = random_tensor({m, k}, rng);
        auto total = [](const Tensor& t) { return sum(sum(t, 1), 0); };

        CHECK(grad_check([&](const Tensor& t) { return total(add(t, other)); }, x) < tol);
        CHECK(grad_check([&](const Tensor& t) { return total(sub(other, t)); }, x) < tol);
        CHECK(grad_check([&](const Tensor& t) { return total(mul(t, other)); }, x) < tol);
        CHECK(grad_check([&](const Tensor& t) { return total(scale(t, -1.7)); }, x) < tol);
        CHECK(grad_check([&](const Tensor& t) { return total(transpose_last2(t)); }, x) < tol);
        CHECK(grad_check([&](const Tensor& t) { return total(reshape(t, {k, m})); }, x) < tol);
        CHECK(grad_check([&](const Tensor& t) { return sum(mean(t, 1), 0); }, x) < tol);
        CHECK(grad_check([&](const Tensor& t) { return total(softmax(t, 1)); }, x) < tol);
        CHECK(grad_check([&](const Tensor& t) { return total(softmax(scale(t, 3.0), 0)); }, x) < tol);

        // relu probed away from the kink.
        Tensor x_off = random_tensor({m, k}, rng, 1.0f, 0.0f);
        {
            auto& d = x_off.mutable_data();
            for (float& v : d)
                if (std::abs(v) < 0.05f) v = v < 0 ? v - 0.05f : v + 0.05f;
        }
        CHECK(grad_check([&](const Tensor& t) { return total(relu(t)); }, x_off) < tol);

        Tensor rhs = random_tensor({k, n}, rng);
        CHECK(grad_check([&](const Tensor& t) { return total(matmul(t, rhs)); }, x) < tol);
        Tensor lhs = random_tensor({n, m}, rng);
        CHECK(grad_check([&](const Tensor& t) { return total(matmul(lhs, t)); }, x) < tol);

        // batched matmul, both the batched and the broadcast operand.
        Tensor batched = random_tensor({4, m, k}, rng);
        CHECK(grad_check([&](const Tensor& t) { return total(mean(matmul(batched, reshape(t, {k, m})), 0)); }, x) < tol);

        Tensor second = random_tensor({m, k}, rng);
        CHECK(grad_check([&](const Tensor& t) { return total(concat({t, second}, 1)); }, x) < tol);
        CHECK(grad_check([&](const Tensor& t) { return total(concat({second, t}, 0)); }, x) < tol);
        CHECK(grad_check([&](const Tensor& t) { return total(gather_rows(t, {0, m - 1, 0})); }, x) < tol);

        Tensor target = random_tensor({m, k}, rng);
        CHECK(grad_check([&](const Tensor& t) { return mse_loss(t, target); }, x) < tol);
        Tensor weights = random_tensor({m}, rng, 0.5f, 1.0f);
        CHECK(grad_check([&](const Tensor& t) { return weighted_mse_loss(t, target, weights); }, x) < tol);
        CHECK(grad_check([&](const Tensor& t) { return weighted_mse_loss(target, t, weights); }, x) < tol);
        CHECK(grad_check(
                  [&](const Tensor& t) {
                      return weighted_mse_loss(x, target, reshape(mean(mul(t, t), 1), {m}));
                  },
                  x) < tol);

        std::vector<int64_t> targets(static_cast<size_t>(m));
        for (auto& t : targets) t = static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(k)));
        CHECK(grad_check([&](const Tensor& t) { return cross_entropy_loss(t, targets); }, x) < tol);
    }
}

TEST_CASE("grad_check: sum of squares is near-exact") {
    Rng rng(6);
    Tensor x = random_tensor({10}, rng);
    const double err =
        grad_check([](const Tensor& t) { return sum(mul(t, t), 0); }, x, 1e-3);
    CHECK(err < 1e-6);
}

TEST_CASE("softmax commutes with permutation") {
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor x = random_tensor({60}, rng, 2.0f);
        std::vector<int64_t> perm(60);
        std::iota(perm.begin(), perm.end(), 0);
        for (size_t i = perm.size(); i > 1; --i)
            std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
        Tensor lhs = softmax(gather_rows(x, perm), 0);
        Tensor rhs = gather_rows(softmax(x, 0), perm);
        for (size_t i = 0; i < 60; ++i)
            CHECK(lhs.data()[i] == doctest::Approx(rhs.data()[i]).epsilon(1e-6));
    }
}

TEST_CASE("reductions accumulate in 64-bit") {
    std::vector<float> data(10'000'000, 0.1f);
    Tensor t = Tensor::from_data({10'000'000}, std::move(data));
    const double total = sum(t, 0).item();
    const double expected = 10'000'000.0 * static_cast<double>(0.1f);
    CHECK(std::abs(total - expected) / expected < 1e-6);
}

TEST_CASE("backward requires a scalar and graphs are single-use") {
    Tensor x = Tensor::param({3}, {1, 2, 3});
    Tensor y = scale(x, 2.0);
    CHECK_THROWS_AS(backward(y), ShapeError);

    Tensor loss = sum(y, 0);
    Graph g = Graph::trace(loss);
    g.run_backward(loss);
    CHECK_THROWS_AS(g.run_backward(loss), std::logic_error);
    CHECK_THROWS_AS(backward(loss), std::logic_error);
}

TEST_CASE("gradients accumulate once per node in diamond graphs") {
    Tensor x = Tensor::param({2}, {1.0f, 2.0f});
    Tensor y = scale(x, 3.0);
    Tensor loss = sum(add(y, y), 0);  // d/dx = 6
    backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(6.0f));
    CHECK(x.grad()[1] == doctest::Approx(6.0f));
}

TEST_CASE("determinism: identical runs produce identical bits") {
    auto run = [] {
        Rng rng(99);
        Tensor w = Tensor::param({8, 8}, random_tensor({8, 8}, rng).data());
        Tensor x = random_tensor({4, 8}, rng);
        Tensor target = random_tensor({4, 8}, rng);
        Tensor loss = mse_loss(relu(matmul(x, w)), target);
        backward(loss);
        return std::make_pair(loss.data()[0], w.grad());
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    Tensor p = Tensor::param({3}, {1.0f, -2.0f, 3.0f});
    const std::vector<float> before = p.data();
    AdamState opt;
    std::vector<Tensor> params = {p};
    opt.step(params);
    CHECK(opt.step_count() == 1);
    CHECK(p.data() == before);
}

TEST_CASE("adam: constant gradient converges to -sign * lr steps") {
    Tensor p = Tensor::param({2}, {0.0f, 0.0f});
    AdamConfig cfg;
    AdamState opt(cfg);
    std::vector<Tensor> params = {p};
    float prev0 = 0.0f;
    for (int i = 0; i < 200; ++i) {
        p.zero_grad();
        Tensor loss = sum(mul(p, Tensor::from_data({2}, {3.0f, -0.5f})), 0);
        backward(loss);
        prev0 = p.data()[0];
        opt.step(params);
    }
    // After warm-up the per-step move approaches lr in the -sign(g) direction.
    CHECK(p.data()[0] - prev0 == doctest::Approx(-cfg.lr).epsilon(0.05));
    CHECK(p.data()[0] < 0.0f);
    CHECK(p.data()[1] > 0.0f);
}

TEST_CASE("adam: one step matches the closed form") {
    const double g = 0.25, lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    Tensor p = Tensor::param({1}, {1.0f});
    Tensor c = Tensor::from_data({1}, {static_cast<float>(g)});
    Tensor loss = sum(mul(p, c), 0);
    backward(loss);
    AdamState opt;
    std::vector<Tensor> params = {p};
    opt.step(params);
    const double m_hat = ((1 - b1) * g) / (1 - b1);
    const double v_hat = ((1 - b2) * g * g) / (1 - b2);
    const double expected = 1.0 - lr * m_hat / (std::sqrt(v_hat) + eps);
    CHECK(p.data()[0] == doctest::Approx(expected).epsilon(1e-6));
}
