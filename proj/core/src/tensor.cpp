#include "equipose/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace equipose::mt {

namespace {
thread_local bool g_grad_enabled = true;
std::atomic<uint64_t> g_node_seq{0};
}  // namespace

struct Node {
    Shape shape;
    std::vector<float> data;
    bool requires_grad = false;
    std::vector<float> grad;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;
    bool has_f64 = false;
    double f64 = 0.0;
    bool consumed = false;
    uint64_t seq = 0;
};

namespace {

int64_t numel_of(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

std::shared_ptr<Node> make_node(Shape shape, std::vector<float> data) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->seq = g_node_seq.fetch_add(1, std::memory_order_relaxed);
    return node;
}

void ensure_grad(Node& node) {
    if (node.grad.empty()) node.grad.assign(node.data.size(), 0.0f);
}

// Links inputs and the backward closure onto a freshly built output node, but
// only in grad mode and only when some input needs gradients.
Tensor finish(std::shared_ptr<Node> out, std::vector<std::shared_ptr<Node>> inputs,
              std::function<void(Node&)> backward_fn) {
    bool needs = false;
    for (const auto& in : inputs)
        if (in->requires_grad) needs = true;
    if (g_grad_enabled && needs) {
        out->requires_grad = true;
        out->inputs = std::move(inputs);
        out->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(out));
}

int norm_axis(int axis, int rank) {
    const int a = axis < 0 ? axis + rank : axis;
    if (a < 0 || a >= rank)
        throw ShapeError("unknown axis " + std::to_string(axis) + " for rank " +
                         std::to_string(rank));
    return a;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// (outer, n, inner) decomposition for axis-wise traversal.
struct AxisSpan {
    int64_t outer, n, inner;
};
AxisSpan axis_span(const Shape& shape, int axis) {
    AxisSpan s{1, shape[static_cast<size_t>(axis)], 1};
    for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

using EMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

}  // namespace

std::string shape_str(const Shape& s) {
    std::ostringstream oss;
    oss << '(';
    for (size_t i = 0; i < s.size(); ++i) oss << (i ? ", " : "") << s[i];
    oss << ')';
    return oss.str();
}

// -- Tensor handle ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape) {
    auto n = static_cast<size_t>(numel_of(shape));
    return Tensor(make_node(std::move(shape), std::vector<float>(n, 0.0f)));
}

Tensor Tensor::full(Shape shape, float value) {
    auto n = static_cast<size_t>(numel_of(shape));
    return Tensor(make_node(std::move(shape), std::vector<float>(n, value)));
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data) {
    if (static_cast<int64_t>(data.size()) != numel_of(shape))
        throw ShapeError("from_data: " + std::to_string(data.size()) +
                         " values for shape " + shape_str(shape));
    return Tensor(make_node(std::move(shape), std::move(data)));
}

Tensor Tensor::param(Shape shape, std::vector<float> data) {
    Tensor t = from_data(std::move(shape), std::move(data));
    t.node()->requires_grad = true;
    return t;
}

const Shape& Tensor::shape() const { return node_->shape; }
int64_t Tensor::numel() const { return numel_of(node_->shape); }

int64_t Tensor::dim(int axis) const {
    return node_->shape[static_cast<size_t>(norm_axis(axis, rank()))];
}

const std::vector<float>& Tensor::data() const { return node_->data; }

std::vector<float>& Tensor::mutable_data() { return node_->data; }

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }

const std::vector<float>& Tensor::grad() const {
    if (node_->grad.empty()) throw std::logic_error("tensor has no gradient buffer");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item: tensor has " + std::to_string(numel()) + " values");
    return node_->has_f64 ? node_->f64 : static_cast<double>(node_->data[0]);
}

// -- graph / backward --------------------------------------------------------------

Graph Graph::trace(const Tensor& loss) {
    if (!loss.defined()) throw std::logic_error("trace: undefined tensor");
    if (loss.node()->consumed) throw std::logic_error("graph reused after consumption");
    Graph g;
    std::unordered_set<Node*> seen;
    // Iterative post-order: inputs appear before consumers in order_.
    std::vector<std::pair<std::shared_ptr<Node>, size_t>> stack;
    if (loss.node()->requires_grad) stack.emplace_back(loss.node(), 0);
    while (!stack.empty()) {
        auto& [node, next_input] = stack.back();
        if (next_input == 0 && seen.count(node.get())) {
            stack.pop_back();
            continue;
        }
        if (next_input < node->inputs.size()) {
            auto child = node->inputs[next_input++];
            if (child->requires_grad && !seen.count(child.get())) stack.emplace_back(child, 0);
        } else {
            // Re-check: a second copy of this node may have completed while
            // this one was mid-traversal.
            if (seen.insert(node.get()).second) g.order_.push_back(node);
            stack.pop_back();
        }
    }
    return g;
}

void Graph::run_backward(const Tensor& loss) {
    if (consumed_) throw std::logic_error("graph reused after consumption");
    if (loss.numel() != 1)
        throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    consumed_ = true;
    for (auto& node : order_) node->consumed = true;
    if (order_.empty()) return;
    ensure_grad(*loss.node());
    loss.node()->grad[0] = 1.0f;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

void backward(const Tensor& loss) {
    Graph g = Graph::trace(loss);
    g.run_backward(loss);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// -- elementwise -------------------------------------------------------------------

namespace {

// Shared scaffolding for add/sub/mul.
template <typename Fwd, typename Bwd>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
    check_same_shape(a, b, name);
    const auto& av = a.data();
    const auto& bv = b.data();
    std::vector<float> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);
    auto node = make_node(a.shape(), std::move(out));
    if (a.numel() == 1 && a.node()->has_f64 && b.node()->has_f64) {
        node->has_f64 = true;
        node->f64 = fwd(a.node()->f64, b.node()->f64);
    }
    auto an = a.node();
    auto bn = b.node();
    return finish(node, {an, bn}, [an, bn, bwd](Node& self) {
        if (an->requires_grad) ensure_grad(*an);
        if (bn->requires_grad) ensure_grad(*bn);
        for (size_t i = 0; i < self.grad.size(); ++i)
            bwd(self.grad[i], an->data[i], bn->data[i],
                an->requires_grad ? &an->grad[i] : nullptr,
                bn->requires_grad ? &bn->grad[i] : nullptr);
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, "add", [](auto x, auto y) { return x + y; },
        [](float g, float, float, float* ga, float* gb) {
            if (ga) *ga += g;
            if (gb) *gb += g;
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, "sub", [](auto x, auto y) { return x - y; },
        [](float g, float, float, float* ga, float* gb) {
            if (ga) *ga += g;
            if (gb) *gb -= g;
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_elementwise(
        a, b, "mul", [](auto x, auto y) { return x * y; },
        [](float g, float x, float y, float* ga, float* gb) {
            if (ga) *ga += g * y;
            if (gb) *gb += g * x;
        });
}

Tensor scale(const Tensor& a, double factor) {
    const auto& av = a.data();
    std::vector<float> out(av.size());
    for (size_t i = 0; i < av.size(); ++i)
        out[i] = static_cast<float>(static_cast<double>(av[i]) * factor);
    auto node = make_node(a.shape(), std::move(out));
    if (a.numel() == 1 && a.node()->has_f64) {
        node->has_f64 = true;
        node->f64 = a.node()->f64 * factor;
    }
    auto an = a.node();
    return finish(node, {an}, [an, factor](Node& self) {
        ensure_grad(*an);
        const auto f = static_cast<float>(factor);
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * f;
    });
}

Tensor relu(const Tensor& a) {
    const auto& av = a.data();
    std::vector<float> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] > 0.0f ? av[i] : 0.0f;
    auto node = make_node(a.shape(), std::move(out));
    auto an = a.node();
    return finish(node, {an}, [an](Node& self) {
        ensure_grad(*an);
        for (size_t i = 0; i < self.grad.size(); ++i)
            if (an->data[i] > 0.0f) an->grad[i] += self.grad[i];
    });
}

// -- matmul ------------------------------------------------------------------------

namespace {

struct MatmulPlan {
    int64_t batches, m, k, n;
    bool broadcast_a, broadcast_b;
    Shape out_shape;
};

MatmulPlan plan_matmul(const Shape& a, const Shape& b) {
    if (a.size() < 2 || b.size() < 2)
        throw ShapeError("matmul: operands must be at least rank 2, got " + shape_str(a) +
                         " and " + shape_str(b));
    MatmulPlan p{};
    p.m = a[a.size() - 2];
    p.k = a[a.size() - 1];
    p.n = b[b.size() - 1];
    if (b[b.size() - 2] != p.k)
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a) + " @ " +
                         shape_str(b));
    const Shape batch_a(a.begin(), a.end() - 2);
    const Shape batch_b(b.begin(), b.end() - 2);
    Shape batch;
    if (batch_a == batch_b) {
        batch = batch_a;
    } else if (batch_b.empty()) {
        batch = batch_a;
        p.broadcast_b = true;
    } else if (batch_a.empty()) {
        batch = batch_b;
        p.broadcast_a = true;
    } else {
        throw ShapeError("matmul: batch axes disagree, " + shape_str(a) + " @ " + shape_str(b));
    }
    p.batches = numel_of(batch);
    p.out_shape = batch;
    p.out_shape.push_back(p.m);
    p.out_shape.push_back(p.n);
    return p;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    const MatmulPlan p = plan_matmul(a.shape(), b.shape());
    std::vector<float> out(static_cast<size_t>(p.batches * p.m * p.n));
    const float* ad = a.data().data();
    const float* bd = b.data().data();
    for (int64_t i = 0; i < p.batches; ++i) {
        ECMap ma(ad + (p.broadcast_a ? 0 : i * p.m * p.k), p.m, p.k);
        ECMap mb(bd + (p.broadcast_b ? 0 : i * p.k * p.n), p.k, p.n);
        EMap mo(out.data() + i * p.m * p.n, p.m, p.n);
        mo.noalias() = ma * mb;
    }
    auto node = make_node(p.out_shape, std::move(out));
    auto an = a.node();
    auto bn = b.node();
    return finish(node, {an, bn}, [an, bn, p](Node& self) {
        if (an->requires_grad) ensure_grad(*an);
        if (bn->requires_grad) ensure_grad(*bn);
        for (int64_t i = 0; i < p.batches; ++i) {
            ECMap ga(self.grad.data() + i * p.m * p.n, p.m, p.n);
            if (an->requires_grad) {
                ECMap mb(bn->data.data() + (p.broadcast_b ? 0 : i * p.k * p.n), p.k, p.n);
                EMap da(an->grad.data() + (p.broadcast_a ? 0 : i * p.m * p.k), p.m, p.k);
                da.noalias() += ga * mb.transpose();
            }
            if (bn->requires_grad) {
                ECMap ma(an->data.data() + (p.broadcast_a ? 0 : i * p.m * p.k), p.m, p.k);
                EMap db(bn->grad.data() + (p.broadcast_b ? 0 : i * p.k * p.n), p.k, p.n);
                db.noalias() += ma.transpose() * ga;
            }
        }
    });
}

// -- axis ops ----------------------------------------------------------------------

Tensor softmax(const Tensor& a, int axis) {
    const int ax = norm_axis(axis, a.rank());
    const AxisSpan s = axis_span(a.shape(), ax);
    const auto& av = a.data();
    std::vector<float> out(av.size());
    for (int64_t o = 0; o < s.outer; ++o)
        for (int64_t i = 0; i < s.inner; ++i) {
            const int64_t base = o * s.n * s.inner + i;
            double mx = -1e300;
            for (int64_t j = 0; j < s.n; ++j)
                mx = std::max(mx, static_cast<double>(av[static_cast<size_t>(base + j * s.inner)]));
            double denom = 0.0;
            for (int64_t j = 0; j < s.n; ++j) {
                const double e =
                    std::exp(static_cast<double>(av[static_cast<size_t>(base + j * s.inner)]) - mx);
                out[static_cast<size_t>(base + j * s.inner)] = static_cast<float>(e);
                denom += e;
            }
            for (int64_t j = 0; j < s.n; ++j)
                out[static_cast<size_t>(base + j * s.inner)] =
                    static_cast<float>(out[static_cast<size_t>(base + j * s.inner)] / denom);
        }
    auto node = make_node(a.shape(), std::move(out));
    auto an = a.node();
    return finish(node, {an}, [an, s](Node& self) {
        ensure_grad(*an);
        for (int64_t o = 0; o < s.outer; ++o)
            for (int64_t i = 0; i < s.inner; ++i) {
                const int64_t base = o * s.n * s.inner + i;
                double dot = 0.0;
                for (int64_t j = 0; j < s.n; ++j) {
                    const auto idx = static_cast<size_t>(base + j * s.inner);
                    dot += static_cast<double>(self.grad[idx]) * self.data[idx];
                }
                for (int64_t j = 0; j < s.n; ++j) {
                    const auto idx = static_cast<size_t>(base + j * s.inner);
                    an->grad[idx] += static_cast<float>(
                        self.data[idx] * (static_cast<double>(self.grad[idx]) - dot));
                }
            }
    });
}

namespace {

Tensor reduce_axis(const Tensor& a, int axis, bool take_mean) {
    const int ax = norm_axis(axis, a.rank());
    const AxisSpan s = axis_span(a.shape(), ax);
    Shape out_shape = a.shape();
    out_shape.erase(out_shape.begin() + ax);
    const auto& av = a.data();
    std::vector<float> out(static_cast<size_t>(s.outer * s.inner));
    const double inv = take_mean ? 1.0 / static_cast<double>(s.n) : 1.0;
    double last_acc = 0.0;
    for (int64_t o = 0; o < s.outer; ++o)
        for (int64_t i = 0; i < s.inner; ++i) {
            double acc = 0.0;  // 64-bit accumulation
            const int64_t base = o * s.n * s.inner + i;
            for (int64_t j = 0; j < s.n; ++j)
                acc += static_cast<double>(av[static_cast<size_t>(base + j * s.inner)]);
            acc *= inv;
            out[static_cast<size_t>(o * s.inner + i)] = static_cast<float>(acc);
            last_acc = acc;
        }
    auto node = make_node(std::move(out_shape), std::move(out));
    if (s.outer * s.inner == 1) {
        node->has_f64 = true;
        node->f64 = last_acc;
    }
    auto an = a.node();
    return finish(node, {an}, [an, s, inv](Node& self) {
        ensure_grad(*an);
        const auto f = static_cast<float>(inv);
        for (int64_t o = 0; o < s.outer; ++o)
            for (int64_t i = 0; i < s.inner; ++i) {
                const float g = self.grad[static_cast<size_t>(o * s.inner + i)] * f;
                const int64_t base = o * s.n * s.inner + i;
                for (int64_t j = 0; j < s.n; ++j)
                    an->grad[static_cast<size_t>(base + j * s.inner)] += g;
            }
    });
}

}  // namespace

Tensor mean(const Tensor& a, int axis) { return reduce_axis(a, axis, true); }
Tensor sum(const Tensor& a, int axis) { return reduce_axis(a, axis, false); }

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const int rank = parts[0].rank();
    const int ax = norm_axis(axis, rank);
    Shape out_shape = parts[0].shape();
    int64_t total_axis = 0;
    for (const Tensor& t : parts) {
        if (t.rank() != rank) throw ShapeError("concat: rank mismatch");
        for (int d = 0; d < rank; ++d)
            if (d != ax && t.shape()[static_cast<size_t>(d)] != out_shape[static_cast<size_t>(d)])
                throw ShapeError("concat: shape mismatch " + shape_str(t.shape()) + " vs " +
                                 shape_str(out_shape));
        total_axis += t.dim(ax);
    }
    out_shape[static_cast<size_t>(ax)] = total_axis;

    const AxisSpan os = axis_span(out_shape, ax);
    std::vector<float> out(static_cast<size_t>(numel_of(out_shape)));
    std::vector<int64_t> offsets;  // start of each part along the axis
    {
        int64_t off = 0;
        for (const Tensor& t : parts) {
            offsets.push_back(off);
            const int64_t pn = t.dim(ax);
            const auto& pv = t.data();
            for (int64_t o = 0; o < os.outer; ++o)
                std::copy_n(pv.data() + o * pn * os.inner, pn * os.inner,
                            out.data() + (o * os.n + off) * os.inner);
            off += pn;
        }
    }
    auto node = make_node(out_shape, std::move(out));
    std::vector<std::shared_ptr<Node>> input_nodes;
    std::vector<int64_t> part_n;
    for (const Tensor& t : parts) {
        input_nodes.push_back(t.node());
        part_n.push_back(t.dim(ax));
    }
    auto inputs_copy = input_nodes;
    return finish(node, std::move(input_nodes),
                  [inputs = std::move(inputs_copy), offsets, part_n, os](Node& self) {
                      for (size_t pi = 0; pi < inputs.size(); ++pi) {
                          auto& in = *inputs[pi];
                          if (!in.requires_grad) continue;
                          ensure_grad(in);
                          const int64_t pn = part_n[pi];
                          for (int64_t o = 0; o < os.outer; ++o) {
                              const float* src =
                                  self.grad.data() + (o * os.n + offsets[pi]) * os.inner;
                              float* dst = in.grad.data() + o * pn * os.inner;
                              for (int64_t t = 0; t < pn * os.inner; ++t) dst[t] += src[t];
                          }
                      }
                  });
}

Tensor gather_rows(const Tensor& a, std::vector<int64_t> indices) {
    if (a.rank() < 1) throw ShapeError("gather_rows: input must have rows");
    const int64_t rows = a.dim(0);
    const int64_t row_size = a.numel() / std::max<int64_t>(rows, 1);
    for (int64_t idx : indices)
        if (idx < 0 || idx >= rows)
            throw ShapeError("gather_rows: index " + std::to_string(idx) + " out of " +
                             std::to_string(rows) + " rows");
    Shape out_shape = a.shape();
    out_shape[0] = static_cast<int64_t>(indices.size());
    std::vector<float> out(static_cast<size_t>(row_size) * indices.size());
    const auto& av = a.data();
    for (size_t i = 0; i < indices.size(); ++i)
        std::copy_n(av.data() + indices[i] * row_size, row_size,
                    out.data() + static_cast<int64_t>(i) * row_size);
    auto node = make_node(std::move(out_shape), std::move(out));
    auto an = a.node();
    return finish(node, {an}, [an, indices = std::move(indices), row_size](Node& self) {
        ensure_grad(*an);
        for (size_t i = 0; i < indices.size(); ++i) {
            const float* src = self.grad.data() + static_cast<int64_t>(i) * row_size;
            float* dst = an->grad.data() + indices[i] * row_size;
            for (int64_t t = 0; t < row_size; ++t) dst[t] += src[t];
        }
    });
}

Tensor transpose_last2(const Tensor& a) {
    if (a.rank() < 2) throw ShapeError("transpose_last2: need rank >= 2, got " + shape_str(a.shape()));
    Shape out_shape = a.shape();
    std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
    const int64_t r = a.dim(-2);
    const int64_t c = a.dim(-1);
    const int64_t batches = a.numel() / (r * c);
    const auto& av = a.data();
    std::vector<float> out(av.size());
    for (int64_t b = 0; b < batches; ++b) {
        const float* src = av.data() + b * r * c;
        float* dst = out.data() + b * r * c;
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
    }
    auto node = make_node(std::move(out_shape), std::move(out));
    auto an = a.node();
    return finish(node, {an}, [an, r, c, batches](Node& self) {
        ensure_grad(*an);
        for (int64_t b = 0; b < batches; ++b) {
            const float* src = self.grad.data() + b * r * c;
            float* dst = an->grad.data() + b * r * c;
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < c; ++j) dst[i * c + j] += src[j * r + i];
        }
    });
}

// -- losses ------------------------------------------------------------------------

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    check_same_shape(pred, target, "mse_loss");
    const auto& pv = pred.data();
    const auto& tv = target.data();
    double acc = 0.0;
    for (size_t i = 0; i < pv.size(); ++i) {
        const double d = static_cast<double>(pv[i]) - static_cast<double>(tv[i]);
        acc += d * d;
    }
    const double n = static_cast<double>(pv.size());
    auto node = make_node(Shape{}, {static_cast<float>(acc / n)});
    node->has_f64 = true;
    node->f64 = acc / n;
    auto pn = pred.node();
    auto tn = target.node();
    return finish(node, {pn, tn}, [pn, tn, n](Node& self) {
        const float g = self.grad[0];
        if (pn->requires_grad) ensure_grad(*pn);
        if (tn->requires_grad) ensure_grad(*tn);
        for (size_t i = 0; i < pn->data.size(); ++i) {
            const float d = static_cast<float>(2.0 / n) * (pn->data[i] - tn->data[i]) * g;
            if (pn->requires_grad) pn->grad[i] += d;
            if (tn->requires_grad) tn->grad[i] -= d;
        }
    });
}

Tensor cross_entropy_loss(const Tensor& logits, const std::vector<int64_t>& targets) {
    if (logits.rank() != 2)
        throw ShapeError("cross_entropy_loss: logits must be rank 2, got " +
                         shape_str(logits.shape()));
    const int64_t n = logits.dim(0);
    const int64_t classes = logits.dim(1);
    if (static_cast<int64_t>(targets.size()) != n)
        throw ShapeError("cross_entropy_loss: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(n) + " rows");
    for (int64_t t : targets)
        if (t < 0 || t >= classes) throw ShapeError("cross_entropy_loss: target out of range");
    const auto& lv = logits.data();
    std::vector<float> probs(lv.size());
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const float* row = lv.data() + i * classes;
        double mx = -1e300;
        for (int64_t c = 0; c < classes; ++c) mx = std::max(mx, static_cast<double>(row[c]));
        double denom = 0.0;
        for (int64_t c = 0; c < classes; ++c) denom += std::exp(static_cast<double>(row[c]) - mx);
        const double lse = mx + std::log(denom);
        acc += lse - static_cast<double>(row[targets[static_cast<size_t>(i)]]);
        for (int64_t c = 0; c < classes; ++c)
            probs[static_cast<size_t>(i * classes + c)] =
                static_cast<float>(std::exp(static_cast<double>(row[c]) - lse));
    }
    auto node = make_node(Shape{}, {static_cast<float>(acc / static_cast<double>(n))});
    node->has_f64 = true;
    node->f64 = acc / static_cast<double>(n);
    auto ln = logits.node();
    return finish(node, {ln},
                  [ln, targets, probs = std::move(probs), n, classes](Node& self) {
                      ensure_grad(*ln);
                      const float g = self.grad[0] / static_cast<float>(n);
                      for (int64_t i = 0; i < n; ++i)
                          for (int64_t c = 0; c < classes; ++c) {
                              const auto idx = static_cast<size_t>(i * classes + c);
                              const float onehot =
                                  c == targets[static_cast<size_t>(i)] ? 1.0f : 0.0f;
                              ln->grad[idx] += (probs[idx] - onehot) * g;
                          }
                  });
}

Tensor weighted_mse_loss(const Tensor& pred, const Tensor& target, const Tensor& row_weights) {
    check_same_shape(pred, target, "weighted_mse_loss");
    if (pred.rank() < 1 || row_weights.rank() != 1 || row_weights.dim(0) != pred.dim(0))
        throw ShapeError("weighted_mse_loss: row_weights " + shape_str(row_weights.shape()) +
                         " does not match rows of " + shape_str(pred.shape()));
    const int64_t rows = pred.dim(0);
    const int64_t cols = pred.numel() / rows;
    const auto& pv = pred.data();
    const auto& tv = target.data();
    const auto& wv = row_weights.data();
    double acc = 0.0;
    for (int64_t r = 0; r < rows; ++r) {
        double row_acc = 0.0;
        for (int64_t c = 0; c < cols; ++c) {
            const auto idx = static_cast<size_t>(r * cols + c);
            const double d = static_cast<double>(pv[idx]) - static_cast<double>(tv[idx]);
            row_acc += d * d;
        }
        acc += static_cast<double>(wv[static_cast<size_t>(r)]) * row_acc;
    }
    const double n = static_cast<double>(pred.numel());
    auto node = make_node(Shape{}, {static_cast<float>(acc / n)});
    node->has_f64 = true;
    node->f64 = acc / n;
    auto pn = pred.node();
    auto tn = target.node();
    auto wn = row_weights.node();
    return finish(node, {pn, tn, wn}, [pn, tn, wn, rows, cols, n](Node& self) {
        const float g = self.grad[0];
        if (pn->requires_grad) ensure_grad(*pn);
        if (tn->requires_grad) ensure_grad(*tn);
        if (wn->requires_grad) ensure_grad(*wn);
        for (int64_t r = 0; r < rows; ++r) {
            const float w = wn->data[static_cast<size_t>(r)];
            double row_acc = 0.0;
            for (int64_t c = 0; c < cols; ++c) {
                const auto idx = static_cast<size_t>(r * cols + c);
                const float d = pn->data[idx] - tn->data[idx];
                row_acc += static_cast<double>(d) * d;
                const float gp = static_cast<float>(2.0 / n) * w * d * g;
                if (pn->requires_grad) pn->grad[idx] += gp;
                if (tn->requires_grad) tn->grad[idx] -= gp;
            }
            if (wn->requires_grad)
                wn->grad[static_cast<size_t>(r)] += static_cast<float>(row_acc / n) * g;
        }
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (numel_of(shape) != a.numel())
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
    auto node = make_node(std::move(shape), a.data());
    if (a.numel() == 1 && a.node()->has_f64) {
        node->has_f64 = true;
        node->f64 = a.node()->f64;
    }
    auto an = a.node();
    return finish(node, {an}, [an](Node& self) {
        ensure_grad(*an);
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
}

}  // namespace equipose::mt
