#include "moda/autodiff.hpp"

#include "moda/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

namespace moda::ad {

Tensor& Node::grad_buffer() {
    if (grad.size() != value.size()) {
        grad = Tensor(value.shape(), 0.0);
    }
    return grad;
}

Var Var::constant(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return Var(std::move(node));
}

Var Var::parameter(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    return Var(std::move(node));
}

namespace {

using BackwardFn = std::function<void(Node&)>;

Var make_result(Tensor value, std::vector<Var> inputs, BackwardFn fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    const bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); });
    if (needs) {
        node->requires_grad = true;
        node->inputs.reserve(inputs.size());
        for (auto& in : inputs) {
            node->inputs.push_back(in.node());
        }
        node->backward = std::move(fn);
    }
    return Var(std::move(node));
}

// Accumulates g into the gradient of input idx when that input wants one.
Tensor* grad_of(Node& self, std::size_t idx) {
    Node& in = *self.inputs[idx];
    return in.requires_grad ? &in.grad_buffer() : nullptr;
}

void check_same(const Var& a, const Var& b, const char* op) {
    require(a.shape() == b.shape(), ErrorCode::ShapeMismatch,
            std::string(op) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

void check_matrix(const Var& a, const char* op) {
    require(a.value().rank() == 2, ErrorCode::ShapeMismatch,
            std::string(op) + " expects a matrix, got " + shape_string(a.shape()));
}

void check_image(const Var& a, const char* op) {
    require(a.value().rank() == 4, ErrorCode::ShapeMismatch,
            std::string(op) + " expects NCHW, got " + shape_string(a.shape()));
}

template <typename Fwd, typename Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
    Tensor out(a.shape());
    const Tensor& x = a.value();
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = fwd(x[i]);
    }
    return make_result(std::move(out), {a}, [deriv](Node& self) {
        Tensor* ga = grad_of(self, 0);
        const Tensor& x = self.inputs[0]->value;
        for (std::size_t i = 0; i < x.size(); ++i) {
            (*ga)[i] += self.grad[i] * deriv(x[i], self.value[i]);
        }
    });
}

}  // namespace

void backward(const Var& root) {
    require(root.defined() && root.size() == 1, ErrorCode::ShapeMismatch, "backward needs a scalar root");
    if (!root.requires_grad()) {
        return;
    }
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) {
                stack.emplace_back(child, 0);
            }
            continue;
        }
        order.push_back(node);
        stack.pop_back();
    }
    root.node()->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward && node->grad.size() == node->value.size()) {
            node->backward(*node);
        }
    }
}

void zero_grad(const std::vector<Var>& params) {
    for (const auto& p : params) {
        p.node()->grad = Tensor();
    }
}

Var add(const Var& a, const Var& b) {
    check_same(a, b, "add");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += b.value()[i];
    }
    return make_result(std::move(out), {a, b}, [](Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            if (Tensor* g = grad_of(self, k)) {
                for (std::size_t i = 0; i < g->size(); ++i) {
                    (*g)[i] += self.grad[i];
                }
            }
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same(a, b, "sub");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] -= b.value()[i];
    }
    return make_result(std::move(out), {a, b}, [](Node& self) {
        if (Tensor* g = grad_of(self, 0)) {
            for (std::size_t i = 0; i < g->size(); ++i) {
                (*g)[i] += self.grad[i];
            }
        }
        if (Tensor* g = grad_of(self, 1)) {
            for (std::size_t i = 0; i < g->size(); ++i) {
                (*g)[i] -= self.grad[i];
            }
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same(a, b, "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= b.value()[i];
    }
    return make_result(std::move(out), {a, b}, [](Node& self) {
        const Tensor& av = self.inputs[0]->value;
        const Tensor& bv = self.inputs[1]->value;
        if (Tensor* g = grad_of(self, 0)) {
            for (std::size_t i = 0; i < g->size(); ++i) {
                (*g)[i] += self.grad[i] * bv[i];
            }
        }
        if (Tensor* g = grad_of(self, 1)) {
            for (std::size_t i = 0; i < g->size(); ++i) {
                (*g)[i] += self.grad[i] * av[i];
            }
        }
    });
}

Var scale(const Var& a, double factor) {
    return unary(
        a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Var add_scalar(const Var& a, double value) {
    return unary(
        a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Var square(const Var& a) {
    return unary(
        a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(const Var& a) {
    return unary(
        a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var exp(const Var& a) {
    return unary(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var tanh(const Var& a) {
    return unary(
        a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
    return unary(
        a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, [](double, double y) { return y * (1.0 - y); });
}

Var leaky_relu(const Var& a, double slope) {
    return unary(
        a, [slope](double x) { return x > 0.0 ? x : slope * x; },
        [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var clamp(const Var& a, double lo, double hi) {
    return unary(
        a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
        [lo, hi](double x, double) { return x >= lo && x <= hi ? 1.0 : 0.0; });
}

Var gelu(const Var& a) {
    // tanh approximation
    constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
    constexpr double k = 0.044715;
    return unary(
        a,
        [](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + k * x * x * x))); },
        [](double x, double) {
            const double u = c * (x + k * x * x * x);
            const double t = std::tanh(u);
            const double du = c * (1.0 + 3.0 * k * x * x);
            return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
        });
}

Var detach(const Var& a) { return Var::constant(a.value()); }

Var reshape(const Var& a, Shape shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    return make_result(std::move(out), {a}, [](Node& self) {
        Tensor* g = grad_of(self, 0);
        for (std::size_t i = 0; i < g->size(); ++i) {
            (*g)[i] += self.grad[i];
        }
    });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data()) {
        s += v;
    }
    return make_result(Tensor::scalar(s), {a}, [](Node& self) {
        Tensor* g = grad_of(self, 0);
        const double go = self.grad[0];
        for (std::size_t i = 0; i < g->size(); ++i) {
            (*g)[i] += go;
        }
    });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Var mean_abs_diff(const Var& a, const Var& b) { return mean(abs(sub(a, b))); }

Var mean_square(const Var& a) { return mean(square(a)); }

Var matmul(const Var& a, const Var& b) {
    check_matrix(a, "matmul");
    check_matrix(b, "matmul");
    const std::size_t m = a.dim(0);
    const std::size_t k = a.dim(1);
    const std::size_t n = b.dim(1);
    require(b.dim(0) == k, ErrorCode::DimMismatch,
            "matmul " + shape_string(a.shape()) + " * " + shape_string(b.shape()));
    Tensor out({m, n});
    kernels::gemm(false, false, m, n, k, a.value().data(), b.value().data(), out.data(), false);
    return make_result(std::move(out), {a, b}, [m, n, k](Node& self) {
        const Tensor& av = self.inputs[0]->value;
        const Tensor& bv = self.inputs[1]->value;
        if (Tensor* ga = grad_of(self, 0)) {
            kernels::gemm(false, true, m, k, n, self.grad.data(), bv.data(), ga->data(), true);
        }
        if (Tensor* gb = grad_of(self, 1)) {
            kernels::gemm(true, false, k, n, m, av.data(), self.grad.data(), gb->data(), true);
        }
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    check_matrix(a, "matmul_nt");
    check_matrix(b, "matmul_nt");
    const std::size_t m = a.dim(0);
    const std::size_t k = a.dim(1);
    const std::size_t n = b.dim(0);
    require(b.dim(1) == k, ErrorCode::DimMismatch,
            "matmul_nt " + shape_string(a.shape()) + " * " + shape_string(b.shape()) + "^T");
    Tensor out({m, n});
    kernels::gemm(false, true, m, n, k, a.value().data(), b.value().data(), out.data(), false);
    return make_result(std::move(out), {a, b}, [m, n, k](Node& self) {
        const Tensor& av = self.inputs[0]->value;
        const Tensor& bv = self.inputs[1]->value;
        if (Tensor* ga = grad_of(self, 0)) {
            kernels::gemm(false, false, m, k, n, self.grad.data(), bv.data(), ga->data(), true);
        }
        if (Tensor* gb = grad_of(self, 1)) {
            kernels::gemm(true, false, n, k, m, self.grad.data(), av.data(), gb->data(), true);
        }
    });
}

Var add_row_vector(const Var& a, const Var& b) {
    check_matrix(a, "add_row_vector");
    const std::size_t rows = a.dim(0);
    const std::size_t cols = a.dim(1);
    require(b.size() == cols, ErrorCode::DimMismatch,
            "add_row_vector: row width " + std::to_string(cols) + " vs vector " + std::to_string(b.size()));
    Tensor out = a.value();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            out[r * cols + c] += b.value()[c];
        }
    }
    return make_result(std::move(out), {a, b}, [rows, cols](Node& self) {
        if (Tensor* ga = grad_of(self, 0)) {
            for (std::size_t i = 0; i < ga->size(); ++i) {
                (*ga)[i] += self.grad[i];
            }
        }
        if (Tensor* gb = grad_of(self, 1)) {
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    (*gb)[c] += self.grad[r * cols + c];
                }
            }
        }
    });
}

Var concat_cols(const Var& a, const Var& b) {
    check_matrix(a, "concat_cols");
    check_matrix(b, "concat_cols");
    const std::size_t rows = a.dim(0);
    require(b.dim(0) == rows, ErrorCode::DimMismatch, "concat_cols row counts differ");
    const std::size_t ca = a.dim(1);
    const std::size_t cb = b.dim(1);
    Tensor out({rows, ca + cb});
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(a.value().data().begin() + r * ca, ca, out.data().begin() + r * (ca + cb));
        std::copy_n(b.value().data().begin() + r * cb, cb, out.data().begin() + r * (ca + cb) + ca);
    }
    return make_result(std::move(out), {a, b}, [rows, ca, cb](Node& self) {
        if (Tensor* ga = grad_of(self, 0)) {
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < ca; ++c) {
                    (*ga)[r * ca + c] += self.grad[r * (ca + cb) + c];
                }
            }
        }
        if (Tensor* gb = grad_of(self, 1)) {
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cb; ++c) {
                    (*gb)[r * cb + c] += self.grad[r * (ca + cb) + ca + c];
                }
            }
        }
    });
}

Var slice_cols(const Var& a, std::size_t start, std::size_t count) {
    check_matrix(a, "slice_cols");
    const std::size_t rows = a.dim(0);
    const std::size_t cols = a.dim(1);
    require(start + count <= cols, ErrorCode::DimMismatch, "slice_cols out of range");
    Tensor out({rows, count});
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < count; ++c) {
            out[r * count + c] = a.value()[r * cols + start + c];
        }
    }
    return make_result(std::move(out), {a}, [rows, cols, start, count](Node& self) {
        Tensor* ga = grad_of(self, 0);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < count; ++c) {
                (*ga)[r * cols + start + c] += self.grad[r * count + c];
            }
        }
    });
}

Var mean_rows(const Var& a) {
    check_matrix(a, "mean_rows");
    const std::size_t rows = a.dim(0);
    const std::size_t cols = a.dim(1);
    Tensor out({1, cols});
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            out[c] += a.value()[r * cols + c];
        }
    }
    for (std::size_t c = 0; c < cols; ++c) {
        out[c] /= static_cast<double>(rows);
    }
    return make_result(std::move(out), {a}, [rows, cols](Node& self) {
        Tensor* ga = grad_of(self, 0);
        const double inv = 1.0 / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                (*ga)[r * cols + c] += self.grad[c] * inv;
            }
        }
    });
}

Var broadcast_rows(const Var& v, std::size_t rows) {
    const std::size_t cols = v.size();
    Tensor out({rows, cols});
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy(v.value().data().begin(), v.value().data().end(), out.data().begin() + r * cols);
    }
    return make_result(std::move(out), {v}, [rows, cols](Node& self) {
        Tensor* gv = grad_of(self, 0);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                (*gv)[c] += self.grad[r * cols + c];
            }
        }
    });
}

Var softmax_rows(const Var& scores, const Tensor& bias) {
    check_matrix(scores, "softmax_rows");
    const std::size_t rows = scores.dim(0);
    const std::size_t cols = scores.dim(1);
    require(bias.empty() || bias.size() == rows * cols, ErrorCode::ShapeMismatch, "softmax bias shape");
    Tensor out({rows, cols});
    kernels::softmax_rows(rows, cols, scores.value().data(), bias.data(), out.data());
    return make_result(std::move(out), {scores}, [rows, cols](Node& self) {
        Tensor* gs = grad_of(self, 0);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.value.data().data() + r * cols;
            const double* gy = self.grad.data().data() + r * cols;
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
                dot += y[c] * gy[c];
            }
            for (std::size_t c = 0; c < cols; ++c) {
                (*gs)[r * cols + c] += y[c] * (gy[c] - dot);
            }
        }
    });
}

Var layer_norm_rows(const Var& a, const Var& gamma, const Var& beta, double eps) {
    check_matrix(a, "layer_norm_rows");
    const std::size_t rows = a.dim(0);
    const std::size_t cols = a.dim(1);
    require(gamma.size() == cols && beta.size() == cols, ErrorCode::DimMismatch, "layer_norm affine width");
    Tensor out({rows, cols});
    Tensor normalized({rows, cols});
    std::vector<double> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double mu = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            mu += a.value()[r * cols + c];
        }
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double d = a.value()[r * cols + c] - mu;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < cols; ++c) {
            const double xh = (a.value()[r * cols + c] - mu) * inv_std[r];
            normalized[r * cols + c] = xh;
            out[r * cols + c] = xh * gamma.value()[c] + beta.value()[c];
        }
    }
    return make_result(std::move(out), {a, gamma, beta},
                       [rows, cols, normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& self) {
                           const Tensor& g = self.inputs[1]->value;
                           if (Tensor* gg = grad_of(self, 1)) {
                               for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t c = 0; c < cols; ++c) {
                                       (*gg)[c] += self.grad[r * cols + c] * normalized[r * cols + c];
                                   }
                               }
                           }
                           if (Tensor* gb = grad_of(self, 2)) {
                               for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t c = 0; c < cols; ++c) {
                                       (*gb)[c] += self.grad[r * cols + c];
                                   }
                               }
                           }
                           if (Tensor* ga = grad_of(self, 0)) {
                               const double n = static_cast<double>(cols);
                               for (std::size_t r = 0; r < rows; ++r) {
                                   double sum_d = 0.0;
                                   double sum_dx = 0.0;
                                   for (std::size_t c = 0; c < cols; ++c) {
                                       const double d = self.grad[r * cols + c] * g[c];
                                       sum_d += d;
                                       sum_dx += d * normalized[r * cols + c];
                                   }
                                   for (std::size_t c = 0; c < cols; ++c) {
                                       const double d = self.grad[r * cols + c] * g[c];
                                       (*ga)[r * cols + c] +=
                                           inv_std[r] * (d - sum_d / n - normalized[r * cols + c] * sum_dx / n);
                                   }
                               }
                           }
                       });
}

Var conv2d(const Var& input, const Var& weight, const Var& bias, std::size_t stride, std::size_t pad) {
    check_image(input, "conv2d");
    check_image(weight, "conv2d weight");
    kernels::ConvGeometry g;
    g.batch = input.dim(0);
    g.in_channels = input.dim(1);
    g.height = input.dim(2);
    g.width = input.dim(3);
    g.out_channels = weight.dim(0);
    g.kernel = weight.dim(2);
    g.stride = stride;
    g.pad = pad;
    require(weight.dim(1) == g.in_channels && weight.dim(3) == g.kernel, ErrorCode::ShapeMismatch,
            "conv2d weight " + shape_string(weight.shape()) + " for input " + shape_string(input.shape()));
    require(!bias.defined() || bias.size() == g.out_channels, ErrorCode::ShapeMismatch, "conv2d bias width");
    require(g.height + 2 * pad >= g.kernel && g.width + 2 * pad >= g.kernel, ErrorCode::ShapeMismatch,
            "conv2d kernel larger than padded input");
    Tensor out({g.batch, g.out_channels, g.out_height(), g.out_width()});
    const std::span<const double> bias_span = bias.defined() ? bias.value().data() : std::span<const double>{};
    kernels::conv2d_forward(g, input.value().data(), weight.value().data(), bias_span, out.data());
    std::vector<Var> inputs{input, weight};
    if (bias.defined()) {
        inputs.push_back(bias);
    }
    const bool has_bias = bias.defined();
    return make_result(std::move(out), std::move(inputs), [g, has_bias](Node& self) {
        Tensor* gi = grad_of(self, 0);
        Tensor* gw = grad_of(self, 1);
        Tensor* gb = has_bias ? grad_of(self, 2) : nullptr;
        kernels::conv2d_backward(g, self.inputs[0]->value.data(), self.inputs[1]->value.data(), self.grad.data(),
                                 gi ? gi->data() : std::span<double>{}, gw ? gw->data() : std::span<double>{},
                                 gb ? gb->data() : std::span<double>{});
    });
}

Var upsample2x(const Var& input) {
    check_image(input, "upsample2x");
    const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    Tensor out({n, c, 2 * h, 2 * w});
    const Tensor& x = input.value();
    for (std::size_t p = 0; p < n * c; ++p) {
        for (std::size_t y = 0; y < 2 * h; ++y) {
            for (std::size_t xx = 0; xx < 2 * w; ++xx) {
                out[(p * 2 * h + y) * 2 * w + xx] = x[(p * h + y / 2) * w + xx / 2];
            }
        }
    }
    return make_result(std::move(out), {input}, [n, c, h, w](Node& self) {
        Tensor* gi = grad_of(self, 0);
        for (std::size_t p = 0; p < n * c; ++p) {
            for (std::size_t y = 0; y < 2 * h; ++y) {
                for (std::size_t xx = 0; xx < 2 * w; ++xx) {
                    (*gi)[(p * h + y / 2) * w + xx / 2] += self.grad[(p * 2 * h + y) * 2 * w + xx];
                }
            }
        }
    });
}

Var avg_pool2x(const Var& input) {
    check_image(input, "avg_pool2x");
    const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2) / 2, w = input.dim(3) / 2;
    const std::size_t iw = input.dim(3), ih = input.dim(2);
    Tensor out({n, c, h, w});
    const Tensor& x = input.value();
    for (std::size_t p = 0; p < n * c; ++p) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t xx = 0; xx < w; ++xx) {
                const std::size_t base = (p * ih + 2 * y) * iw + 2 * xx;
                out[(p * h + y) * w + xx] = 0.25 * (x[base] + x[base + 1] + x[base + iw] + x[base + iw + 1]);
            }
        }
    }
    return make_result(std::move(out), {input}, [n, c, h, w, ih, iw](Node& self) {
        Tensor* gi = grad_of(self, 0);
        for (std::size_t p = 0; p < n * c; ++p) {
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t xx = 0; xx < w; ++xx) {
                    const double g = 0.25 * self.grad[(p * h + y) * w + xx];
                    const std::size_t base = (p * ih + 2 * y) * iw + 2 * xx;
                    (*gi)[base] += g;
                    (*gi)[base + 1] += g;
                    (*gi)[base + iw] += g;
                    (*gi)[base + iw + 1] += g;
                }
            }
        }
    });
}

Var concat_channels(const Var& a, const Var& b) {
    check_image(a, "concat_channels");
    check_image(b, "concat_channels");
    const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
    const std::size_t plane = a.dim(2) * a.dim(3);
    require(b.dim(0) == n && b.dim(2) == a.dim(2) && b.dim(3) == a.dim(3), ErrorCode::ShapeMismatch,
            "concat_channels " + shape_string(a.shape()) + " with " + shape_string(b.shape()));
    Tensor out({n, ca + cb, a.dim(2), a.dim(3)});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(a.value().data().begin() + i * ca * plane, ca * plane, out.data().begin() + i * (ca + cb) * plane);
        std::copy_n(b.value().data().begin() + i * cb * plane, cb * plane,
                    out.data().begin() + (i * (ca + cb) + ca) * plane);
    }
    return make_result(std::move(out), {a, b}, [n, ca, cb, plane](Node& self) {
        if (Tensor* ga = grad_of(self, 0)) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < ca * plane; ++j) {
                    (*ga)[i * ca * plane + j] += self.grad[i * (ca + cb) * plane + j];
                }
            }
        }
        if (Tensor* gb = grad_of(self, 1)) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < cb * plane; ++j) {
                    (*gb)[i * cb * plane + j] += self.grad[(i * (ca + cb) + ca) * plane + j];
                }
            }
        }
    });
}

}  // namespace moda::ad
