#include "moda/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace moda::kernels {
namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1 << 15;
constexpr std::size_t kColumnBlock = 512;

std::vector<double> transpose_copy(std::span<const double> src, std::size_t rows, std::size_t cols) {
    std::vector<double> out(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    return out;
}

void im2col(const ConvGeometry& g, const double* image, double* col) {
    const std::size_t oh = g.out_height();
    const std::size_t ow = g.out_width();
    const std::size_t plane = oh * ow;
    const std::size_t kk = g.kernel * g.kernel;
    const auto rows = static_cast<std::ptrdiff_t>(g.in_channels * kk);
#pragma omp parallel for schedule(static) if (rows * plane > kParallelWork)
    for (std::ptrdiff_t row = 0; row < rows; ++row) {
        const std::size_t c = static_cast<std::size_t>(row) / kk;
        const std::size_t ky = (static_cast<std::size_t>(row) % kk) / g.kernel;
        const std::size_t kx = static_cast<std::size_t>(row) % g.kernel;
        const double* src = image + c * g.height * g.width;
        double* dst = col + static_cast<std::size_t>(row) * plane;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
            double* out_row = dst + oy * ow;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
                std::fill(out_row, out_row + ow, 0.0);
                continue;
            }
            const double* in_row = src + static_cast<std::size_t>(iy) * g.width;
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                out_row[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? 0.0 : in_row[ix];
            }
        }
    }
}

// Scatter-add of im2col columns back onto the image. Parallel over input
// channels so no two threads touch the same plane.
void col2im_add(const ConvGeometry& g, const double* col, double* image) {
    const std::size_t oh = g.out_height();
    const std::size_t ow = g.out_width();
    const std::size_t plane = oh * ow;
    const std::size_t kk = g.kernel * g.kernel;
    const auto channels = static_cast<std::ptrdiff_t>(g.in_channels);
#pragma omp parallel for schedule(static) if (g.in_channels * kk * plane > kParallelWork)
    for (std::ptrdiff_t c = 0; c < channels; ++c) {
        double* dst = image + static_cast<std::size_t>(c) * g.height * g.width;
        for (std::size_t k = 0; k < kk; ++k) {
            const std::size_t ky = k / g.kernel;
            const std::size_t kx = k % g.kernel;
            const double* src = col + (static_cast<std::size_t>(c) * kk + k) * plane;
            for (std::size_t oy = 0; oy < oh; ++oy) {
                const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
                    continue;
                }
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                    if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) {
                        dst[static_cast<std::size_t>(iy) * g.width + static_cast<std::size_t>(ix)] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate) {
    std::vector<double> a_packed;
    std::vector<double> b_packed;
    const double* pa = a.data();
    const double* pb = b.data();
    if (trans_a) {
        a_packed = transpose_copy(a, k, m);
        pa = a_packed.data();
    }
    if (trans_b) {
        b_packed = transpose_copy(b, n, k);
        pb = b_packed.data();
    }
    double* pc = c.data();
    const auto rows = static_cast<std::ptrdiff_t>(m);
    // Each (i, j) is summed over p in increasing order, the same order as the
    // serial reference.
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
    for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double* crow = pc + i * n;
        if (!accumulate) {
            std::fill(crow, crow + n, 0.0);
        }
        const double* arow = pa + i * k;
        for (std::size_t j0 = 0; j0 < n; j0 += kColumnBlock) {
            const std::size_t j1 = std::min(n, j0 + kColumnBlock);
            for (std::size_t p = 0; p < k; ++p) {
                const double av = arow[p];
                const double* brow = pb + p * n;
                for (std::size_t j = j0; j < j1; ++j) {
                    crow[j] += av * brow[j];
                }
            }
        }
    }
}

void gemm_serial(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 std::span<const double> a, std::span<const double> b, std::span<double> c,
                 bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = accumulate ? c[i * n + j] : 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = trans_a ? a[p * m + i] : a[i * k + p];
                const double bv = trans_b ? b[j * k + p] : b[p * n + j];
                acc += av * bv;
            }
            c[i * n + j] = acc;
        }
    }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
    const std::size_t plane = g.out_height() * g.out_width();
    const std::size_t patch = g.in_channels * g.kernel * g.kernel;
    std::vector<double> col(patch * plane);
    for (std::size_t n = 0; n < g.batch; ++n) {
        im2col(g, input.data() + n * g.in_channels * g.height * g.width, col.data());
        auto out = output.subspan(n * g.out_channels * plane, g.out_channels * plane);
        gemm(false, false, g.out_channels, plane, patch, weight, col, out, false);
        if (!bias.empty()) {
            for (std::size_t o = 0; o < g.out_channels; ++o) {
                double* row = out.data() + o * plane;
                for (std::size_t p = 0; p < plane; ++p) {
                    row[p] += bias[o];
                }
            }
        }
    }
}

void conv2d_backward(const ConvGeometry& g, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_output,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias) {
    const std::size_t plane = g.out_height() * g.out_width();
    const std::size_t patch = g.in_channels * g.kernel * g.kernel;
    std::vector<double> col(patch * plane);
    for (std::size_t n = 0; n < g.batch; ++n) {
        auto gout = grad_output.subspan(n * g.out_channels * plane, g.out_channels * plane);
        if (!grad_bias.empty()) {
            for (std::size_t o = 0; o < g.out_channels; ++o) {
                double s = 0.0;
                for (std::size_t p = 0; p < plane; ++p) {
                    s += gout[o * plane + p];
                }
                grad_bias[o] += s;
            }
        }
        if (!grad_weight.empty()) {
            im2col(g, input.data() + n * g.in_channels * g.height * g.width, col.data());
            gemm(false, true, g.out_channels, patch, plane, gout, col, grad_weight, true);
        }
        if (!grad_input.empty()) {
            gemm(true, false, patch, plane, g.out_channels, weight, gout, col, false);
            col2im_add(g, col.data(), grad_input.data() + n * g.in_channels * g.height * g.width);
        }
    }
}

void conv2d_forward_serial(const ConvGeometry& g, std::span<const double> input,
                           std::span<const double> weight, std::span<const double> bias,
                           std::span<double> output) {
    const std::size_t oh = g.out_height();
    const std::size_t ow = g.out_width();
    for (std::size_t n = 0; n < g.batch; ++n) {
        for (std::size_t o = 0; o < g.out_channels; ++o) {
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = bias.empty() ? 0.0 : bias[o];
                    for (std::size_t c = 0; c < g.in_channels; ++c) {
                        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
                            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                                const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
                                const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.height) ||
                                    ix >= static_cast<std::ptrdiff_t>(g.width)) {
                                    continue;
                                }
                                acc += weight[((o * g.in_channels + c) * g.kernel + ky) * g.kernel + kx] *
                                       input[((n * g.in_channels + c) * g.height + static_cast<std::size_t>(iy)) * g.width +
                                             static_cast<std::size_t>(ix)];
                            }
                        }
                    }
                    output[((n * g.out_channels + o) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
}

void conv2d_backward_serial(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> weight, std::span<const double> grad_output,
                            std::span<double> grad_input, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
    const std::size_t oh = g.out_height();
    const std::size_t ow = g.out_width();
    for (std::size_t n = 0; n < g.batch; ++n) {
        for (std::size_t o = 0; o < g.out_channels; ++o) {
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    const double go = grad_output[((n * g.out_channels + o) * oh + oy) * ow + ox];
                    if (!grad_bias.empty()) {
                        grad_bias[o] += go;
                    }
                    for (std::size_t c = 0; c < g.in_channels; ++c) {
                        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
                            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                                const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
                                const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.height) ||
                                    ix >= static_cast<std::ptrdiff_t>(g.width)) {
                                    continue;
                                }
                                const std::size_t wi = ((o * g.in_channels + c) * g.kernel + ky) * g.kernel + kx;
                                const std::size_t xi = ((n * g.in_channels + c) * g.height + static_cast<std::size_t>(iy)) * g.width +
                                                       static_cast<std::size_t>(ix);
                                if (!grad_weight.empty()) {
                                    grad_weight[wi] += go * input[xi];
                                }
                                if (!grad_input.empty()) {
                                    grad_input[xi] += go * weight[wi];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

namespace {

void softmax_row(std::size_t cols, const double* scores, const double* bias, double* out) {
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    double row_max = kNegInf;
    for (std::size_t j = 0; j < cols; ++j) {
        row_max = std::max(row_max, scores[j] + (bias ? bias[j] : 0.0));
    }
    if (row_max == kNegInf) {
        std::fill(out, out + cols, 0.0);
        return;
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
        const double v = scores[j] + (bias ? bias[j] : 0.0);
        out[j] = v == kNegInf ? 0.0 : std::exp(v - row_max);
        sum += out[j];
    }
    for (std::size_t j = 0; j < cols; ++j) {
        out[j] /= sum;
    }
}

}  // namespace

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> scores,
                  std::span<const double> bias, std::span<double> out) {
    const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto r = static_cast<std::size_t>(i);
        softmax_row(cols, scores.data() + r * cols, bias.empty() ? nullptr : bias.data() + r * cols,
                    out.data() + r * cols);
    }
}

void softmax_rows_serial(std::size_t rows, std::size_t cols, std::span<const double> scores,
                         std::span<const double> bias, std::span<double> out) {
    for (std::size_t r = 0; r < rows; ++r) {
        softmax_row(cols, scores.data() + r * cols, bias.empty() ? nullptr : bias.data() + r * cols,
                    out.data() + r * cols);
    }
}

}  // namespace moda::kernels
