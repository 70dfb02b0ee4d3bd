#pragma once

#include <cstddef>
#include <span>

// Data-parallel inner loops. Every kernel has an OpenMP version (the one the
// library calls) and a plain serial reference with the same signature that
// the tests and the benchmark compare against.
namespace moda::kernels {

// C[m x n] = op(A) * op(B) (+ C when accumulate). op(A) is [m x k], op(B) is
// [k x n]; trans_a means A is stored [k x m], trans_b means B is stored [n x k].
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate);
void gemm_serial(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 std::span<const double> a, std::span<const double> b, std::span<double> c,
                 bool accumulate);

struct ConvGeometry {
    std::size_t batch = 1;
    std::size_t in_channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;
    std::size_t out_channels = 1;
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::size_t pad = 1;

    std::size_t out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
    std::size_t out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
    std::size_t input_size() const { return batch * in_channels * height * width; }
    std::size_t output_size() const { return batch * out_channels * out_height() * out_width(); }
    std::size_t weight_size() const { return out_channels * in_channels * kernel * kernel; }
};

// NCHW input, OIKK weights, zero padding. bias may be empty.
void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);
void conv2d_forward_serial(const ConvGeometry& g, std::span<const double> input,
                           std::span<const double> weight, std::span<const double> bias,
                           std::span<double> output);

// Accumulates into whichever gradient spans are non-empty.
void conv2d_backward(const ConvGeometry& g, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_output,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias);
void conv2d_backward_serial(const ConvGeometry& g, std::span<const double> input,
                            std::span<const double> weight, std::span<const double> grad_output,
                            std::span<double> grad_input, std::span<double> grad_weight,
                            std::span<double> grad_bias);

// Row-wise softmax of scores + bias, written to out. Entries of bias may be
// -infinity; a masked entry gets weight exactly 0.
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> scores,
                  std::span<const double> bias, std::span<double> out);
void softmax_rows_serial(std::size_t rows, std::size_t cols, std::span<const double> scores,
                         std::span<const double> bias, std::span<double> out);

}  // namespace moda::kernels
