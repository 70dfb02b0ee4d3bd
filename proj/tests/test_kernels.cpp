#include "doctest.h"
#include "gradcheck.hpp"

#include "moda/kernels.hpp"

#include <cmath>
#include <limits>

using namespace moda;

namespace {

double max_rel(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
    }
    return m;
}

}  // namespace

TEST_CASE("parallel gemm matches the serial reference for every transpose combination") {
    const std::size_t m = 37, n = 600, k = 19;
    for (bool ta : {false, true}) {
        for (bool tb : {false, true}) {
            const Tensor a = testing::random_tensor({m * k}, 1);
            const Tensor b = testing::random_tensor({k * n}, 2);
            Tensor c1 = testing::random_tensor({m * n}, 3);
            Tensor c2 = c1;
            kernels::gemm(ta, tb, m, n, k, a.data(), b.data(), c1.data(), true);
            kernels::gemm_serial(ta, tb, m, n, k, a.data(), b.data(), c2.data(), true);
            // Same summation order; only FMA contraction may differ.
            CHECK(max_rel(c1.data(), c2.data()) < 1e-13);
        }
    }
}

TEST_CASE("conv2d forward and backward match the direct-loop reference") {
    for (std::size_t stride : {1u, 2u}) {
        kernels::ConvGeometry g;
        g.batch = 2;
        g.in_channels = 3;
        g.height = 9;
        g.width = 8;
        g.out_channels = 5;
        g.kernel = 3;
        g.stride = stride;
        g.pad = 1;
        const Tensor in = testing::random_tensor({g.input_size()}, 10);
        const Tensor w = testing::random_tensor({g.weight_size()}, 11);
        const Tensor bias = testing::random_tensor({g.out_channels}, 12);
        Tensor out1({g.output_size()}), out2({g.output_size()});
        kernels::conv2d_forward(g, in.data(), w.data(), bias.data(), out1.data());
        kernels::conv2d_forward_serial(g, in.data(), w.data(), bias.data(), out2.data());
        CHECK(max_rel(out1.data(), out2.data()) < 1e-12);

        const Tensor gout = testing::random_tensor({g.output_size()}, 13);
        Tensor gi1({g.input_size()}), gw1({g.weight_size()}), gb1({g.out_channels});
        Tensor gi2({g.input_size()}), gw2({g.weight_size()}), gb2({g.out_channels});
        kernels::conv2d_backward(g, in.data(), w.data(), gout.data(), gi1.data(), gw1.data(), gb1.data());
        kernels::conv2d_backward_serial(g, in.data(), w.data(), gout.data(), gi2.data(), gw2.data(), gb2.data());
        CHECK(max_rel(gi1.data(), gi2.data()) < 1e-12);
        CHECK(max_rel(gw1.data(), gw2.data()) < 1e-12);
        CHECK(max_rel(gb1.data(), gb2.data()) < 1e-12);
    }
}

TEST_CASE("masked softmax gives exact zeros and one-hot rows") {
    const double inf = std::numeric_limits<double>::infinity();
    const std::vector<double> scores{3.0, -1.0, 0.5, 2.0, 2.0, 2.0};
    const std::vector<double> bias{0.0, -inf, -inf, -inf, 0.0, -inf};
    std::vector<double> out(6), ref(6);
    kernels::softmax_rows(2, 3, scores, bias, out);
    kernels::softmax_rows_serial(2, 3, scores, bias, ref);
    CHECK(out == ref);
    CHECK(out == std::vector<double>{1.0, 0.0, 0.0, 0.0, 1.0, 0.0});
}
