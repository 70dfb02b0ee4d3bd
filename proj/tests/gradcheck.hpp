#pragma once

// Central finite-difference oracle for the autodiff graph. Test-only.

#include "moda/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace moda::testing {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::string worst;
};

// Relative error |analytic - numeric| / max(|analytic|, |numeric|, floor).
// Checks at most max_entries randomly chosen entries per tensor.
inline GradCheckResult grad_check(const std::function<ad::Var()>& loss_fn, const std::vector<ad::Var>& wrt,
                                  std::size_t max_entries = 24, double step = 1e-6, double floor = 1e-6) {
    ad::zero_grad(wrt);
    ad::Var loss = loss_fn();
    ad::backward(loss);
    std::vector<Tensor> analytic;
    for (const auto& v : wrt) {
        analytic.push_back(v.grad().size() == v.size() ? v.grad() : Tensor(v.shape(), 0.0));
    }
    GradCheckResult result;
    std::mt19937_64 rng(1234);
    for (std::size_t p = 0; p < wrt.size(); ++p) {
        ad::Var v = wrt[p];
        std::vector<std::size_t> idx(v.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            idx[i] = i;
        }
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(std::min(idx.size(), max_entries));
        for (std::size_t i : idx) {
            const double orig = v.value()[i];
            v.mutable_value()[i] = orig + step;
            const double up = loss_fn().item();
            v.mutable_value()[i] = orig - step;
            const double down = loss_fn().item();
            v.mutable_value()[i] = orig;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[p][i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            ++result.checked;
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst = "tensor " + std::to_string(p) + " entry " + std::to_string(i) + ": analytic " +
                               std::to_string(a) + " numeric " + std::to_string(numeric);
            }
        }
    }
    return result;
}

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, scale);
    Tensor t(std::move(shape));
    for (auto& v : t.data()) {
        v = dist(rng);
    }
    return t;
}

}  // namespace moda::testing
