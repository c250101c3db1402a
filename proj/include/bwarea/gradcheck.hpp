// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "bwarea/random.hpp"
#include "bwarea/tensor.hpp"

namespace bwarea {

struct GradCheckResult {
    double max_rel_error = 0;
    double max_abs_error = 0;
    std::size_t checked = 0;
};

/// Central finite-difference check of d loss / d input for the listed element
/// indices (all elements when empty). `loss` must rebuild the graph from the
/// current values of `input` on every call. Elements whose analytic and
/// numeric values agree within `abs_tol` count as exact.
template <typename T>
GradCheckResult finite_difference_check(Tensor<T> input, const std::function<Tensor<T>()>& loss,
                                        std::vector<std::size_t> indices = {}, T step = T(1e-6),
                                        double abs_tol = 1e-6) {
    input.zero_grad();
    auto l = loss();
    backward(l);
    std::vector<T> analytic(input.grad().begin(), input.grad().end());
    input.zero_grad();

    if (indices.empty()) {
        indices.resize(input.size());
        for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    }

    GradCheckResult result;
    auto values = input.values();
    for (std::size_t idx : indices) {
        const T saved = values[idx];
        double fp, fm;
        {
            NoGradGuard ng;
            values[idx] = saved + step;
            fp = static_cast<double>(loss().item());
            values[idx] = saved - step;
            fm = static_cast<double>(loss().item());
        }
        values[idx] = saved;
        const double numeric = (fp - fm) / (2.0 * static_cast<double>(step));
        const double a = static_cast<double>(analytic[idx]);
        const double diff = std::abs(a - numeric);
        result.max_abs_error = std::max(result.max_abs_error, diff);
        if (diff > abs_tol) {
            const double denom = std::max(std::abs(a), std::abs(numeric));
            result.max_rel_error = std::max(result.max_rel_error, diff / denom);
        }
        ++result.checked;
    }
    return result;
}

/// Picks `count` distinct element indices of a tensor of `size` elements.
inline std::vector<std::size_t> sample_indices(std::size_t size, std::size_t count, Rng& rng) {
    std::vector<std::size_t> all(size);
    for (std::size_t i = 0; i < size; ++i) all[i] = i;
    if (count >= size) return all;
    for (std::size_t i = 0; i < count; ++i) std::swap(all[i], all[i + rng.index(size - i)]);
    all.resize(count);
    return all;
}

}  // namespace bwarea
