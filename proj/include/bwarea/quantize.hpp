// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <limits>
#include <span>
#include <vector>

#include "bwarea/ops.hpp"

namespace bwarea {

/// Index of the code nearest to `e` in L2 distance; ties go to the lowest index.
template <typename T>
int nearest_code(std::span<const T> e, const Tensor<T>& codebook) {
    const std::size_t n = codebook.rows(), d = codebook.cols();
    if (e.size() != d) throw DimensionError("nearest_code: vector of length " + std::to_string(e.size()) +
                                            " against codes of dimension " + std::to_string(d));
    int best = 0;
    T best_dist = std::numeric_limits<T>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const T* c = codebook.data() + i * d;
        T dist = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const T diff = e[j] - c[j];
            dist += diff * diff;
        }
        if (dist < best_dist) {
            best_dist = dist;
            best = static_cast<int>(i);
        }
    }
    return best;
}

/// Result of vector-quantizing a batch of encoder outputs.
template <typename T>
struct Quantized {
    std::vector<int> indices;
    Tensor<T> straight_through;  // values equal the chosen codes; gradient flows to the encoder output
    Tensor<T> commitment;        // weighted mean of ||e - sg(c)||^2
    Tensor<T> codebook_loss;     // lambda_c * weighted mean of ||sg(e) - c||^2
};

/// Quantizes every row of `encoded` [M, d_code] against `codebook` [N, d_code].
/// `weights` masks rows out of both losses (empty means all ones).
template <typename T>
Quantized<T> quantize(const Tensor<T>& encoded, const Tensor<T>& codebook, T lambda_c,
                      std::span<const T> weights = {}) {
    const std::size_t m = encoded.rows(), d = encoded.cols();
    if (codebook.cols() != d)
        throw DimensionError("quantize: encoder width " + std::to_string(d) + " differs from code width " +
                             std::to_string(codebook.cols()));
    std::vector<T> ones;
    if (weights.empty()) {
        ones.assign(m, T(1));
        weights = ones;
    }
    Quantized<T> q;
    q.indices.resize(m);
    for (std::size_t i = 0; i < m; ++i)
        q.indices[i] = nearest_code<T>(encoded.values().subspan(i * d, d), codebook);
    auto codes = gather_rows(codebook, q.indices);
    q.straight_through = straight_through(encoded, codes);
    q.commitment = weighted_mean_sq_norm(sub(encoded, stop_gradient(codes)), weights);
    q.codebook_loss = scale(weighted_mean_sq_norm(sub(stop_gradient(encoded), codes), weights), lambda_c);
    return q;
}

}  // namespace bwarea
