// SPDX-License-Identifier: Apache-2.0
// Independent reference computations used by the tests. Nothing here calls
// into the library's math; each routine recomputes its answer from scratch in
// double precision.
#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "bwarea/bwarea.hpp"

namespace oracle {

/// Softmax of one row, max-subtracted, in double.
inline std::vector<double> softmax(std::span<const double> row) {
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    std::vector<double> p(row.size());
    double z = 0;
    for (std::size_t i = 0; i < row.size(); ++i) z += (p[i] = std::exp(row[i] - mx));
    for (auto& v : p) v /= z;
    return p;
}

/// Weighted mean cross-entropy and its gradient w.r.t. logits [m, n].
struct CrossEntropy {
    double value = 0;
    std::vector<double> grad;
};

inline CrossEntropy cross_entropy(const std::vector<double>& logits, std::size_t m, std::size_t n,
                                  const std::vector<int>& targets, const std::vector<double>& w) {
    CrossEntropy out;
    out.grad.assign(m * n, 0.0);
    double wsum = 0;
    for (double x : w) wsum += x;
    if (wsum == 0) return out;
    for (std::size_t i = 0; i < m; ++i) {
        auto p = softmax(std::span<const double>(logits.data() + i * n, n));
        out.value -= w[i] * std::log(p[static_cast<std::size_t>(targets[i])]);
        for (std::size_t j = 0; j < n; ++j)
            out.grad[i * n + j] = w[i] * (p[j] - (static_cast<int>(j) == targets[i] ? 1.0 : 0.0)) / wsum;
    }
    out.value /= wsum;
    return out;
}

inline double entropy(std::span<const double> p) {
    double h = 0;
    for (double v : p)
        if (v > 0) h -= v * std::log(v);
    return h;
}

/// Small model configuration for fast tests.
inline bwarea::ModelConfig tiny_config() {
    bwarea::ModelConfig c;
    c.vocab_size = bwarea::Vocabulary::kSize;
    c.d_model = 16;
    c.d_code = 4;
    c.num_codes = 8;
    c.context_layers = 1;
    c.dynamics_layers = 1;
    c.inverse_layers = 1;
    c.policy_layers = 1;
    c.heads = 2;
    c.ffn_hidden = 24;
    c.max_context = 32;
    c.init_std = 0.3;
    return c;
}

inline std::vector<int> random_ids(std::size_t n, std::uint64_t seed, int lo = 'a', int hi = 'z') {
    bwarea::Rng rng(seed);
    std::vector<int> ids(n);
    for (auto& id : ids) id = lo + static_cast<int>(rng.index(static_cast<std::size_t>(hi - lo + 1)));
    return ids;
}

/// Spreads the codebook (standard normal entries) and amplifies the action
/// encoder so that an untrained world model's next token depends visibly on
/// the action. Freshly initialized codes sit within 1/N of the origin and
/// barely move the output.
template <typename T>
void make_action_sensitive(bwarea::WorldModel<T>& world, bwarea::InverseModel<T>& inverse, std::uint64_t seed,
                           double gain = 3.0) {
    bwarea::Rng rng(seed);
    auto book = inverse.codebook();
    for (auto& v : book.values()) v = static_cast<T>(rng.normal(0.0, 1.0));
    auto enc = world.params().get("world.action_encoder.weight");
    for (auto& v : enc.values()) v *= static_cast<T>(gain);
}

/// Central difference of a scalar function of one tensor element.
template <typename T, typename F>
double central_difference(bwarea::Tensor<T> param, std::size_t index, F&& f, double h = 1e-6) {
    const T saved = param.values()[index];
    param.values()[index] = saved + static_cast<T>(h);
    const double fp = f();
    param.values()[index] = saved - static_cast<T>(h);
    const double fm = f();
    param.values()[index] = saved;
    return (fp - fm) / (2 * h);
}

inline std::string data_path(const std::string& rel) { return std::string(BWAREA_DATA_DIR) + "/" + rel; }

}  // namespace oracle
