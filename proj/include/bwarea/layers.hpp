// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bwarea/ops.hpp"
#include "bwarea/optimizer.hpp"

namespace bwarea {

/// Architecture hyperparameters shared by all four networks. Recorded in
/// every checkpoint.
struct ModelConfig {
    std::size_t vocab_size = 259;  // 256 bytes + pad, begin, end
    std::size_t d_model = 128;
    std::size_t d_code = 16;
    std::size_t num_codes = 64;
    std::size_t context_layers = 2;
    std::size_t dynamics_layers = 2;
    std::size_t inverse_layers = 2;
    std::size_t policy_layers = 4;
    std::size_t heads = 4;
    std::size_t ffn_hidden = 256;
    std::size_t max_context = 256;
    double init_std = 0.02;

    bool operator==(const ModelConfig&) const = default;

    void validate() const {
        if (num_codes < 2) throw std::invalid_argument("codebook needs at least 2 codes");
        if (heads == 0 || d_model % heads != 0) throw std::invalid_argument("d_model must be divisible by heads");
        if (context_layers != dynamics_layers)
            throw std::invalid_argument("context encoder and dynamics module must have equal depth");
        if (vocab_size == 0 || d_code == 0 || max_context == 0 || ffn_hidden == 0)
            throw std::invalid_argument("model dimensions must be positive");
    }
};

class ContextLengthError : public std::length_error {
   public:
    using std::length_error::length_error;
};

template <typename T>
struct Linear {
    Tensor<T> weight;  // [in, out]
    Tensor<T> bias;    // [1, out]; undefined when the layer has no bias

    Linear() = default;
    Linear(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out, double stddev,
           Rng& rng, bool with_bias = true) {
        weight = store.create_normal(name + ".weight", {in, out}, stddev, rng);
        if (with_bias) bias = store.create(name + ".bias", {1, out});
    }

    Tensor<T> operator()(const Tensor<T>& x) const {
        auto y = matmul(x, weight);
        return bias.defined() ? add_bias(y, bias) : y;
    }
};

/// Keys and values produced by one attention layer, kept for incremental
/// scoring of alternative inputs at a single position.
template <typename T>
struct LayerKV {
    Tensor<T> keys;
    Tensor<T> values;
};

/// Pre-norm transformer block: RMS norm, causal multi-head attention,
/// residual; RMS norm, SwiGLU feed-forward, residual.
template <typename T>
class TransformerBlock {
   public:
    TransformerBlock(ParameterStore<T>& store, const std::string& name, const ModelConfig& cfg, Rng& rng)
        : heads_(cfg.heads) {
        const std::size_t d = cfg.d_model, f = cfg.ffn_hidden;
        attn_norm_ = store.create_constant(name + ".attn_norm", {1, d}, T(1));
        wq_ = Linear<T>(store, name + ".wq", d, d, cfg.init_std, rng, false);
        wk_ = Linear<T>(store, name + ".wk", d, d, cfg.init_std, rng, false);
        wv_ = Linear<T>(store, name + ".wv", d, d, cfg.init_std, rng, false);
        wo_ = Linear<T>(store, name + ".wo", d, d, cfg.init_std, rng, false);
        ffn_norm_ = store.create_constant(name + ".ffn_norm", {1, d}, T(1));
        w_gate_ = Linear<T>(store, name + ".w_gate", d, f, cfg.init_std, rng, false);
        w_up_ = Linear<T>(store, name + ".w_up", d, f, cfg.init_std, rng, false);
        w_down_ = Linear<T>(store, name + ".w_down", f, d, cfg.init_std, rng, false);
    }

    Tensor<T> forward(const Tensor<T>& x, std::size_t seq_len, LayerKV<T>* kv = nullptr) const {
        auto n = rms_norm(x, attn_norm_);
        auto q = wq_(n), k = wk_(n), v = wv_(n);
        if (kv) *kv = {k, v};
        auto h = add(x, wo_(causal_attention(q, k, v, heads_, seq_len)));
        return add(h, feed_forward(h));
    }

    /// Runs M candidate rows that all sit at the position right after a cached
    /// prefix (no gradient). Each candidate attends to the prefix and itself.
    Tensor<T> forward_after_prefix(const Tensor<T>& x, const LayerKV<T>& prefix, std::size_t prefix_len) const {
        NoGradGuard ng;
        auto n = rms_norm(x, attn_norm_);
        auto q = wq_(n), k = wk_(n), v = wv_(n);
        auto h = add(x, wo_(attend_after_prefix(q, k, v, prefix, prefix_len)));
        return add(h, feed_forward(h));
    }

   private:
    Tensor<T> feed_forward(const Tensor<T>& h) const {
        auto n = rms_norm(h, ffn_norm_);
        return w_down_(mul(silu(w_gate_(n)), w_up_(n)));
    }

    Tensor<T> attend_after_prefix(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                  const LayerKV<T>& prefix, std::size_t prefix_len) const {
        const std::size_t m = q.rows(), d = q.cols(), hd = d / heads_;
        const T scale = T(1) / std::sqrt(T(hd));
        std::vector<T> out(m * d, T(0));
        std::vector<T> scores(prefix_len + 1);
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t h = 0; h < heads_; ++h) {
                const T* qr = q.data() + r * d + h * hd;
                auto dot = [&](const T* row) {
                    T s = 0;
                    for (std::size_t c = 0; c < hd; ++c) s += qr[c] * row[c];
                    return s * scale;
                };
                for (std::size_t j = 0; j < prefix_len; ++j) scores[j] = dot(prefix.keys.data() + j * d + h * hd);
                scores[prefix_len] = dot(k.data() + r * d + h * hd);
                const T mx = *std::max_element(scores.begin(), scores.end());
                T z = 0;
                for (auto& s : scores) z += (s = std::exp(s - mx));
                T* o = out.data() + r * d + h * hd;
                for (std::size_t j = 0; j <= prefix_len; ++j) {
                    const T* vr = j < prefix_len ? prefix.values.data() + j * d + h * hd : v.data() + r * d + h * hd;
                    const T p = scores[j] / z;
                    for (std::size_t c = 0; c < hd; ++c) o[c] += p * vr[c];
                }
            }
        }
        return Tensor<T>::from({m, d}, std::move(out));
    }

    std::size_t heads_;
    Tensor<T> attn_norm_, ffn_norm_;
    Linear<T> wq_, wk_, wv_, wo_, w_gate_, w_up_, w_down_;
};

/// Token plus learned absolute position embeddings for packed sequences.
template <typename T>
class Embedding {
   public:
    Embedding(ParameterStore<T>& store, const ModelConfig& cfg, Rng& rng)
        : vocab_(cfg.vocab_size), max_context_(cfg.max_context) {
        tokens_ = store.create_normal("tok_emb", {cfg.vocab_size, cfg.d_model}, cfg.init_std, rng);
        positions_ = store.create_normal("pos_emb", {cfg.max_context, cfg.d_model}, cfg.init_std, rng);
    }

    Tensor<T> operator()(std::span<const int> ids, std::size_t seq_len) const {
        if (seq_len == 0 || ids.size() % seq_len != 0)
            throw DimensionError("token count " + std::to_string(ids.size()) + " is not a multiple of sequence length " +
                                 std::to_string(seq_len));
        if (seq_len > max_context_)
            throw ContextLengthError("sequence length " + std::to_string(seq_len) + " exceeds max context " +
                                     std::to_string(max_context_));
        std::vector<int> pos(ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) pos[i] = static_cast<int>(i % seq_len);
        return add(gather_rows(tokens_, std::vector<int>(ids.begin(), ids.end())), gather_rows(positions_, pos));
    }

   private:
    std::size_t vocab_, max_context_;
    Tensor<T> tokens_, positions_;
};

template <typename T>
std::vector<TransformerBlock<T>> make_blocks(ParameterStore<T>& store, std::size_t first, std::size_t count,
                                             const ModelConfig& cfg, Rng& rng) {
    std::vector<TransformerBlock<T>> blocks;
    for (std::size_t i = first; i < first + count; ++i)
        blocks.emplace_back(store, "blocks." + std::to_string(i), cfg, rng);
    return blocks;
}

}  // namespace bwarea
