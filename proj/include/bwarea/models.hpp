// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "bwarea/layers.hpp"
#include "bwarea/quantize.hpp"

// The three networks of the latent-action decomposition plus the plain
// autoregressive baseline. All inputs are packed sequences: `ids` holds
// ids.size() / seq_len sequences of seq_len tokens each, and every output row
// lines up with one input position.
namespace bwarea {

template <typename T>
class WorldModel {
   public:
    /// Per-layer keys/values of the dynamics module for one sequence, plus the
    /// context-encoder output. Used to score alternative actions at a single
    /// position without re-running the prefix.
    struct Cache {
        Tensor<T> context;
        std::vector<LayerKV<T>> layers;
        std::size_t length = 0;
    };

    WorldModel(const ModelConfig& cfg, Rng& rng) : cfg_(cfg), params_("world"), embed_(params_, cfg, rng) {
        cfg_.validate();
        blocks_ = make_blocks(params_, 0, cfg.context_layers + cfg.dynamics_layers, cfg, rng);
        action_encoder_ = Linear<T>(params_, "action_encoder", cfg.d_code, cfg.d_model, cfg.init_std, rng);
        aggregate_ = Linear<T>(params_, "aggregate", 2 * cfg.d_model, cfg.d_model, cfg.init_std, rng);
        out_norm_ = params_.create_constant("out_norm", {1, cfg.d_model}, T(1));
        head_ = Linear<T>(params_, "head", cfg.d_model, cfg.vocab_size, cfg.init_std, rng);
    }

    WorldModel(WorldModel&&) noexcept = default;

    WorldModel clone() const {
        Rng rng(0);
        WorldModel copy(cfg_, rng);
        copy.params_.copy_values_from(params_);
        return copy;
    }

    const ModelConfig& config() const { return cfg_; }
    ParameterStore<T>& params() { return params_; }
    const ParameterStore<T>& params() const { return params_; }

    /// Context encoder output e^s for every position.
    Tensor<T> encode_context(std::span<const int> ids, std::size_t seq_len) const {
        auto h = embed_(ids, seq_len);
        for (std::size_t i = 0; i < cfg_.context_layers; ++i) h = blocks_[i].forward(h, seq_len);
        return h;
    }

    /// Action encoder: code-dimension vectors to model width.
    Tensor<T> encode_actions(const Tensor<T>& actions) const { return action_encoder_(actions); }

    /// Logits over the vocabulary for every position given per-position action
    /// vectors [rows, d_code] (straight-through vectors or code embeddings).
    Tensor<T> forward(std::span<const int> ids, std::size_t seq_len, const Tensor<T>& actions) const {
        return forward_impl(ids, seq_len, actions, nullptr);
    }

    /// Same as forward() with actions given as codebook indices.
    Tensor<T> forward_codes(std::span<const int> ids, std::size_t seq_len, std::span<const int> codes,
                            const Tensor<T>& codebook) const {
        check_action_count(ids.size(), codes.size());
        return forward(ids, seq_len, gather_rows(codebook, std::vector<int>(codes.begin(), codes.end())));
    }

    /// Runs one sequence and keeps what is needed by logits_at().
    Cache build_cache(std::span<const int> ids, const Tensor<T>& actions) const {
        NoGradGuard ng;
        Cache cache;
        cache.length = ids.size();
        forward_impl(ids, ids.size(), actions, &cache);
        return cache;
    }

    /// Logits [M, V] at `position` for M alternative action vectors, with all
    /// earlier positions fixed to the cached prefix.
    Tensor<T> logits_at(const Cache& cache, std::size_t position, const Tensor<T>& candidates) const {
        NoGradGuard ng;
        if (position >= cache.length) throw std::out_of_range("logits_at: position beyond cached sequence");
        const std::size_t m = candidates.rows();
        auto ctx = gather_rows(cache.context, std::vector<int>(m, static_cast<int>(position)));
        auto h = aggregate_(concat_cols(ctx, encode_actions(candidates)));
        for (std::size_t l = 0; l < cfg_.dynamics_layers; ++l)
            h = blocks_[cfg_.context_layers + l].forward_after_prefix(h, cache.layers[l], position);
        return head_(rms_norm(h, out_norm_));
    }

   private:
    void check_action_count(std::size_t tokens, std::size_t actions) const {
        if (tokens != actions)
            throw ContractError("world model needs one action per position: " + std::to_string(tokens) + " tokens, " +
                                std::to_string(actions) + " actions");
    }

    Tensor<T> forward_impl(std::span<const int> ids, std::size_t seq_len, const Tensor<T>& actions,
                           Cache* cache) const {
        check_action_count(ids.size(), actions.rows());
        if (actions.cols() != cfg_.d_code) throw DimensionError("action vectors must have d_code columns");
        auto ctx = encode_context(ids, seq_len);
        auto h = aggregate_(concat_cols(ctx, encode_actions(actions)));
        if (cache) {
            cache->context = ctx;
            cache->layers.resize(cfg_.dynamics_layers);
        }
        for (std::size_t l = 0; l < cfg_.dynamics_layers; ++l)
            h = blocks_[cfg_.context_layers + l].forward(h, seq_len, cache ? &cache->layers[l] : nullptr);
        return head_(rms_norm(h, out_norm_));
    }

    ModelConfig cfg_;
    ParameterStore<T> params_;
    Embedding<T> embed_;
    std::vector<TransformerBlock<T>> blocks_;
    Linear<T> action_encoder_, aggregate_, head_;
    Tensor<T> out_norm_;
};

template <typename T>
class InverseModel {
   public:
    InverseModel(const ModelConfig& cfg, Rng& rng) : cfg_(cfg), params_("inverse"), embed_(params_, cfg, rng) {
        cfg_.validate();
        blocks_ = make_blocks(params_, 0, cfg.inverse_layers, cfg, rng);
        out_norm_ = params_.create_constant("out_norm", {1, cfg.d_model}, T(1));
        compressor_ = Linear<T>(params_, "compressor", cfg.d_model, cfg.d_code, cfg.init_std, rng);
        const double bound = 1.0 / static_cast<double>(cfg.num_codes);
        codebook_ = params_.create_uniform("codebook", {cfg.num_codes, cfg.d_code}, -bound, bound, rng);
    }

    InverseModel(InverseModel&&) noexcept = default;

    InverseModel clone() const {
        Rng rng(0);
        InverseModel copy(cfg_, rng);
        copy.params_.copy_values_from(params_);
        return copy;
    }

    const ModelConfig& config() const { return cfg_; }
    ParameterStore<T>& params() { return params_; }
    const ParameterStore<T>& params() const { return params_; }
    const Tensor<T>& codebook() const { return codebook_; }

    /// Hindsight embeddings e_1..e_{L-1} for each sequence of length L: row
    /// (b, i) has seen tokens 1..i+1 of sequence b. Output rows: B*(L-1).
    Tensor<T> encode(std::span<const int> ids, std::size_t seq_len) const {
        if (seq_len == 0 || ids.size() % seq_len != 0) throw DimensionError("inverse encode: ragged batch");
        const std::size_t nseq = ids.size() / seq_len;
        if (seq_len < 2) return Tensor<T>::zeros({0, cfg_.d_code});
        auto h = embed_(ids, seq_len);
        for (const auto& b : blocks_) h = b.forward(h, seq_len);
        std::vector<int> rows;
        rows.reserve(nseq * (seq_len - 1));
        for (std::size_t s = 0; s < nseq; ++s)
            for (std::size_t i = 1; i < seq_len; ++i) rows.push_back(static_cast<int>(s * seq_len + i));
        return compressor_(rms_norm(gather_rows(h, std::move(rows)), out_norm_));
    }

    /// Hindsight action indices (no gradient), B*(L-1) entries.
    std::vector<int> actions(std::span<const int> ids, std::size_t seq_len) const {
        NoGradGuard ng;
        auto e = encode(ids, seq_len);
        std::vector<int> out(e.rows());
        for (std::size_t i = 0; i < e.rows(); ++i)
            out[i] = nearest_code<T>(e.values().subspan(i * cfg_.d_code, cfg_.d_code), codebook_);
        return out;
    }

   private:
    ModelConfig cfg_;
    ParameterStore<T> params_;
    Embedding<T> embed_;
    std::vector<TransformerBlock<T>> blocks_;
    Tensor<T> out_norm_;
    Linear<T> compressor_;
    Tensor<T> codebook_;
};

/// Causal stack with a linear head; shared shape for the policy (head over
/// codes) and the baseline language model (head over the vocabulary).
template <typename T>
class CausalLm {
   public:
    CausalLm(const ModelConfig& cfg, Rng& rng, std::string prefix, std::size_t layers, std::size_t outputs)
        : cfg_(cfg), params_(std::move(prefix)), embed_(params_, cfg, rng) {
        cfg_.validate();
        blocks_ = make_blocks(params_, 0, layers, cfg, rng);
        out_norm_ = params_.create_constant("out_norm", {1, cfg.d_model}, T(1));
        head_ = Linear<T>(params_, "head", cfg.d_model, outputs, cfg.init_std, rng);
    }

    CausalLm(CausalLm&&) noexcept = default;

    const ModelConfig& config() const { return cfg_; }
    ParameterStore<T>& params() { return params_; }
    const ParameterStore<T>& params() const { return params_; }

    Tensor<T> forward(std::span<const int> ids, std::size_t seq_len) const {
        auto h = embed_(ids, seq_len);
        for (const auto& b : blocks_) h = b.forward(h, seq_len);
        return head_(rms_norm(h, out_norm_));
    }

   protected:
    ModelConfig cfg_;
    ParameterStore<T> params_;
    Embedding<T> embed_;
    std::vector<TransformerBlock<T>> blocks_;
    Tensor<T> out_norm_;
    Linear<T> head_;
};

/// Cognitive policy: a categorical distribution over the codes at every
/// position, conditioned on tokens only.
template <typename T>
class PolicyModel : public CausalLm<T> {
   public:
    PolicyModel(const ModelConfig& cfg, Rng& rng)
        : CausalLm<T>(cfg, rng, "policy", cfg.policy_layers, cfg.num_codes) {}

    PolicyModel clone() const {
        Rng rng(0);
        PolicyModel copy(this->cfg_, rng);
        copy.params_.copy_values_from(this->params_);
        return copy;
    }
};

/// Plain next-token model with the world model's depth and width.
template <typename T>
class BaselineModel : public CausalLm<T> {
   public:
    BaselineModel(const ModelConfig& cfg, Rng& rng)
        : CausalLm<T>(cfg, rng, "baseline", cfg.context_layers + cfg.dynamics_layers, cfg.vocab_size) {}

    BaselineModel clone() const {
        Rng rng(0);
        BaselineModel copy(this->cfg_, rng);
        copy.params_.copy_values_from(this->params_);
        return copy;
    }
};

}  // namespace bwarea
