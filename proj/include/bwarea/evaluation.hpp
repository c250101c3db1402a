// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bwarea/data.hpp"
#include "bwarea/generation.hpp"
#include "bwarea/models.hpp"
#include "bwarea/training.hpp"

namespace bwarea {

/// Held-out metrics. Entropies and cross-entropies are in nats per token.
struct EvalReport {
    std::size_t tokens = 0;
    double cross_entropy = 0, perplexity = 1, accuracy = 0;
    double world_entropy = 0;
    double baseline_cross_entropy = 0, baseline_perplexity = 1, baseline_accuracy = 0, baseline_entropy = 0;
    double marginal_ce = 0, expected_ce = 0;
    double code_usage_entropy = 0;
    std::size_t distinct_codes = 0;

    bool operator==(const EvalReport&) const = default;

    bool finite() const {
        for (double v : {cross_entropy, perplexity, accuracy, world_entropy, baseline_cross_entropy,
                         baseline_perplexity, baseline_accuracy, baseline_entropy, marginal_ce, expected_ce,
                         code_usage_entropy})
            if (!std::isfinite(v)) return false;
        return true;
    }

    nlohmann::json to_json() const {
        return {{"tokens", tokens},
                {"cross_entropy", cross_entropy},
                {"perplexity", perplexity},
                {"accuracy", accuracy},
                {"world_entropy", world_entropy},
                {"baseline_cross_entropy", baseline_cross_entropy},
                {"baseline_perplexity", baseline_perplexity},
                {"baseline_accuracy", baseline_accuracy},
                {"baseline_entropy", baseline_entropy},
                {"marginal_ce", marginal_ce},
                {"expected_ce", expected_ce},
                {"code_usage_entropy", code_usage_entropy},
                {"distinct_codes", distinct_codes}};
    }

    static EvalReport from_json(const nlohmann::json& j) {
        EvalReport r;
        j.at("tokens").get_to(r.tokens);
        j.at("cross_entropy").get_to(r.cross_entropy);
        j.at("perplexity").get_to(r.perplexity);
        j.at("accuracy").get_to(r.accuracy);
        j.at("world_entropy").get_to(r.world_entropy);
        j.at("baseline_cross_entropy").get_to(r.baseline_cross_entropy);
        j.at("baseline_perplexity").get_to(r.baseline_perplexity);
        j.at("baseline_accuracy").get_to(r.baseline_accuracy);
        j.at("baseline_entropy").get_to(r.baseline_entropy);
        j.at("marginal_ce").get_to(r.marginal_ce);
        j.at("expected_ce").get_to(r.expected_ce);
        j.at("code_usage_entropy").get_to(r.code_usage_entropy);
        j.at("distinct_codes").get_to(r.distinct_codes);
        return r;
    }

    std::string to_table() const {
        std::ostringstream out;
        out << std::fixed << std::setprecision(4);
        auto row = [&](const char* name, double v) { out << std::left << std::setw(26) << name << v << "\n"; };
        out << std::left << std::setw(26) << "tokens" << tokens << "\n";
        row("cross_entropy", cross_entropy);
        row("perplexity", perplexity);
        row("accuracy", accuracy);
        row("world_entropy", world_entropy);
        row("baseline_cross_entropy", baseline_cross_entropy);
        row("baseline_perplexity", baseline_perplexity);
        row("baseline_accuracy", baseline_accuracy);
        row("baseline_entropy", baseline_entropy);
        row("marginal_ce", marginal_ce);
        row("expected_ce", expected_ce);
        row("code_usage_entropy", code_usage_entropy);
        out << std::left << std::setw(26) << "distinct_codes" << distinct_codes << "\n";
        return out.str();
    }
};

/// Running sums of per-row statistics of a logits matrix against targets.
struct RowStats {
    double nll = 0, entropy = 0;
    std::size_t correct = 0, count = 0;

    template <typename T>
    void add(const Tensor<T>& logits, std::span<const int> targets) {
        const std::size_t v = logits.cols();
        for (std::size_t i = 0; i < logits.rows(); ++i) {
            const auto lp = log_softmax_row(logits.values().subspan(i * v, v));
            nll -= lp[static_cast<std::size_t>(targets[i])];
            double h = 0;
            for (double l : lp) h -= std::exp(l) * l;
            entropy += h;
            if (argmax(lp) == static_cast<std::size_t>(targets[i])) ++correct;
            ++count;
        }
    }

    double mean_nll() const { return count ? nll / static_cast<double>(count) : 0.0; }
    double mean_entropy() const { return count ? entropy / static_cast<double>(count) : 0.0; }
    double accuracy() const { return count ? static_cast<double>(correct) / static_cast<double>(count) : 0.0; }
};

/// Non-overlapping evaluation segments of the held-out stream, in order. A
/// stream shorter than seq_len becomes one shorter segment.
inline std::vector<TokenBatch> eval_batches(std::span<const int> heldout, std::size_t seq_len, std::size_t batch,
                                            std::size_t max_segments = 0) {
    if (heldout.size() < 2) throw ContractError("held-out set needs at least two tokens");
    std::vector<TokenBatch> out;
    if (heldout.size() < seq_len) {
        out.push_back({1, heldout.size(), std::vector<int>(heldout.begin(), heldout.end())});
        return out;
    }
    auto starts = window_starts(heldout.size(), seq_len);
    if (max_segments && starts.size() > max_segments) starts.resize(max_segments);
    for (std::size_t i = 0; i < starts.size(); i += batch) {
        TokenBatch b;
        b.seq_len = seq_len;
        b.batch = std::min(batch, starts.size() - i);
        for (std::size_t j = 0; j < b.batch; ++j)
            b.tokens.insert(b.tokens.end(), heldout.begin() + static_cast<std::ptrdiff_t>(starts[i + j]),
                            heldout.begin() + static_cast<std::ptrdiff_t>(starts[i + j] + seq_len));
        out.push_back(std::move(b));
    }
    return out;
}

struct EvalOptions {
    std::size_t seq_len = 128;
    std::size_t batch = 16;
    std::size_t max_segments = 0;  // 0 = all
};

/// Teacher-forced world-model metrics given hindsight actions of the frozen
/// inverse model. Also fills the code-usage statistics.
template <typename T>
EvalReport eval_world(const WorldModel<T>& world, const InverseModel<T>& inverse, std::span<const int> heldout,
                      const EvalOptions& opts = {}) {
    NoGradGuard ng;
    RowStats stats;
    std::vector<std::uint64_t> hist(inverse.config().num_codes, 0);
    for (const auto& b : eval_batches(heldout, opts.seq_len, opts.batch, opts.max_segments)) {
        const auto codes = inverse.actions(b.tokens, b.seq_len);
        for (int c : codes) ++hist[static_cast<std::size_t>(c)];
        const auto [inputs, targets] = shift_batch(b);
        stats.add(world.forward_codes(inputs, b.seq_len - 1, codes, inverse.codebook()), targets);
    }
    EvalReport r;
    r.tokens = stats.count;
    r.cross_entropy = stats.mean_nll();
    r.perplexity = std::exp(r.cross_entropy);
    r.accuracy = stats.accuracy();
    r.world_entropy = stats.mean_entropy();
    double total = 0;
    for (auto h : hist) total += static_cast<double>(h);
    for (auto h : hist) {
        if (!h) continue;
        ++r.distinct_codes;
        const double p = static_cast<double>(h) / total;
        r.code_usage_entropy -= p * std::log(p);
    }
    return r;
}

template <typename T>
RowStats eval_baseline_stats(const BaselineModel<T>& model, std::span<const int> heldout, const EvalOptions& opts) {
    NoGradGuard ng;
    RowStats stats;
    for (const auto& b : eval_batches(heldout, opts.seq_len, opts.batch, opts.max_segments)) {
        const auto [inputs, targets] = shift_batch(b);
        stats.add(model.forward(inputs, b.seq_len - 1), targets);
    }
    return stats;
}

/// Baseline-only metrics, reported in the primary fields.
template <typename T>
EvalReport eval_baseline(const BaselineModel<T>& model, std::span<const int> heldout, const EvalOptions& opts = {}) {
    const auto s = eval_baseline_stats(model, heldout, opts);
    EvalReport r;
    r.tokens = s.count;
    r.cross_entropy = r.baseline_cross_entropy = s.mean_nll();
    r.perplexity = r.baseline_perplexity = std::exp(r.cross_entropy);
    r.accuracy = r.baseline_accuracy = s.accuracy();
    r.baseline_entropy = s.mean_entropy();
    return r;
}

/// Combined report for the latent-action model and (optionally) the baseline.
template <typename T>
EvalReport eval_lm(const WorldModel<T>& world, const InverseModel<T>& inverse, const BaselineModel<T>* baseline,
                   std::span<const int> heldout, const EvalOptions& opts = {}) {
    auto r = eval_world(world, inverse, heldout, opts);
    if (baseline) {
        const auto s = eval_baseline_stats(*baseline, heldout, opts);
        r.baseline_cross_entropy = s.mean_nll();
        r.baseline_perplexity = std::exp(r.baseline_cross_entropy);
        r.baseline_accuracy = s.accuracy();
        r.baseline_entropy = s.mean_entropy();
    }
    return r;
}

/// Mean per-position entropy of the world model under hindsight actions and
/// of the baseline, in nats.
template <typename T>
std::pair<double, double> entropy_comparison(const WorldModel<T>& world, const InverseModel<T>& inverse,
                                             const BaselineModel<T>& baseline, std::span<const int> heldout,
                                             const EvalOptions& opts = {}) {
    const auto r = eval_lm(world, inverse, &baseline, heldout, opts);
    return {r.world_entropy, r.baseline_entropy};
}

/// Shannon entropy of a log-probability row.
inline double row_entropy(std::span<const double> logprobs) {
    double h = 0;
    for (double l : logprobs) h -= std::exp(l) * l;
    return h;
}

/// Action distribution provider: given one sequence, returns per-position
/// probabilities over the N codes, row-major [len, N].
using ActionDistribution = std::function<std::vector<double>(std::span<const int> ids)>;

template <typename T>
ActionDistribution policy_distribution(const PolicyModel<T>& policy) {
    return [&policy](std::span<const int> ids) {
        NoGradGuard ng;
        auto logits = policy.forward(ids, ids.size());
        const std::size_t n = logits.cols();
        std::vector<double> out;
        out.reserve(logits.rows() * n);
        for (std::size_t i = 0; i < logits.rows(); ++i)
            for (double l : log_softmax_row(logits.values().subspan(i * n, n))) out.push_back(std::exp(l));
        return out;
    };
}

struct MixtureCe {
    double marginal = 0;  // CE with the argmax action fed to the world model
    double expected = 0;  // CE of the exact mixture over all N actions
    std::size_t positions = 0;
};

/// Marginal vs expected cross-entropy over held-out segments. Earlier
/// positions use the argmax actions; at each position the next-token
/// distribution is scored under the argmax action and under the exact
/// mixture sum_a pi(a) p(x | a) over every code.
template <typename T>
MixtureCe marginal_vs_expected_ce(const WorldModel<T>& world, const Tensor<T>& codebook,
                                  const ActionDistribution& action_probs, std::span<const int> heldout,
                                  const EvalOptions& opts = {}) {
    NoGradGuard ng;
    const std::size_t n = codebook.rows();
    MixtureCe out;
    for (const auto& b : eval_batches(heldout, opts.seq_len, 1, opts.max_segments)) {
        const std::vector<int> inputs(b.tokens.begin(), b.tokens.end() - 1);
        const std::vector<int> targets(b.tokens.begin() + 1, b.tokens.end());
        const auto probs = action_probs(inputs);
        std::vector<int> best(inputs.size());
        for (std::size_t t = 0; t < inputs.size(); ++t)
            best[t] = static_cast<int>(
                argmax(std::span<const double>(probs.data() + t * n, n)));
        auto cache = world.build_cache(inputs, gather_rows(codebook, best));
        for (std::size_t t = 0; t < inputs.size(); ++t) {
            auto logits = world.logits_at(cache, t, codebook);  // [N, V]
            const std::size_t v = logits.cols();
            const auto tg = static_cast<std::size_t>(targets[t]);
            double mix = 0;
            for (std::size_t a = 0; a < n; ++a) {
                const double pa = probs[t * n + a];
                if (pa == 0.0) continue;
                mix += pa * std::exp(log_softmax_row(logits.values().subspan(a * v, v))[tg]);
            }
            out.expected -= std::log(mix);
            const auto bi = static_cast<std::size_t>(best[t]);
            out.marginal -= log_softmax_row(logits.values().subspan(bi * v, v))[tg];
            ++out.positions;
        }
    }
    if (out.positions) {
        out.marginal /= static_cast<double>(out.positions);
        out.expected /= static_cast<double>(out.positions);
    }
    return out;
}

template <typename T>
MixtureCe marginal_vs_expected_ce(const WorldModel<T>& world, const InverseModel<T>& inverse,
                                  const PolicyModel<T>& policy, std::span<const int> heldout,
                                  const EvalOptions& opts = {}) {
    return marginal_vs_expected_ce(world, inverse.codebook(), policy_distribution(policy), heldout, opts);
}

// ------------------------------------------------------------ dirty tokens

struct DirtyTokenConfig {
    double rate = 0.1;
    std::size_t steps = 100;
    std::size_t batch_size = 8;
    std::size_t seq_len = 128;
    double lr = 1e-4;
    std::uint64_t seed = 1;
    EvalOptions eval;

    void validate() const {
        if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("corruption rate must lie in [0, 1]");
        if (!(lr > 0)) throw std::invalid_argument("learning rate must be positive");
    }
};

struct DirtyTokenRecord {
    double ce_before_bwarea = 0, ce_after_bwarea = 0, delta_bwarea = 0;
    double ce_before_baseline = 0, ce_after_baseline = 0, delta_baseline = 0;
    double comparison = 0;  // delta_baseline - delta_bwarea
    bool inverse_unchanged = true;

    nlohmann::json to_json() const {
        return {{"ce_before_bwarea", ce_before_bwarea},     {"ce_after_bwarea", ce_after_bwarea},
                {"delta_bwarea", delta_bwarea},             {"ce_before_baseline", ce_before_baseline},
                {"ce_after_baseline", ce_after_baseline},   {"delta_baseline", delta_baseline},
                {"comparison", comparison},                 {"inverse_unchanged", inverse_unchanged}};
    }
};

/// Fine-tunes copies of the world model (inverse frozen, prediction loss
/// only) and of the baseline on corrupted batches of `train`, and reports
/// the change in clean held-out cross-entropy for each arm.
template <typename T>
DirtyTokenRecord dirty_token_experiment(const WorldModel<T>& world, const InverseModel<T>& inverse,
                                        const BaselineModel<T>& baseline, std::span<const int> train,
                                        std::span<const int> heldout, const DirtyTokenConfig& cfg) {
    cfg.validate();
    DirtyTokenRecord rec;
    auto w = world.clone();
    auto bl = baseline.clone();
    const auto inverse_sum = inverse.params().checksum();
    rec.ce_before_bwarea = eval_world(w, inverse, heldout, cfg.eval).cross_entropy;
    rec.ce_before_baseline = eval_baseline(bl, heldout, cfg.eval).cross_entropy;

    Adam<T> wopt(AdamConfig{cfg.lr}), bopt(AdamConfig{cfg.lr});
    TrainConfig tc;
    BatchStream stream(std::vector<int>(train.begin(), train.end()), cfg.seq_len, cfg.batch_size, cfg.seed);
    for (std::size_t s = 0; s < cfg.steps; ++s) {
        const auto dirty = corrupt_tokens(stream.next(), cfg.rate, cfg.seed * 1000003ULL + s);
        {
            const auto codes = inverse.actions(dirty.tokens, dirty.seq_len);
            const auto [inputs, targets] = shift_batch(dirty);
            w.params().zero_grad();
            std::vector<T> ones(targets.size(), T(1));
            auto loss = softmax_cross_entropy<T>(w.forward_codes(inputs, dirty.seq_len - 1, codes, inverse.codebook()),
                                                 targets, ones);
            backward(loss);
            StoreList<T> stores{&w.params()};
            clip_grad_norm(stores, tc.clip_norm);
            wopt.step(stores);
        }
        baseline_step(dirty, bl, bopt, tc);
    }
    rec.inverse_unchanged = inverse.params().checksum() == inverse_sum;
    rec.ce_after_bwarea = eval_world(w, inverse, heldout, cfg.eval).cross_entropy;
    rec.ce_after_baseline = eval_baseline(bl, heldout, cfg.eval).cross_entropy;
    rec.delta_bwarea = rec.ce_after_bwarea - rec.ce_before_bwarea;
    rec.delta_baseline = rec.ce_after_baseline - rec.ce_before_baseline;
    rec.comparison = rec.delta_baseline - rec.delta_bwarea;
    return rec;
}

}  // namespace bwarea
