// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bwarea/data.hpp"
#include "bwarea/generation.hpp"
#include "bwarea/models.hpp"
#include "bwarea/optimizer.hpp"
#include "bwarea/quantize.hpp"

namespace bwarea {

struct TrainConfig {
    std::size_t steps = 200;
    std::size_t epochs = 2;
    std::size_t batch_size = 16;
    std::size_t seq_len = 128;
    std::size_t sft_max_len = 64;
    double lr_world = 4e-4;   // world + inverse (step 1)
    double lr_policy = 1e-4;  // behavior cloning (step 2)
    double lr_baseline = 4e-4;
    double lr_rl = 5e-5;
    double beta = 0.25;
    double lambda_c = 25.0;
    double clip_norm = 1.0;
    std::size_t dead_code_steps = 0;  // 0 disables re-seeding
    double kl_coef = 0.0;
    double temperature = 1.0;
    std::size_t max_gen = 64;
    std::uint64_t seed = 1;

    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0) || !std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be positive");
        };
        positive(beta, "beta");
        positive(lambda_c, "lambda_c");
        positive(lr_world, "lr_world");
        positive(lr_policy, "lr_policy");
        positive(lr_baseline, "lr_baseline");
        positive(lr_rl, "lr_rl");
        positive(temperature, "temperature");
        if (batch_size == 0 || seq_len < 2) throw std::invalid_argument("batch_size must be positive and seq_len >= 2");
        if (kl_coef < 0) throw std::invalid_argument("kl_coef must be non-negative");
    }

    bool operator==(const TrainConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"steps", c.steps},         {"epochs", c.epochs},          {"batch_size", c.batch_size},
         {"seq_len", c.seq_len},     {"sft_max_len", c.sft_max_len}, {"lr_world", c.lr_world},
         {"lr_policy", c.lr_policy}, {"lr_baseline", c.lr_baseline}, {"lr_rl", c.lr_rl},
         {"beta", c.beta},           {"lambda_c", c.lambda_c},      {"clip_norm", c.clip_norm},
         {"dead_code_steps", c.dead_code_steps}, {"kl_coef", c.kl_coef}, {"temperature", c.temperature},
         {"max_gen", c.max_gen},     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    TrainConfig d;
    c.steps = j.value("steps", d.steps);
    c.epochs = j.value("epochs", d.epochs);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.seq_len = j.value("seq_len", d.seq_len);
    c.sft_max_len = j.value("sft_max_len", d.sft_max_len);
    c.lr_world = j.value("lr_world", d.lr_world);
    c.lr_policy = j.value("lr_policy", d.lr_policy);
    c.lr_baseline = j.value("lr_baseline", d.lr_baseline);
    c.lr_rl = j.value("lr_rl", d.lr_rl);
    c.beta = j.value("beta", d.beta);
    c.lambda_c = j.value("lambda_c", d.lambda_c);
    c.clip_norm = j.value("clip_norm", d.clip_norm);
    c.dead_code_steps = j.value("dead_code_steps", d.dead_code_steps);
    c.kl_coef = j.value("kl_coef", d.kl_coef);
    c.temperature = j.value("temperature", d.temperature);
    c.max_gen = j.value("max_gen", d.max_gen);
    c.seed = j.value("seed", d.seed);
}

/// Per-step record written to the run log.
struct LossReport {
    std::string stage;
    std::uint64_t step = 0;
    double predict = 0, commitment = 0, codebook = 0, policy_bc = 0, rl_objective = 0, total = 0;
    double grad_norm = 0;
    std::vector<std::uint64_t> code_histogram;
    double reward_sampled = 0, reward_greedy = 0;
    std::size_t episodes = 0, dropped_episodes = 0;
    bool skipped = false;
    std::vector<std::string> events;

    bool operator==(const LossReport&) const = default;

    bool finite() const {
        for (double v : {predict, commitment, codebook, policy_bc, rl_objective, total, grad_norm, reward_sampled,
                         reward_greedy})
            if (!std::isfinite(v)) return false;
        return true;
    }

    nlohmann::json to_json() const {
        return {{"stage", stage},
                {"step", step},
                {"predict", predict},
                {"commitment", commitment},
                {"codebook", codebook},
                {"policy_bc", policy_bc},
                {"rl_objective", rl_objective},
                {"total", total},
                {"grad_norm", grad_norm},
                {"code_histogram", code_histogram},
                {"reward_sampled", reward_sampled},
                {"reward_greedy", reward_greedy},
                {"episodes", episodes},
                {"dropped_episodes", dropped_episodes},
                {"skipped", skipped},
                {"events", events}};
    }

    static LossReport from_json(const nlohmann::json& j) {
        LossReport r;
        j.at("stage").get_to(r.stage);
        j.at("step").get_to(r.step);
        j.at("predict").get_to(r.predict);
        j.at("commitment").get_to(r.commitment);
        j.at("codebook").get_to(r.codebook);
        j.at("policy_bc").get_to(r.policy_bc);
        j.at("rl_objective").get_to(r.rl_objective);
        j.at("total").get_to(r.total);
        j.at("grad_norm").get_to(r.grad_norm);
        j.at("code_histogram").get_to(r.code_histogram);
        j.at("reward_sampled").get_to(r.reward_sampled);
        j.at("reward_greedy").get_to(r.reward_greedy);
        j.at("episodes").get_to(r.episodes);
        j.at("dropped_episodes").get_to(r.dropped_episodes);
        j.at("skipped").get_to(r.skipped);
        j.at("events").get_to(r.events);
        return r;
    }
};

/// Tracks when each code was last selected, for optional dead-code re-seeding.
struct CodeUsage {
    std::vector<std::uint64_t> last_used;
    std::uint64_t step = 0;
};

// ------------------------------------------------------------- objectives

/// Per-row weights for next-token prediction rows: row (b, i) predicts token
/// i+1 and takes that token's mask value. Empty mask means all ones.
template <typename T>
std::vector<T> shifted_weights(const TokenBatch& batch, std::span<const float> token_mask) {
    const std::size_t L = batch.seq_len;
    std::vector<T> w(batch.batch * (L - 1), T(1));
    if (token_mask.empty()) return w;
    if (token_mask.size() != batch.tokens.size()) throw DimensionError("token mask must cover every batch position");
    for (std::size_t b = 0; b < batch.batch; ++b)
        for (std::size_t i = 0; i + 1 < L; ++i) w[b * (L - 1) + i] = static_cast<T>(token_mask[b * L + i + 1]);
    return w;
}

/// Inputs x_{1..L-1} and targets x_{2..L} of every row, packed.
inline std::pair<std::vector<int>, std::vector<int>> shift_batch(const TokenBatch& batch) {
    const std::size_t L = batch.seq_len;
    if (L < 2) throw DimensionError("training segments need at least two tokens");
    std::vector<int> in, tg;
    in.reserve(batch.batch * (L - 1));
    tg.reserve(batch.batch * (L - 1));
    for (std::size_t b = 0; b < batch.batch; ++b)
        for (std::size_t i = 0; i + 1 < L; ++i) {
            in.push_back(batch.at(b, i));
            tg.push_back(batch.at(b, i + 1));
        }
    return {in, tg};
}

template <typename T>
struct StepOneTerms {
    Tensor<T> total, predict, commitment, codebook;
    std::vector<int> codes;
    Tensor<T> encoded;
};

/// Joint world/inverse objective: L_predict + beta * (commitment + codebook).
template <typename T>
StepOneTerms<T> step_one_objective(const WorldModel<T>& world, const InverseModel<T>& inverse,
                                   const TokenBatch& batch, std::span<const float> token_mask, double beta,
                                   double lambda_c) {
    const auto weights = shifted_weights<T>(batch, token_mask);
    const auto [inputs, targets] = shift_batch(batch);
    StepOneTerms<T> out;
    out.encoded = inverse.encode(batch.tokens, batch.seq_len);
    auto q = quantize<T>(out.encoded, inverse.codebook(), static_cast<T>(lambda_c), weights);
    auto logits = world.forward(inputs, batch.seq_len - 1, q.straight_through);
    out.predict = softmax_cross_entropy<T>(logits, targets, weights);
    out.commitment = q.commitment;
    out.codebook = q.codebook_loss;
    out.total = add(out.predict, scale(add(q.commitment, q.codebook_loss), static_cast<T>(beta)));
    out.codes = std::move(q.indices);
    return out;
}

/// Behavior-cloning objective: policy cross-entropy against the inverse
/// model's action indices.
template <typename T>
Tensor<T> cloning_objective(const InverseModel<T>& inverse, const PolicyModel<T>& policy, const TokenBatch& batch,
                            std::span<const float> token_mask, std::vector<int>* targets_out = nullptr) {
    const auto weights = shifted_weights<T>(batch, token_mask);
    const auto targets = inverse.actions(batch.tokens, batch.seq_len);
    const auto inputs = shift_batch(batch).first;
    auto logits = policy.forward(inputs, batch.seq_len - 1);
    if (targets_out) *targets_out = targets;
    return softmax_cross_entropy<T>(logits, targets, weights);
}

template <typename T>
Tensor<T> baseline_objective(const BaselineModel<T>& model, const TokenBatch& batch,
                             std::span<const float> token_mask) {
    const auto weights = shifted_weights<T>(batch, token_mask);
    const auto [inputs, targets] = shift_batch(batch);
    return softmax_cross_entropy<T>(model.forward(inputs, batch.seq_len - 1), targets, weights);
}

// ------------------------------------------------------------------ steps

namespace detail {

inline double mask_total(std::span<const float> token_mask, const TokenBatch& batch) {
    if (token_mask.empty()) return 1.0;
    double s = 0;
    for (std::size_t b = 0; b < batch.batch; ++b)
        for (std::size_t i = 1; i < batch.seq_len; ++i) s += token_mask[b * batch.seq_len + i];
    return s;
}

inline void require_finite(const LossReport& r) {
    if (!r.finite()) throw NonFiniteError("non-finite loss at " + r.stage + " step " + std::to_string(r.step) + ": " +
                                          r.to_json().dump());
}

template <typename T>
void require_unchanged(const ParameterStore<T>& store, std::uint64_t before, const std::string& stage) {
    if (store.checksum() != before)
        throw ContractError(stage + " modified frozen parameters of '" + store.prefix() + "'");
}

/// Codes unused for `patience` steps are moved onto encoder outputs of rows
/// with positive weight (all rows when none has weight).
template <typename T>
void reseed_dead_codes(InverseModel<T>& inverse, const Tensor<T>& encoded, const std::vector<int>& codes,
                       std::span<const T> row_weights, std::size_t patience, CodeUsage& usage, Rng& rng,
                       LossReport& report) {
    const std::size_t n = inverse.config().num_codes, d = inverse.config().d_code;
    if (usage.last_used.size() != n) usage.last_used.assign(n, usage.step);
    ++usage.step;
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < codes.size(); ++i)
        if (row_weights.empty() || row_weights[i] > T(0)) {
            usage.last_used[static_cast<std::size_t>(codes[i])] = usage.step;
            candidates.push_back(i);
        }
    if (patience == 0 || candidates.empty()) return;
    auto book = inverse.codebook();
    for (std::size_t c = 0; c < n; ++c) {
        if (usage.step - usage.last_used[c] < patience) continue;
        const std::size_t row = candidates[rng.index(candidates.size())];
        for (std::size_t j = 0; j < d; ++j) book.values()[c * d + j] = encoded.at(row, j);
        usage.last_used[c] = usage.step;
        report.events.push_back("reseeded code " + std::to_string(c));
    }
}

}  // namespace detail

/// One joint update of world and inverse models on a segment batch, with an
/// optional per-token mask (SFT). Returns the losses before the update.
template <typename T>
LossReport pretrain_step1(const TokenBatch& batch, WorldModel<T>& world, InverseModel<T>& inverse, Adam<T>& opt,
                          const TrainConfig& cfg, std::span<const float> token_mask = {},
                          CodeUsage* usage = nullptr, const std::string& stage = "pretrain1") {
    LossReport r;
    r.stage = stage;
    r.step = opt.step_count() + 1;
    if (detail::mask_total(token_mask, batch) <= 0) {
        r.skipped = true;
        r.events.push_back("warning: batch has no answer tokens; skipped");
        return r;
    }
    world.params().zero_grad();
    inverse.params().zero_grad();
    auto terms = step_one_objective(world, inverse, batch, token_mask, cfg.beta, cfg.lambda_c);
    r.predict = static_cast<double>(terms.predict.item());
    r.commitment = static_cast<double>(terms.commitment.item());
    r.codebook = static_cast<double>(terms.codebook.item());
    r.total = static_cast<double>(terms.total.item());
    r.code_histogram.assign(inverse.config().num_codes, 0);
    const auto weights = shifted_weights<T>(batch, token_mask);
    for (std::size_t i = 0; i < terms.codes.size(); ++i)
        if (weights[i] > T(0)) ++r.code_histogram[static_cast<std::size_t>(terms.codes[i])];
    detail::require_finite(r);
    backward(terms.total);
    StoreList<T> stores{&world.params(), &inverse.params()};
    r.grad_norm = clip_grad_norm(stores, cfg.clip_norm);
    detail::require_finite(r);
    opt.step(stores);
    if (usage) {
        Rng rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * r.step));
        detail::reseed_dead_codes(inverse, terms.encoded, terms.codes, std::span<const T>(weights), cfg.dead_code_steps,
                                  *usage, rng, r);
    }
    return r;
}

/// One behavior-cloning update of the policy against the frozen inverse model.
template <typename T>
LossReport pretrain_step2(const TokenBatch& batch, const InverseModel<T>& inverse, PolicyModel<T>& policy,
                          Adam<T>& opt, const TrainConfig& cfg, std::span<const float> token_mask = {},
                          const std::string& stage = "pretrain2") {
    LossReport r;
    r.stage = stage;
    r.step = opt.step_count() + 1;
    if (detail::mask_total(token_mask, batch) <= 0) {
        r.skipped = true;
        r.events.push_back("warning: batch has no answer tokens; skipped");
        return r;
    }
    const auto frozen = inverse.params().checksum();
    policy.params().zero_grad();
    std::vector<int> targets;
    auto loss = cloning_objective(inverse, policy, batch, token_mask, &targets);
    r.policy_bc = static_cast<double>(loss.item());
    r.total = r.policy_bc;
    r.code_histogram.assign(inverse.config().num_codes, 0);
    for (int c : targets) ++r.code_histogram[static_cast<std::size_t>(c)];
    detail::require_finite(r);
    backward(loss);
    StoreList<T> stores{&policy.params()};
    r.grad_norm = clip_grad_norm(stores, cfg.clip_norm);
    opt.step(stores);
    detail::require_unchanged(inverse.params(), frozen, stage);
    return r;
}

/// One next-token update of the baseline model.
template <typename T>
LossReport baseline_step(const TokenBatch& batch, BaselineModel<T>& model, Adam<T>& opt, const TrainConfig& cfg,
                         std::span<const float> token_mask = {}, const std::string& stage = "baseline") {
    LossReport r;
    r.stage = stage;
    r.step = opt.step_count() + 1;
    if (detail::mask_total(token_mask, batch) <= 0) {
        r.skipped = true;
        r.events.push_back("warning: batch has no answer tokens; skipped");
        return r;
    }
    model.params().zero_grad();
    auto loss = baseline_objective(model, batch, token_mask);
    r.predict = static_cast<double>(loss.item());
    r.total = r.predict;
    detail::require_finite(r);
    backward(loss);
    StoreList<T> stores{&model.params()};
    r.grad_norm = clip_grad_norm(stores, cfg.clip_norm);
    opt.step(stores);
    return r;
}

/// Masked fine-tuning: `step` 1 updates world + inverse, `step` 2 the policy.
template <typename T>
LossReport sft_step(const SftBatch& batch, WorldModel<T>& world, InverseModel<T>& inverse, PolicyModel<T>& policy,
                    Adam<T>& opt, const TrainConfig& cfg, int step, CodeUsage* usage = nullptr) {
    if (step == 1) return pretrain_step1(batch.tokens, world, inverse, opt, cfg, batch.mask, usage, "sft1");
    if (step == 2) {
        const auto world_sum = world.params().checksum();
        auto r = pretrain_step2(batch.tokens, inverse, policy, opt, cfg, batch.mask, "sft2");
        detail::require_unchanged(world.params(), world_sum, "sft2");
        return r;
    }
    throw std::invalid_argument("sft_step: step must be 1 or 2");
}

// --------------------------------------------------------------------- RL

/// Scores a finished episode. May throw; the episode is then dropped.
using RewardFn = std::function<double(std::span<const int> prompt, std::span<const int> generated)>;

namespace detail {

/// Rows of the policy forward that chose generated actions, as a weighted
/// target list over the sequence prompt + generated[:-1].
inline void action_rows(const RolloutTrace& t, std::vector<int>& inputs, std::vector<int>& targets,
                        std::vector<std::size_t>& rows) {
    auto full = t.full_sequence();
    inputs.assign(full.begin(), full.end() - 1);
    targets.assign(inputs.size(), 0);
    rows.clear();
    const std::size_t p = t.prompt.size();
    for (std::size_t s = 0; s < t.generated.size(); ++s) {
        rows.push_back(p - 1 + s);
        targets[p - 1 + s] = t.actions[p - 1 + s];
    }
}

template <typename T>
double reference_logprob_sum(const RolloutTrace& t, const PolicyModel<T>& ref) {
    NoGradGuard ng;
    std::vector<int> inputs, targets;
    std::vector<std::size_t> rows;
    action_rows(t, inputs, targets, rows);
    auto logits = ref.forward(inputs, inputs.size());
    double s = 0;
    for (std::size_t r : rows) {
        auto lp = log_softmax_row(logits.values().subspan(r * logits.cols(), logits.cols()));
        s += lp[static_cast<std::size_t>(targets[r])];
    }
    return s;
}

inline double sum(std::span<const double> xs) {
    double s = 0;
    for (double x : xs) s += x;
    return s;
}

}  // namespace detail

/// ReMax surrogate for a set of sampled traces with fixed advantages:
/// -sum_e adv_e / E * sum_t log pi(a_t | x_{1:t}) over generated positions.
template <typename T>
Tensor<T> remax_surrogate(const PolicyModel<T>& policy, const std::vector<RolloutTrace>& traces,
                          std::span<const double> advantages) {
    Tensor<T> total = Tensor<T>::scalar(T(0));
    const double denom = static_cast<double>(std::max<std::size_t>(1, traces.size()));
    std::vector<int> inputs, targets;
    std::vector<std::size_t> rows;
    for (std::size_t e = 0; e < traces.size(); ++e) {
        if (advantages[e] == 0.0 || traces[e].generated.empty()) continue;
        detail::action_rows(traces[e], inputs, targets, rows);
        std::vector<T> w(inputs.size(), T(0));
        for (std::size_t r : rows) w[r] = static_cast<T>(advantages[e] / denom);
        total = add(total, weighted_nll<T>(policy.forward(inputs, inputs.size()), targets, w));
    }
    return total;
}

/// Policy-only ReMax update: per prompt one sampled and one greedy rollout,
/// advantage r(sampled) - r(greedy), world and inverse frozen.
template <typename T>
LossReport rl_update(const std::vector<std::vector<int>>& prompts, const WorldModel<T>& world,
                     const InverseModel<T>& inverse, PolicyModel<T>& policy, const RewardFn& reward, Adam<T>& opt,
                     const TrainConfig& cfg, Rng& rng, const PolicyModel<T>* reference = nullptr) {
    LossReport r;
    r.stage = "rl";
    r.step = opt.step_count() + 1;
    const auto world_sum = world.params().checksum();
    const auto inverse_sum = inverse.params().checksum();

    std::vector<RolloutTrace> sampled;
    std::vector<double> advantages;
    RolloutOptions sample_opts{DecodeMode::kSample, DecodeMode::kGreedy, cfg.max_gen, cfg.temperature};
    RolloutOptions greedy_opts{DecodeMode::kGreedy, DecodeMode::kGreedy, cfg.max_gen, 1.0};
    for (const auto& prompt : prompts) {
        auto ts = rollout(std::span<const int>(prompt), world, inverse, policy, sample_opts, rng);
        auto tg = rollout(std::span<const int>(prompt), world, inverse, policy, greedy_opts, rng);
        double rs, rg;
        try {
            rs = reward(ts.prompt, ts.generated);
            rg = reward(tg.prompt, tg.generated);
        } catch (const std::exception& e) {
            ++r.dropped_episodes;
            r.events.push_back(std::string("dropped episode: ") + e.what());
            continue;
        }
        r.reward_sampled += rs;
        r.reward_greedy += rg;
        if (reference && cfg.kl_coef > 0) {
            rs -= cfg.kl_coef * (detail::sum(ts.action_logprobs) - detail::reference_logprob_sum(ts, *reference));
            rg -= cfg.kl_coef * (detail::sum(tg.action_logprobs) - detail::reference_logprob_sum(tg, *reference));
        }
        advantages.push_back(rs - rg);
        sampled.push_back(std::move(ts));
    }
    r.episodes = sampled.size();
    if (r.episodes) {
        r.reward_sampled /= static_cast<double>(r.episodes);
        r.reward_greedy /= static_cast<double>(r.episodes);
    }
    const bool any = std::any_of(advantages.begin(), advantages.end(), [](double a) { return a != 0.0; });
    if (!any) {
        r.skipped = true;
        return r;
    }
    policy.params().zero_grad();
    auto loss = remax_surrogate(policy, sampled, advantages);
    r.rl_objective = -static_cast<double>(loss.item());
    r.total = static_cast<double>(loss.item());
    detail::require_finite(r);
    backward(loss);
    StoreList<T> stores{&policy.params()};
    r.grad_norm = clip_grad_norm(stores, cfg.clip_norm);
    opt.step(stores);
    detail::require_unchanged(world.params(), world_sum, "rl");
    detail::require_unchanged(inverse.params(), inverse_sum, "rl");
    return r;
}

/// Token-level ReMax for the baseline model; the comparison arm of the game
/// experiments.
template <typename T>
LossReport rl_update_baseline(const std::vector<std::vector<int>>& prompts, BaselineModel<T>& model,
                              const RewardFn& reward, Adam<T>& opt, const TrainConfig& cfg, Rng& rng) {
    LossReport r;
    r.stage = "rl_baseline";
    r.step = opt.step_count() + 1;
    std::vector<RolloutTrace> sampled;
    std::vector<double> advantages;
    for (const auto& prompt : prompts) {
        auto ts = rollout_baseline(std::span<const int>(prompt), model, DecodeMode::kSample, cfg.max_gen,
                                   cfg.temperature, rng);
        auto tg = rollout_baseline(std::span<const int>(prompt), model, DecodeMode::kGreedy, cfg.max_gen, 1.0, rng);
        double rs, rg;
        try {
            rs = reward(ts.prompt, ts.generated);
            rg = reward(tg.prompt, tg.generated);
        } catch (const std::exception& e) {
            ++r.dropped_episodes;
            r.events.push_back(std::string("dropped episode: ") + e.what());
            continue;
        }
        r.reward_sampled += rs;
        r.reward_greedy += rg;
        advantages.push_back(rs - rg);
        sampled.push_back(std::move(ts));
    }
    r.episodes = sampled.size();
    if (r.episodes) {
        r.reward_sampled /= static_cast<double>(r.episodes);
        r.reward_greedy /= static_cast<double>(r.episodes);
    }
    if (std::all_of(advantages.begin(), advantages.end(), [](double a) { return a == 0.0; })) {
        r.skipped = true;
        return r;
    }
    model.params().zero_grad();
    Tensor<T> total = Tensor<T>::scalar(T(0));
    const double denom = static_cast<double>(sampled.size());
    for (std::size_t e = 0; e < sampled.size(); ++e) {
        if (advantages[e] == 0.0 || sampled[e].generated.empty()) continue;
        auto full = sampled[e].full_sequence();
        std::vector<int> inputs(full.begin(), full.end() - 1), targets(full.begin() + 1, full.end());
        std::vector<T> w(inputs.size(), T(0));
        for (std::size_t i = sampled[e].prompt.size() - 1; i < inputs.size(); ++i)
            w[i] = static_cast<T>(advantages[e] / denom);
        total = add(total, weighted_nll<T>(model.forward(inputs, inputs.size()), targets, w));
    }
    r.total = static_cast<double>(total.item());
    r.rl_objective = -r.total;
    detail::require_finite(r);
    backward(total);
    StoreList<T> stores{&model.params()};
    r.grad_norm = clip_grad_norm(stores, cfg.clip_norm);
    opt.step(stores);
    return r;
}

}  // namespace bwarea
