// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "bwarea/data.hpp"
#include "bwarea/models.hpp"

namespace bwarea {

enum class DecodeMode { kGreedy, kSample };

struct RolloutOptions {
    DecodeMode action_mode = DecodeMode::kGreedy;
    DecodeMode token_mode = DecodeMode::kGreedy;
    std::size_t max_len = 64;
    double temperature = 1.0;
};

/// One generated episode. actions[i] drives the prediction of token i+1 of
/// the full sequence; the first prompt.size()-1 come from the inverse model,
/// the rest from the policy (or an override).
struct RolloutTrace {
    std::vector<int> prompt;
    std::vector<int> generated;
    std::vector<int> actions;
    std::vector<double> action_logprobs;  // one per generated token (policy), empty for baseline traces
    std::vector<double> token_logprobs;   // one per generated token (world or baseline model)

    std::size_t prefix_action_count() const { return prompt.empty() ? 0 : prompt.size() - 1; }

    std::vector<int> full_sequence() const {
        std::vector<int> out = prompt;
        out.insert(out.end(), generated.begin(), generated.end());
        return out;
    }

    std::string generated_text() const { return Vocabulary::decode(generated); }

    /// Bytes outside printable ASCII become '?', so the text is always valid UTF-8.
    static std::string printable(std::string s) {
        for (char& c : s)
            if (static_cast<unsigned char>(c) >= 0x80 || (static_cast<unsigned char>(c) < 0x20 && c != '\n')) c = '?';
        return s;
    }

    nlohmann::json to_json() const {
        return {{"prompt", prompt},
                {"generated", generated},
                {"text", printable(generated_text())},
                {"actions", actions},
                {"action_logprobs", action_logprobs},
                {"token_logprobs", token_logprobs}};
    }

    static RolloutTrace from_json(const nlohmann::json& j) {
        RolloutTrace t;
        j.at("prompt").get_to(t.prompt);
        j.at("generated").get_to(t.generated);
        j.at("actions").get_to(t.actions);
        j.at("action_logprobs").get_to(t.action_logprobs);
        j.at("token_logprobs").get_to(t.token_logprobs);
        return t;
    }
};

/// Log-softmax of one logit row, in double precision.
template <typename T>
std::vector<double> log_softmax_row(std::span<const T> row, double temperature = 1.0) {
    std::vector<double> out(row.size());
    double mx = -INFINITY;
    for (T v : row) mx = std::max(mx, static_cast<double>(v) / temperature);
    double z = 0;
    for (std::size_t i = 0; i < row.size(); ++i) z += std::exp(static_cast<double>(row[i]) / temperature - mx);
    const double lz = mx + std::log(z);
    for (std::size_t i = 0; i < row.size(); ++i) out[i] = static_cast<double>(row[i]) / temperature - lz;
    return out;
}

template <typename T>
    requires(!std::is_const_v<T>)
std::vector<double> log_softmax_row(std::span<T> row, double temperature = 1.0) {
    return log_softmax_row(std::span<const T>(row), temperature);
}

inline std::size_t argmax(std::span<const double> xs) {
    return static_cast<std::size_t>(std::max_element(xs.begin(), xs.end()) - xs.begin());
}

namespace detail {

inline int choose(std::span<const double> logprobs, DecodeMode mode, Rng& rng) {
    if (mode == DecodeMode::kGreedy) return static_cast<int>(argmax(logprobs));
    std::vector<double> p(logprobs.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(logprobs[i]);
    return static_cast<int>(rng.categorical<double>(p));
}

template <typename T>
std::span<const T> last_row(const Tensor<T>& logits) {
    return logits.values().subspan((logits.rows() - 1) * logits.cols(), logits.cols());
}

}  // namespace detail

/// Hindsight actions for a prompt: prompt.size()-1 indices.
template <typename T>
std::vector<int> prefix_actions(std::span<const int> prompt, const InverseModel<T>& inverse) {
    if (prompt.size() < 2) return {};
    return inverse.actions(prompt, prompt.size());
}

namespace detail {

/// Shared loop of rollout() and probe_actions(). `pick_action` returns the
/// action for generation step s given the policy log-probs (may be empty when
/// the policy is bypassed).
template <typename T, typename PickAction>
RolloutTrace generate(std::span<const int> prompt, const WorldModel<T>& world, const InverseModel<T>& inverse,
                      const PolicyModel<T>* policy, std::size_t max_len, DecodeMode token_mode, double temperature,
                      Rng& rng, PickAction pick_action) {
    if (prompt.empty()) throw std::invalid_argument("rollout needs a prompt of at least one token");
    NoGradGuard ng;
    RolloutTrace trace;
    trace.prompt.assign(prompt.begin(), prompt.end());
    trace.actions = prefix_actions(prompt, inverse);
    std::vector<int> tokens = trace.prompt;
    const std::size_t max_context = world.config().max_context;
    for (std::size_t step = 0; step < max_len && tokens.size() <= max_context; ++step) {
        std::vector<double> policy_lp;
        if (policy) policy_lp = log_softmax_row(last_row(policy->forward(tokens, tokens.size())), temperature);
        const int action = pick_action(step, policy_lp);
        if (action < 0 || static_cast<std::size_t>(action) >= world.config().num_codes)
            throw std::out_of_range("action " + std::to_string(action) + " outside codebook");
        trace.actions.push_back(action);
        if (!policy_lp.empty()) trace.action_logprobs.push_back(policy_lp[static_cast<std::size_t>(action)]);
        const auto token_lp = log_softmax_row(
            last_row(world.forward_codes(tokens, tokens.size(), trace.actions, inverse.codebook())), temperature);
        const int token = choose(token_lp, token_mode, rng);
        trace.token_logprobs.push_back(token_lp[static_cast<std::size_t>(token)]);
        trace.generated.push_back(token);
        tokens.push_back(token);
        if (token == Vocabulary::kEnd) break;
    }
    return trace;
}

}  // namespace detail

/// Generation loop: prefix actions from the inverse model, then per step an
/// action from the policy followed by a token from the world model. Stops at
/// the end id, at max_len, or when the context is full.
template <typename T>
RolloutTrace rollout(std::span<const int> prompt, const WorldModel<T>& world, const InverseModel<T>& inverse,
                     const PolicyModel<T>& policy, const RolloutOptions& opts, Rng& rng) {
    return detail::generate(prompt, world, inverse, &policy, opts.max_len, opts.token_mode, opts.temperature, rng,
                            [&](std::size_t, std::span<const double> lp) {
                                return detail::choose(lp, opts.action_mode, rng);
                            });
}

/// Policy-free generation: `overrides` holds either one action used at every
/// step or one action per step (generation stops when the list runs out).
/// Tokens are chosen by argmax.
template <typename T>
RolloutTrace probe_actions(std::span<const int> prompt, const WorldModel<T>& world, const InverseModel<T>& inverse,
                           std::span<const int> overrides, std::size_t max_len) {
    if (overrides.empty()) throw std::invalid_argument("probe_actions needs at least one action");
    for (int a : overrides)
        if (a < 0 || static_cast<std::size_t>(a) >= world.config().num_codes)
            throw std::out_of_range("action " + std::to_string(a) + " outside codebook");
    const std::size_t steps = overrides.size() == 1 ? max_len : std::min(max_len, overrides.size());
    Rng unused(0);
    return detail::generate(prompt, world, inverse, static_cast<const PolicyModel<T>*>(nullptr), steps,
                            DecodeMode::kGreedy, 1.0, unused, [&](std::size_t step, std::span<const double>) {
                                return overrides.size() == 1 ? overrides[0] : overrides[step];
                            });
}

/// Recomputes per-step policy and world log-probabilities of a trace with a
/// single forward pass over the whole sequence.
template <typename T>
std::pair<std::vector<double>, std::vector<double>> rescore(const RolloutTrace& trace, const WorldModel<T>& world,
                                                            const InverseModel<T>& inverse,
                                                            const PolicyModel<T>& policy) {
    NoGradGuard ng;
    const auto full = trace.full_sequence();
    const std::vector<int> inputs(full.begin(), full.end() - 1);
    const std::size_t p = trace.prompt.size();
    auto plog = policy.forward(inputs, inputs.size());
    auto wlog = world.forward_codes(inputs, inputs.size(), trace.actions, inverse.codebook());
    std::vector<double> a_lp, t_lp;
    for (std::size_t s = 0; s < trace.generated.size(); ++s) {
        const std::size_t row = p - 1 + s;
        auto pl = log_softmax_row(plog.values().subspan(row * plog.cols(), plog.cols()));
        auto wl = log_softmax_row(wlog.values().subspan(row * wlog.cols(), wlog.cols()));
        a_lp.push_back(pl[static_cast<std::size_t>(trace.actions[row])]);
        t_lp.push_back(wl[static_cast<std::size_t>(trace.generated[s])]);
    }
    return {a_lp, t_lp};
}

/// Token-level generation with the autoregressive baseline.
template <typename T>
RolloutTrace rollout_baseline(std::span<const int> prompt, const BaselineModel<T>& model, DecodeMode mode,
                              std::size_t max_len, double temperature, Rng& rng) {
    if (prompt.empty()) throw std::invalid_argument("rollout needs a prompt of at least one token");
    NoGradGuard ng;
    RolloutTrace trace;
    trace.prompt.assign(prompt.begin(), prompt.end());
    std::vector<int> tokens = trace.prompt;
    for (std::size_t step = 0; step < max_len && tokens.size() <= model.config().max_context; ++step) {
        const auto lp = log_softmax_row(detail::last_row(model.forward(tokens, tokens.size())), temperature);
        const int token = detail::choose(lp, mode, rng);
        trace.token_logprobs.push_back(lp[static_cast<std::size_t>(token)]);
        trace.generated.push_back(token);
        tokens.push_back(token);
        if (token == Vocabulary::kEnd) break;
    }
    return trace;
}

/// Top-k actions of the policy at the end of `tokens`, as (action, probability).
template <typename T>
std::vector<std::pair<int, double>> policy_top_k(std::span<const int> tokens, const PolicyModel<T>& policy,
                                                 std::size_t k) {
    NoGradGuard ng;
    const auto lp = log_softmax_row(detail::last_row(policy.forward(tokens, tokens.size())));
    std::vector<std::pair<int, double>> out;
    for (std::size_t i = 0; i < lp.size(); ++i) out.emplace_back(static_cast<int>(i), std::exp(lp[i]));
    std::stable_sort(out.begin(), out.end(), [](auto& a, auto& b) { return a.second > b.second; });
    out.resize(std::min(k, out.size()));
    return out;
}

}  // namespace bwarea
