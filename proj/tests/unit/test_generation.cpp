// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace bwarea;

namespace {

struct Fixture {
    ModelConfig cfg = oracle::tiny_config();
    Rng rng{21};
    WorldModel<float> world{cfg, rng};
    InverseModel<float> inverse{cfg, rng};
    PolicyModel<float> policy{cfg, rng};
    Fixture() { oracle::make_action_sensitive(world, inverse, 4); }
};

const std::vector<int> kPrompt = Vocabulary::encode("the sky ");

}  // namespace

TEST(Rollout, GreedyIsDeterministic) {
    Fixture f;
    Rng r1(1), r2(2);
    RolloutOptions opts{DecodeMode::kGreedy, DecodeMode::kGreedy, 12, 1.0};
    auto a = rollout<float>(kPrompt, f.world, f.inverse, f.policy, opts, r1);
    auto b = rollout<float>(kPrompt, f.world, f.inverse, f.policy, opts, r2);
    EXPECT_EQ(a.to_json(), b.to_json());
}

TEST(Rollout, SampledWithEqualSeedsIsIdentical) {
    Fixture f;
    RolloutOptions opts{DecodeMode::kSample, DecodeMode::kSample, 12, 1.0};
    Rng r1(7), r2(7), r3(8);
    auto a = rollout<float>(kPrompt, f.world, f.inverse, f.policy, opts, r1);
    auto b = rollout<float>(kPrompt, f.world, f.inverse, f.policy, opts, r2);
    EXPECT_EQ(a.to_json(), b.to_json());
    bool any_differs = false;
    for (int i = 0; i < 5 && !any_differs; ++i)
        any_differs = rollout<float>(kPrompt, f.world, f.inverse, f.policy, opts, r3).to_json() != a.to_json();
    EXPECT_TRUE(any_differs);
}

TEST(Rollout, PrefixActionsComeFromTheInverseModel) {
    Fixture f;
    Rng r(3);
    RolloutOptions opts{DecodeMode::kSample, DecodeMode::kGreedy, 6, 1.0};
    auto t = rollout<float>(kPrompt, f.world, f.inverse, f.policy, opts, r);
    // Independent recomputation: encode, then brute-force nearest code.
    NoGradGuard ng;
    auto e = f.inverse.encode(kPrompt, kPrompt.size());
    const auto& book = f.inverse.codebook();
    ASSERT_EQ(t.prefix_action_count(), kPrompt.size() - 1);
    for (std::size_t i = 0; i + 1 < kPrompt.size(); ++i) {
        int best = 0;
        double best_d = 1e300;
        for (std::size_t c = 0; c < book.rows(); ++c) {
            double d = 0;
            for (std::size_t j = 0; j < book.cols(); ++j) {
                const double diff = double(e.at(i, j)) - double(book.at(c, j));
                d += diff * diff;
            }
            if (d < best_d) best_d = d, best = static_cast<int>(c);
        }
        EXPECT_EQ(t.actions[i], best) << "prefix position " << i;
    }
}

TEST(Rollout, TraceShapeInvariants) {
    Fixture f;
    Rng r(4);
    for (std::size_t max_len : {0u, 1u, 9u}) {
        RolloutOptions opts{DecodeMode::kSample, DecodeMode::kSample, max_len, 1.0};
        auto t = rollout<float>(kPrompt, f.world, f.inverse, f.policy, opts, r);
        EXPECT_LE(t.generated.size(), max_len);
        EXPECT_EQ(t.actions.size(), kPrompt.size() - 1 + t.generated.size());
        EXPECT_EQ(t.action_logprobs.size(), t.generated.size());
        EXPECT_EQ(t.token_logprobs.size(), t.generated.size());
        for (int a : t.actions) EXPECT_TRUE(a >= 0 && a < static_cast<int>(f.cfg.num_codes));
    }
}

TEST(Rollout, SingleTokenPromptHasNoPrefixActions) {
    Fixture f;
    Rng r(5);
    RolloutOptions opts{DecodeMode::kGreedy, DecodeMode::kGreedy, 3, 1.0};
    std::vector<int> one{'x'};
    auto t = rollout<float>(one, f.world, f.inverse, f.policy, opts, r);
    EXPECT_EQ(t.prefix_action_count(), 0u);
    EXPECT_EQ(t.actions.size(), t.generated.size());
    std::vector<int> none;
    EXPECT_THROW(rollout<float>(none, f.world, f.inverse, f.policy, opts, r), std::invalid_argument);
}

TEST(Rollout, StopsAtEndToken) {
    Fixture f;
    // Force the world head to put all mass on the end id.
    auto head_bias = f.world.params().get("world.head.bias");
    head_bias.values()[Vocabulary::kEnd] = 1e4f;
    Rng r(6);
    RolloutOptions opts{DecodeMode::kSample, DecodeMode::kGreedy, 20, 1.0};
    auto t = rollout<float>(kPrompt, f.world, f.inverse, f.policy, opts, r);
    ASSERT_EQ(t.generated.size(), 1u);
    EXPECT_EQ(t.generated[0], Vocabulary::kEnd);
}

TEST(Rollout, StopsWhenContextIsFull) {
    Fixture f;
    Rng r(7);
    RolloutOptions opts{DecodeMode::kGreedy, DecodeMode::kGreedy, 1000, 1.0};
    auto t = rollout<float>(kPrompt, f.world, f.inverse, f.policy, opts, r);
    EXPECT_LE(t.full_sequence().size(), f.cfg.max_context + 1);
}

TEST(Rollout, RescoringReproducesLogProbs) {
    Fixture f;
    Rng r(8);
    RolloutOptions opts{DecodeMode::kSample, DecodeMode::kSample, 15, 1.0};
    for (int ep = 0; ep < 5; ++ep) {
        auto t = rollout<float>(kPrompt, f.world, f.inverse, f.policy, opts, r);
        auto [alp, tlp] = rescore(t, f.world, f.inverse, f.policy);
        ASSERT_EQ(alp.size(), t.action_logprobs.size());
        for (std::size_t i = 0; i < alp.size(); ++i) {
            EXPECT_NEAR(alp[i], t.action_logprobs[i], 1e-5);
            EXPECT_NEAR(tlp[i], t.token_logprobs[i], 1e-5);
        }
    }
}

TEST(Rollout, GeneratedActionsComeFromThePolicy) {
    Fixture f;
    Rng r(9);
    RolloutOptions opts{DecodeMode::kGreedy, DecodeMode::kGreedy, 8, 1.0};
    auto t = rollout<float>(kPrompt, f.world, f.inverse, f.policy, opts, r);
    NoGradGuard ng;
    auto full = t.full_sequence();
    for (std::size_t s = 0; s < t.generated.size(); ++s) {
        std::vector<int> ctx(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(kPrompt.size() + s));
        auto top = policy_top_k<float>(ctx, f.policy, 1);
        EXPECT_EQ(t.actions[kPrompt.size() - 1 + s], top[0].first);
    }
}

TEST(Rollout, TraceJsonRoundTrip) {
    Fixture f;
    Rng r(10);
    RolloutOptions opts{DecodeMode::kSample, DecodeMode::kSample, 5, 1.0};
    auto t = rollout<float>(kPrompt, f.world, f.inverse, f.policy, opts, r);
    auto back = RolloutTrace::from_json(nlohmann::json::parse(t.to_json().dump()));
    EXPECT_EQ(back.to_json(), t.to_json());
}

TEST(Probe, PolicyArgmaxOverrideReproducesGreedyRollout) {
    Fixture f;
    Rng r(11);
    RolloutOptions opts{DecodeMode::kGreedy, DecodeMode::kGreedy, 10, 1.0};
    auto greedy = rollout<float>(kPrompt, f.world, f.inverse, f.policy, opts, r);
    std::vector<int> pinned(greedy.actions.begin() + static_cast<std::ptrdiff_t>(greedy.prefix_action_count()),
                            greedy.actions.end());
    auto probed = probe_actions<float>(kPrompt, f.world, f.inverse, pinned, 10);
    EXPECT_EQ(probed.generated, greedy.generated);
    EXPECT_EQ(probed.actions, greedy.actions);
    EXPECT_TRUE(probed.action_logprobs.empty());
}

TEST(Probe, DifferentActionsGiveDifferentDistributions) {
    Fixture f;
    NoGradGuard ng;
    auto prefix = prefix_actions<float>(kPrompt, f.inverse);
    auto final_dist = [&](int a) {
        auto codes = prefix;
        codes.push_back(a);
        auto logits = f.world.forward_codes(kPrompt, kPrompt.size(), codes, f.inverse.codebook());
        return log_softmax_row(detail::last_row(logits));
    };
    auto p = final_dist(0), q = final_dist(1);
    double kl = 0;
    for (std::size_t i = 0; i < p.size(); ++i) kl += std::exp(p[i]) * (p[i] - q[i]);
    EXPECT_GT(kl, 0.0);
}

TEST(Probe, SingleOverrideDrivesEveryStep) {
    Fixture f;
    std::vector<int> one{3};
    auto t = probe_actions<float>(kPrompt, f.world, f.inverse, one, 6);
    for (std::size_t s = 0; s < t.generated.size(); ++s) EXPECT_EQ(t.actions[t.prefix_action_count() + s], 3);
}

TEST(Probe, ListLengthCapsGeneration) {
    Fixture f;
    std::vector<int> list{1, 2, 3};
    auto t = probe_actions<float>(kPrompt, f.world, f.inverse, list, 10);
    EXPECT_LE(t.generated.size(), 3u);
}

TEST(Probe, EmptyGenerationAtZeroLength) {
    Fixture f;
    std::vector<int> one{2};
    EXPECT_TRUE(probe_actions<float>(kPrompt, f.world, f.inverse, one, 0).generated.empty());
}

TEST(Probe, OutOfRangeActionIsARangeError) {
    Fixture f;
    std::vector<int> bad{static_cast<int>(f.cfg.num_codes)};
    EXPECT_THROW(probe_actions<float>(kPrompt, f.world, f.inverse, bad, 3), std::out_of_range);
    std::vector<int> neg{-1};
    EXPECT_THROW(probe_actions<float>(kPrompt, f.world, f.inverse, neg, 3), std::out_of_range);
}

TEST(Baseline, RolloutIsSeededAndScored) {
    auto cfg = oracle::tiny_config();
    Rng init(12);
    BaselineModel<float> model(cfg, init);
    Rng r1(1), r2(1);
    auto a = rollout_baseline<float>(kPrompt, model, DecodeMode::kSample, 8, 1.0, r1);
    auto b = rollout_baseline<float>(kPrompt, model, DecodeMode::kSample, 8, 1.0, r2);
    EXPECT_EQ(a.generated, b.generated);
    EXPECT_TRUE(a.actions.empty());
    EXPECT_EQ(a.token_logprobs.size(), a.generated.size());
}

TEST(PolicyTopK, SortedProbabilities) {
    Fixture f;
    auto top = policy_top_k<float>(kPrompt, f.policy, 5);
    ASSERT_EQ(top.size(), 5u);
    for (std::size_t i = 1; i < top.size(); ++i) EXPECT_GE(top[i - 1].second, top[i].second);
    auto all = policy_top_k<float>(kPrompt, f.policy, 100);
    double s = 0;
    for (auto& [a, p] : all) s += p;
    EXPECT_NEAR(s, 1.0, 1e-6);
}
