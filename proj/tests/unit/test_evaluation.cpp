// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"

using namespace bwarea;

namespace {

struct EvalModels {
    ModelConfig cfg;
    Rng rng;
    WorldModel<double> world;
    InverseModel<double> inverse;
    PolicyModel<double> policy;
    BaselineModel<double> baseline;
    explicit EvalModels(ModelConfig c, std::uint64_t seed = 5)
        : cfg(c), rng(seed), world(cfg, rng), inverse(cfg, rng), policy(cfg, rng), baseline(cfg, rng) {}
};

ModelConfig near_uniform_config() {
    auto c = oracle::tiny_config();
    c.init_std = 0.02;
    return c;
}

// Log p(x_{t+1} | x_{<=t}, codes) for every action a at position t, with the
// earlier positions fed `prefix`. Uses a fresh full forward per action.
std::vector<std::vector<double>> per_action_logprob(const WorldModel<double>& world, const Tensor<double>& book,
                                                    const std::vector<int>& inputs, const std::vector<int>& prefix,
                                                    std::size_t t) {
    const std::size_t n = book.rows();
    std::vector<std::vector<double>> out(n);
    for (std::size_t a = 0; a < n; ++a) {
        auto codes = prefix;
        codes[t] = static_cast<int>(a);
        auto logits = world.forward_codes(inputs, inputs.size(), codes, book);
        const std::size_t v = logits.cols();
        std::vector<double> row(logits.values().begin() + static_cast<std::ptrdiff_t>(t * v),
                                logits.values().begin() + static_cast<std::ptrdiff_t>((t + 1) * v));
        auto p = oracle::softmax(row);
        for (double& x : p) x = std::log(x);
        out[a] = p;
    }
    return out;
}

}  // namespace

TEST(EvalWorld, UntrainedCrossEntropyIsNearLogVocab) {
    EvalModels m(near_uniform_config());
    auto heldout = oracle::random_ids(400, 3, 0, 255);
    EvalOptions opts{32, 4, 0};
    auto r = eval_world(m.world, m.inverse, heldout, opts);
    const double lnv = std::log(static_cast<double>(Vocabulary::kSize));
    EXPECT_NEAR(r.cross_entropy, lnv, 0.05 * lnv);
    EXPECT_NEAR(r.world_entropy, lnv, 0.05 * lnv);
    auto b = eval_baseline(m.baseline, heldout, opts);
    EXPECT_NEAR(b.cross_entropy, lnv, 0.05 * lnv);
}

TEST(EvalWorld, PerplexityIsExpOfCrossEntropy) {
    EvalModels m(oracle::tiny_config());
    auto heldout = oracle::random_ids(300, 4);
    auto r = eval_lm(m.world, m.inverse, &m.baseline, heldout, {32, 4, 0});
    EXPECT_NEAR(r.perplexity, std::exp(r.cross_entropy), 1e-6 * r.perplexity);
    EXPECT_NEAR(r.baseline_perplexity, std::exp(r.baseline_cross_entropy), 1e-6 * r.baseline_perplexity);
    EXPECT_TRUE(r.finite());
}

TEST(EvalWorld, MatchesBruteForceCrossEntropy) {
    EvalModels m(oracle::tiny_config());
    auto heldout = oracle::random_ids(64, 6);
    auto r = eval_world(m.world, m.inverse, heldout, {16, 2, 0});
    double nll = 0;
    std::size_t count = 0, correct = 0;
    std::vector<std::uint64_t> hist(m.cfg.num_codes, 0);
    for (std::size_t s = 0; s + 16 <= heldout.size(); s += 16) {
        std::vector<int> seg(heldout.begin() + static_cast<std::ptrdiff_t>(s),
                             heldout.begin() + static_cast<std::ptrdiff_t>(s + 16));
        auto codes = m.inverse.actions(seg, 16);
        for (int c : codes) ++hist[static_cast<std::size_t>(c)];
        std::vector<int> in(seg.begin(), seg.end() - 1);
        auto logits = m.world.forward_codes(in, 15, codes, m.inverse.codebook());
        const std::size_t v = logits.cols();
        for (std::size_t i = 0; i < 15; ++i) {
            std::vector<double> row(logits.values().begin() + static_cast<std::ptrdiff_t>(i * v),
                                    logits.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * v));
            auto p = oracle::softmax(row);
            nll -= std::log(p[static_cast<std::size_t>(seg[i + 1])]);
            if (std::max_element(p.begin(), p.end()) - p.begin() == seg[i + 1]) ++correct;
            ++count;
        }
    }
    EXPECT_EQ(r.tokens, count);
    EXPECT_NEAR(r.cross_entropy, nll / static_cast<double>(count), 1e-9);
    EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(correct) / static_cast<double>(count));
    std::size_t distinct = 0;
    std::vector<double> p;
    double total = 0;
    for (auto h : hist) total += static_cast<double>(h);
    for (auto h : hist)
        if (h) ++distinct, p.push_back(static_cast<double>(h) / total);
    EXPECT_EQ(r.distinct_codes, distinct);
    EXPECT_NEAR(r.code_usage_entropy, oracle::entropy(p), 1e-12);
    EXPECT_LE(r.code_usage_entropy, std::log(static_cast<double>(m.cfg.num_codes)) + 1e-12);
}

TEST(EvalWorld, EmptyHeldoutIsAContractError) {
    EvalModels m(oracle::tiny_config());
    std::vector<int> none;
    EXPECT_THROW(eval_world(m.world, m.inverse, none), ContractError);
    std::vector<int> one{'a'};
    EXPECT_THROW(eval_baseline(m.baseline, one), ContractError);
}

TEST(EvalWorld, ShortHeldoutBecomesOneSegment) {
    auto b = eval_batches(std::vector<int>{1, 2, 3}, 16, 4);
    ASSERT_EQ(b.size(), 1u);
    EXPECT_EQ(b[0].seq_len, 3u);
}

TEST(Entropy, OneHotAndUniformRows) {
    std::vector<double> onehot(Vocabulary::kSize, -1e300);
    onehot[7] = 0.0;
    EXPECT_NEAR(row_entropy(onehot), 0.0, 1e-12);
    std::vector<double> uniform(Vocabulary::kSize, -std::log(static_cast<double>(Vocabulary::kSize)));
    EXPECT_NEAR(row_entropy(uniform), std::log(static_cast<double>(Vocabulary::kSize)), 1e-12);
}

TEST(Entropy, ZeroHeadGivesLogVocab) {
    EvalModels m(oracle::tiny_config());
    for (auto name : {"world.head.weight", "world.head.bias"}) {
        auto t = m.world.params().get(name);
        for (auto& x : t.values()) x = 0;
    }
    auto r = eval_world(m.world, m.inverse, oracle::random_ids(40, 2), {16, 2, 0});
    EXPECT_NEAR(r.world_entropy, std::log(static_cast<double>(Vocabulary::kSize)), 1e-9);
}

TEST(MixtureCe, DegeneratePolicyMakesBothEqual) {
    EvalModels m(oracle::tiny_config());
    oracle::make_action_sensitive(m.world, m.inverse, 2);
    ActionDistribution onehot = [&](std::span<const int> ids) {
        std::vector<double> p(ids.size() * m.cfg.num_codes, 0.0);
        for (std::size_t t = 0; t < ids.size(); ++t) p[t * m.cfg.num_codes + (t * 3 % m.cfg.num_codes)] = 1.0;
        return p;
    };
    auto r = marginal_vs_expected_ce(m.world, m.inverse.codebook(), onehot, oracle::random_ids(40, 8), {20, 1, 0});
    EXPECT_GT(r.positions, 0u);
    EXPECT_NEAR(r.marginal, r.expected, 1e-6);
}

TEST(MixtureCe, MatchesPerActionOracle) {
    // Property on each position: log of a mixture is at least the weighted
    // mean of the component logs, so the exact mixture CE is at most the
    // policy-averaged CE. Checked with an explicit per-action oracle.
    EvalModels m(oracle::tiny_config());
    oracle::make_action_sensitive(m.world, m.inverse, 3);
    auto ids = oracle::random_ids(9, 11);
    std::vector<int> inputs(ids.begin(), ids.end() - 1);
    auto dist = policy_distribution(m.policy);
    auto probs = dist(inputs);
    const std::size_t n = m.cfg.num_codes;
    std::vector<int> best(inputs.size());
    for (std::size_t t = 0; t < inputs.size(); ++t)
        best[t] = static_cast<int>(std::max_element(probs.begin() + static_cast<std::ptrdiff_t>(t * n),
                                                    probs.begin() + static_cast<std::ptrdiff_t>((t + 1) * n)) -
                                   (probs.begin() + static_cast<std::ptrdiff_t>(t * n)));
    auto r = marginal_vs_expected_ce(m.world, m.inverse, m.policy, ids, {64, 1, 0});
    double expected = 0, marginal = 0, averaged = 0;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        auto lp = per_action_logprob(m.world, m.inverse.codebook(), inputs, best, t);
        const auto tg = static_cast<std::size_t>(ids[t + 1]);
        double mix = 0, avg = 0;
        for (std::size_t a = 0; a < n; ++a) {
            mix += probs[t * n + a] * std::exp(lp[a][tg]);
            avg += probs[t * n + a] * lp[a][tg];
        }
        expected -= std::log(mix);
        averaged -= avg;
        marginal -= lp[static_cast<std::size_t>(best[t])][tg];
    }
    const double T = static_cast<double>(inputs.size());
    EXPECT_EQ(r.positions, inputs.size());
    EXPECT_NEAR(r.expected, expected / T, 1e-9);
    EXPECT_NEAR(r.marginal, marginal / T, 1e-9);
    EXPECT_LE(r.expected, averaged / T + 1e-12);
}

TEST(MixtureCe, ExactMixtureAgreesWithMonteCarlo) {
    EvalModels m(oracle::tiny_config());
    oracle::make_action_sensitive(m.world, m.inverse, 4);
    auto ids = oracle::random_ids(6, 13);
    std::vector<int> inputs(ids.begin(), ids.end() - 1);
    auto probs = policy_distribution(m.policy)(inputs);
    const std::size_t n = m.cfg.num_codes;
    std::vector<int> best(inputs.size());
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        std::span<const double> row(probs.data() + t * n, n);
        best[t] = static_cast<int>(argmax(row));
    }
    auto r = marginal_vs_expected_ce(m.world, m.inverse, m.policy, ids, {64, 1, 0});

    // Monte-Carlo estimate of each mixture probability with sampled actions.
    constexpr std::size_t kSamples = 1000000;
    Rng rng(99);
    double ce_mc = 0, var_ce = 0;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        auto lp = per_action_logprob(m.world, m.inverse.codebook(), inputs, best, t);
        const auto tg = static_cast<std::size_t>(ids[t + 1]);
        std::span<const double> row(probs.data() + t * n, n);
        double s = 0, s2 = 0;
        for (std::size_t k = 0; k < kSamples; ++k) {
            const double x = std::exp(lp[rng.categorical<double>(row)][tg]);
            s += x;
            s2 += x * x;
        }
        const double mean = s / kSamples;
        const double var = (s2 / kSamples - mean * mean) / kSamples;
        ce_mc -= std::log(mean);
        var_ce += var / (mean * mean);  // delta method for -log
    }
    const double T = static_cast<double>(inputs.size());
    const double se = std::sqrt(var_ce) / T;
    EXPECT_NEAR(r.expected, ce_mc / T, 3 * se + 1e-12) << "se " << se;
}

TEST(EvalReport, JsonRoundTrip) {
    EvalReport r;
    r.tokens = 42;
    r.cross_entropy = 1.25;
    r.perplexity = std::exp(1.25);
    r.marginal_ce = 0.5;
    r.expected_ce = 0.375;
    r.distinct_codes = 3;
    EXPECT_EQ(EvalReport::from_json(nlohmann::json::parse(r.to_json().dump())), r);
    EXPECT_NE(r.to_table().find("distinct_codes"), std::string::npos);
}

TEST(DirtyTokens, RateValidation) {
    EvalModels m(oracle::tiny_config());
    auto train = oracle::random_ids(200, 1), held = oracle::random_ids(64, 2);
    for (double rate : {-0.1, 1.5, std::nan("")}) {
        DirtyTokenConfig cfg;
        cfg.rate = rate;
        EXPECT_THROW(dirty_token_experiment(m.world, m.inverse, m.baseline, train, held, cfg), std::invalid_argument);
    }
}

TEST(DirtyTokens, InverseStaysFrozenAndOriginalsUntouched) {
    EvalModels m(oracle::tiny_config());
    auto train = oracle::random_ids(400, 1), held = oracle::random_ids(64, 2);
    const auto world_sum = m.world.params().checksum();
    const auto base_sum = m.baseline.params().checksum();
    DirtyTokenConfig cfg;
    cfg.steps = 3;
    cfg.batch_size = 2;
    cfg.seq_len = 16;
    cfg.lr = 1e-2;
    cfg.eval = {16, 4, 0};
    auto rec = dirty_token_experiment(m.world, m.inverse, m.baseline, train, held, cfg);
    EXPECT_TRUE(rec.inverse_unchanged);
    EXPECT_EQ(m.world.params().checksum(), world_sum);
    EXPECT_EQ(m.baseline.params().checksum(), base_sum);
    EXPECT_NE(rec.ce_after_bwarea, rec.ce_before_bwarea);
    EXPECT_DOUBLE_EQ(rec.comparison, rec.delta_baseline - rec.delta_bwarea);
    EXPECT_DOUBLE_EQ(rec.ce_before_bwarea, eval_world(m.world, m.inverse, held, cfg.eval).cross_entropy);
}
