// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "oracles.hpp"

using namespace bwarea;

namespace {

DecisionGame custom() { return load_game(oracle::data_path("games/custom.game")); }

std::string always_correct(const DecisionGame& g, std::size_t state) {
    return std::to_string(g.states[state].correct + 1);
}

DecisionGame parse(const std::string& text) {
    std::istringstream in(text);
    return parse_game(in, "inline");
}

const char* kTwoState =
    "name = t\n"
    "[state]\n"
    "description = a\n"
    "choice = left\n"
    "choice = right\n"
    "correct = 2\n"
    "[state]\n"
    "description = b\n"
    "choice = up\n"
    "choice = down\n"
    "choice = wait\n"
    "correct = 1\n";

}  // namespace

TEST(Games, BundledGamesLoad) {
    const std::pair<const char*, std::size_t> expected[] = {
        {"games/custom.game", 5}, {"games/treasure_hunter.game", 3}, {"games/dragon.game", 3}};
    for (auto [file, n] : expected) {
        auto g = load_game(oracle::data_path(file));
        EXPECT_EQ(g.size(), n) << file;
        EXPECT_DOUBLE_EQ(g.optimal_return(), static_cast<double>(n));
        EXPECT_EQ(g.max_steps(), 4 * n);
        EXPECT_NO_THROW(g.validate());
    }
}

TEST(Games, CorrectAnswerOnLastStateEndsTheEpisode) {
    auto g = custom();
    const std::size_t last = g.size() - 1;
    auto r = game_step(g, last, always_correct(g, last));
    EXPECT_DOUBLE_EQ(r.reward, 1.0);
    EXPECT_TRUE(r.done);
    EXPECT_EQ(r.outcome, AnswerOutcome::kCorrect);
}

TEST(Games, WrongAndUnmatchedAnswers) {
    auto g = custom();
    // State 0 has two choices; "3" does not name one of them.
    auto out = game_step(g, 0, "3. fly away");
    EXPECT_DOUBLE_EQ(out.reward, 0.0);
    EXPECT_EQ(out.next_state, 0u);
    EXPECT_FALSE(out.done);
    EXPECT_EQ(out.outcome, AnswerOutcome::kOutOfSpace);
    const std::size_t wrong = g.states[0].correct == 0 ? 2 : 1;
    auto bad = game_step(g, 0, std::to_string(wrong));
    EXPECT_DOUBLE_EQ(bad.reward, -1.0);
    EXPECT_EQ(bad.next_state, 0u);
    EXPECT_EQ(bad.outcome, AnswerOutcome::kIncorrect);
    EXPECT_THROW(game_step(g, g.size(), "1"), std::out_of_range);
}

TEST(Games, AlwaysCorrectAgentGetsOptimalReturn) {
    auto g = custom();
    auto r = run_episode(g, [&](std::size_t s, const std::string&) { return always_correct(g, s); });
    EXPECT_DOUBLE_EQ(r.total_return, 5.0);
    EXPECT_EQ(r.steps, 5u);
    EXPECT_TRUE(r.completed);
    EXPECT_FALSE(r.truncated);
}

TEST(Games, EpisodeTruncatesAtFourTimesTheStateCount) {
    auto g = custom();
    auto r = run_episode(g, [](std::size_t, const std::string&) { return std::string("nonsense"); });
    EXPECT_EQ(r.steps, 20u);
    EXPECT_TRUE(r.truncated);
    EXPECT_DOUBLE_EQ(r.total_return, 0.0);
}

TEST(Games, ReturnNeverExceedsStateCount) {
    auto g = custom();
    Rng rng(3);
    for (int ep = 0; ep < 200; ++ep) {
        auto r = run_episode(g, [&](std::size_t s, const std::string&) {
            const auto pick = rng.index(g.states[s].choices.size());
            return std::to_string(pick + 1);
        });
        EXPECT_LE(r.total_return, static_cast<double>(g.size()));
        EXPECT_LE(r.steps, g.max_steps());
        EXPECT_EQ(r.transcript.size(), r.steps);
    }
}

TEST(Games, RewardIsAPureFunction) {
    auto g = custom();
    for (std::size_t s = 0; s < g.size(); ++s)
        for (const char* a : {"1", "2", "x", "2) hide in the dark"}) {
            auto r1 = game_step(g, s, a), r2 = game_step(g, s, a);
            EXPECT_EQ(r1.reward, r2.reward);
            EXPECT_EQ(r1.next_state, r2.next_state);
        }
}

TEST(GameFormat, SaveLoadRoundTrip) {
    auto dir = std::filesystem::temp_directory_path() / "bwarea_game_rt";
    std::filesystem::create_directories(dir);
    for (const char* file : {"games/custom.game", "games/treasure_hunter.game", "games/dragon.game"}) {
        auto g = load_game(oracle::data_path(file));
        save_game(dir / "g.game", g);
        EXPECT_EQ(load_game(dir / "g.game"), g) << file;
    }
    auto g = parse(kTwoState);
    g.rewards = {2.5, -0.5, 0.25};
    save_game(dir / "r.game", g);
    EXPECT_EQ(load_game(dir / "r.game"), g);
    std::filesystem::remove_all(dir);
}

TEST(GameFormat, ParsesStatesAndCorrectIndex) {
    auto g = parse(kTwoState);
    ASSERT_EQ(g.size(), 2u);
    EXPECT_EQ(g.name, "t");
    EXPECT_EQ(g.states[0].correct, 1u);
    EXPECT_EQ(g.states[1].choices.size(), 3u);
    EXPECT_EQ(g.states[1].correct, 0u);
}

TEST(GameFormat, TwoCorrectLinesAreRejected) {
    std::string text = kTwoState;
    text += "correct = 2\n";
    EXPECT_THROW(parse(text), GameValidationError);
}

TEST(GameFormat, MissingCorrectLineIsRejected) {
    EXPECT_THROW(parse("[state]\ndescription = a\nchoice = x\nchoice = y\n"), GameValidationError);
}

TEST(GameFormat, UnknownKeyReportsItsLine) {
    std::string text = kTwoState;
    text += "colour = red\n";
    try {
        parse(text);
        FAIL() << "no error";
    } catch (const GameFormatError& e) {
        EXPECT_EQ(e.line(), 13u);
        EXPECT_NE(std::string(e.what()).find("inline:13"), std::string::npos);
    }
}

TEST(GameFormat, MissingFileIsADataError) {
    EXPECT_THROW(load_game("/nonexistent/x.game"), DataError);
}

TEST(Matching, NumberFormsAndChoiceText) {
    GameState s{"d", {"Open the door", "sleep again"}, 0};
    EXPECT_EQ(match_choice(s, "1"), 0);
    EXPECT_EQ(match_choice(s, "2."), 1);
    EXPECT_EQ(match_choice(s, " 2) "), 1);
    EXPECT_EQ(match_choice(s, "1: open the door"), 0);
    EXPECT_EQ(match_choice(s, "OPEN THE DOOR"), 0);
    EXPECT_EQ(match_choice(s, "sleep again"), 1);
    EXPECT_EQ(match_choice(s, "1. sleep again"), -1);
    EXPECT_EQ(match_choice(s, "0"), -1);
    EXPECT_EQ(match_choice(s, "3"), -1);
    EXPECT_EQ(match_choice(s, "1234"), -1);
    EXPECT_EQ(match_choice(s, ""), -1);
    EXPECT_EQ(match_choice(s, "open the"), -1);
}

TEST(GameReward, ScoresGeneratedAnswersByPrompt) {
    auto g = custom();
    auto reward = game_reward(g);
    for (std::size_t s = 0; s < g.size(); ++s) {
        auto prompt = Vocabulary::encode(g.prompt(s));
        auto ans = Vocabulary::encode(always_correct(g, s));
        ans.push_back(Vocabulary::kEnd);
        ans.push_back('9');
        EXPECT_DOUBLE_EQ(reward(prompt, ans), 1.0);
    }
    auto stray = Vocabulary::encode("not a prompt");
    auto ans = Vocabulary::encode("1");
    EXPECT_THROW(reward(stray, ans), std::invalid_argument);
}

TEST(GameReward, FormatRecordsCoverEveryChoice) {
    auto g = custom();
    auto recs = game_format_records(g);
    std::size_t expected = 0;
    for (auto& s : g.states) expected += s.choices.size();
    EXPECT_EQ(recs.size(), expected);
    for (auto& r : recs) EXPECT_FALSE(r.answer.empty());
}

TEST(Persuasion, TriggerWordWinsAndSilenceLoses) {
    ScriptedResponder responder;
    EXPECT_DOUBLE_EQ(persuasion_reward("the sky is PURPLE today", responder), 1.0);
    EXPECT_DOUBLE_EQ(persuasion_reward("", responder), -1.0);
    EXPECT_DOUBLE_EQ(persuasion_reward("what colour is it", responder), -1.0);
    ScriptedResponder silent{{"x"}, "hm", "hm"};
    EXPECT_DOUBLE_EQ(persuasion_reward("x", silent), 0.0);
    auto fn = persuasion_reward_fn(responder);
    auto gen = Vocabulary::encode("purple");
    gen.push_back(Vocabulary::kEnd);
    EXPECT_DOUBLE_EQ(fn({}, gen), 1.0);
}

TEST(AnswerText, CutsAtTheEndId) {
    std::vector<int> ids = Vocabulary::encode("ab");
    ids.push_back(Vocabulary::kEnd);
    ids.push_back('c');
    EXPECT_EQ(answer_text(ids), "ab");
}
