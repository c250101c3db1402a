// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bwarea/data.hpp"
#include "bwarea/synthetic.hpp"
#include "bwarea/training.hpp"

namespace bwarea {

class GameFormatError : public std::runtime_error {
   public:
    GameFormatError(const std::string& where, std::size_t line, const std::string& what)
        : std::runtime_error(where + ":" + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

   private:
    std::size_t line_;
};

class GameValidationError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

struct GameState {
    std::string description;
    std::vector<std::string> choices;
    std::size_t correct = 0;  // 0-based
    bool operator==(const GameState&) const = default;
};

struct GameRewards {
    double correct = 1.0;
    double incorrect = -1.0;
    double out_of_space = 0.0;
    bool operator==(const GameRewards&) const = default;
};

/// Multi-state decision game: answering state i correctly moves to state i+1.
struct DecisionGame {
    std::string name;
    std::vector<GameState> states;
    GameRewards rewards;

    bool operator==(const DecisionGame&) const = default;

    std::size_t size() const { return states.size(); }
    double optimal_return() const { return rewards.correct * static_cast<double>(states.size()); }
    std::size_t max_steps() const { return 4 * states.size(); }

    void validate() const {
        if (states.empty()) throw GameValidationError("game '" + name + "' has no states");
        for (std::size_t i = 0; i < states.size(); ++i) {
            const auto& s = states[i];
            if (s.choices.size() < 2)
                throw GameValidationError("state " + std::to_string(i + 1) + " needs at least two choices");
            if (s.correct >= s.choices.size())
                throw GameValidationError("state " + std::to_string(i + 1) + " has no valid correct choice");
        }
    }

    /// Prompt shown to the agent in state i.
    std::string prompt(std::size_t i) const {
        return synthetic::decision_prompt(states.at(i).description, states.at(i).choices);
    }
};

// ----------------------------------------------------------------- format

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::string fold(std::string_view s) {
    std::string out;
    bool space = false;
    for (char c : trim(s)) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = true;
            continue;
        }
        if (space && !out.empty()) out += ' ';
        space = false;
        out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    while (!out.empty() && (out.back() == '.' || out.back() == '!')) out.pop_back();
    return out;
}

inline double parse_number(const std::string& v, const std::string& where, std::size_t line) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw GameFormatError(where, line, "expected a number, got '" + v + "'");
    }
}

}  // namespace detail

/// Parses the line-oriented game format:
///
///     name = custom
///     reward.correct = 1
///     [state]
///     description = ...
///     choice = ...
///     correct = 2
///
/// `correct` is 1-based. Lines starting with '#' are comments.
inline DecisionGame parse_game(std::istream& in, const std::string& where = "<game>") {
    DecisionGame g;
    std::map<std::size_t, std::size_t> correct_count;  // state -> number of correct= lines
    std::string raw;
    std::size_t lineno = 0;
    GameState* cur = nullptr;
    while (std::getline(in, raw)) {
        ++lineno;
        const std::string line = detail::trim(raw);
        if (line.empty() || line[0] == '#') continue;
        if (line == "[state]") {
            g.states.emplace_back();
            g.states.back().correct = static_cast<std::size_t>(-1);
            cur = &g.states.back();
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw GameFormatError(where, lineno, "expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
        if (!cur) {
            if (key == "name") g.name = value;
            else if (key == "reward.correct") g.rewards.correct = detail::parse_number(value, where, lineno);
            else if (key == "reward.incorrect") g.rewards.incorrect = detail::parse_number(value, where, lineno);
            else if (key == "reward.out_of_space") g.rewards.out_of_space = detail::parse_number(value, where, lineno);
            else throw GameFormatError(where, lineno, "unknown header key '" + key + "'");
            continue;
        }
        if (key == "description") {
            cur->description = value;
        } else if (key == "choice") {
            if (value.empty()) throw GameFormatError(where, lineno, "empty choice");
            cur->choices.push_back(value);
        } else if (key == "correct") {
            const double k = detail::parse_number(value, where, lineno);
            if (k < 1 || k != std::floor(k)) throw GameFormatError(where, lineno, "correct must be a positive integer");
            cur->correct = static_cast<std::size_t>(k) - 1;
            ++correct_count[g.states.size() - 1];
        } else {
            throw GameFormatError(where, lineno, "unknown state key '" + key + "'");
        }
    }
    for (std::size_t i = 0; i < g.states.size(); ++i) {
        const auto n = correct_count[i];
        if (n == 0) throw GameValidationError(where + ": state " + std::to_string(i + 1) + " has no correct choice");
        if (n > 1) throw GameValidationError(where + ": state " + std::to_string(i + 1) + " has more than one correct choice");
    }
    g.validate();
    return g;
}

inline DecisionGame load_game(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return parse_game(in, path.string());
}

inline std::string format_game(const DecisionGame& g) {
    std::ostringstream out;
    out.precision(17);
    out << "name = " << g.name << "\n";
    out << "reward.correct = " << g.rewards.correct << "\n";
    out << "reward.incorrect = " << g.rewards.incorrect << "\n";
    out << "reward.out_of_space = " << g.rewards.out_of_space << "\n";
    for (const auto& s : g.states) {
        out << "\n[state]\ndescription = " << s.description << "\n";
        for (const auto& c : s.choices) out << "choice = " << c << "\n";
        out << "correct = " << s.correct + 1 << "\n";
    }
    return out.str();
}

inline void save_game(const std::filesystem::path& path, const DecisionGame& g) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << format_game(g);
}

// -------------------------------------------------------------- stepping

enum class AnswerOutcome { kCorrect, kIncorrect, kOutOfSpace };

/// Maps a free-form answer to a choice index, or -1. Accepts the choice
/// number (optionally followed by '.', ')' or ':' and the choice text) or the
/// choice text alone; comparison is trimmed and case-folded.
inline int match_choice(const GameState& s, std::string_view answer) {
    const std::string a = detail::fold(answer);
    std::size_t i = 0;
    while (i < a.size() && std::isdigit(static_cast<unsigned char>(a[i]))) ++i;
    if (i > 0 && i <= 3) {
        const std::size_t k = std::stoul(a.substr(0, i));
        std::size_t j = i;
        if (j < a.size() && (a[j] == '.' || a[j] == ')' || a[j] == ':')) ++j;
        const std::string rest = detail::trim(a.substr(j));
        if (k >= 1 && k <= s.choices.size() && (rest.empty() || rest == detail::fold(s.choices[k - 1])))
            return static_cast<int>(k - 1);
        return -1;
    }
    for (std::size_t c = 0; c < s.choices.size(); ++c)
        if (a == detail::fold(s.choices[c])) return static_cast<int>(c);
    return -1;
}

struct StepResult {
    double reward = 0;
    std::size_t next_state = 0;
    bool done = false;
    AnswerOutcome outcome = AnswerOutcome::kOutOfSpace;
};

inline StepResult game_step(const DecisionGame& g, std::size_t state, std::string_view answer) {
    if (state >= g.states.size()) throw std::out_of_range("game_step: state index out of range");
    const int c = match_choice(g.states[state], answer);
    if (c < 0) return {g.rewards.out_of_space, state, false, AnswerOutcome::kOutOfSpace};
    if (static_cast<std::size_t>(c) == g.states[state].correct)
        return {g.rewards.correct, state + 1, state + 1 == g.states.size(), AnswerOutcome::kCorrect};
    return {g.rewards.incorrect, state, false, AnswerOutcome::kIncorrect};
}

struct EpisodeResult {
    double total_return = 0;
    std::size_t steps = 0;
    bool completed = false;
    bool truncated = false;
    std::vector<std::pair<std::size_t, std::string>> transcript;  // (state, answer)
};

/// Agent callback: receives the state index and its prompt, returns an answer.
using GameAgent = std::function<std::string(std::size_t state, const std::string& prompt)>;

/// Plays until the last state is solved or the step budget (default 4N) runs out.
inline EpisodeResult run_episode(const DecisionGame& g, const GameAgent& agent, std::size_t max_steps = 0) {
    if (max_steps == 0) max_steps = g.max_steps();
    EpisodeResult r;
    std::size_t state = 0;
    while (r.steps < max_steps) {
        const std::string answer = agent(state, g.prompt(state));
        r.transcript.emplace_back(state, answer);
        const auto st = game_step(g, state, answer);
        r.total_return += st.reward;
        ++r.steps;
        state = st.next_state;
        if (st.done) {
            r.completed = true;
            return r;
        }
    }
    r.truncated = true;
    return r;
}

/// Text of a generated answer: everything before the first end id.
inline std::string answer_text(std::span<const int> generated) {
    std::vector<int> ids;
    for (int id : generated) {
        if (id == Vocabulary::kEnd) break;
        ids.push_back(id);
    }
    return Vocabulary::decode(ids);
}

/// Reward for single-state RL episodes: the prompt identifies the state and
/// the generated answer is scored by game_step. Unknown prompts throw.
inline RewardFn game_reward(const DecisionGame& g) {
    std::map<std::string, std::size_t> by_prompt;
    for (std::size_t i = 0; i < g.size(); ++i) by_prompt.emplace(g.prompt(i), i);
    return [g, by_prompt](std::span<const int> prompt, std::span<const int> generated) {
        const auto it = by_prompt.find(Vocabulary::decode(prompt));
        if (it == by_prompt.end()) throw std::invalid_argument("prompt does not belong to game '" + g.name + "'");
        return game_step(g, it->second, answer_text(generated)).reward;
    };
}

/// SFT records teaching the answer format: one record per (state, choice),
/// answer = choice number. Correctness is left to RL.
inline std::vector<SftRecord> game_format_records(const DecisionGame& g) {
    std::vector<SftRecord> out;
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t c = 0; c < g.states[i].choices.size(); ++c) out.push_back({g.prompt(i), std::to_string(c + 1)});
    return out;
}

// ------------------------------------------------------------- persuasion

/// Deterministic stand-in for a target language model: replies with the
/// target phrase when the input contains a trigger, the default otherwise.
struct ScriptedResponder {
    std::vector<std::string> triggers{"purple"};
    std::string target_reply = "ok, the sky is purple.";
    std::string default_reply = "the sky is blue.";

    std::string respond(std::string_view input) const {
        const std::string folded = detail::fold(input);
        for (const auto& t : triggers)
            if (folded.find(detail::fold(t)) != std::string::npos) return target_reply;
        return default_reply;
    }
};

struct PersuasionPhrases {
    std::string target = "sky is purple";
    std::string fallback = "sky is blue";
};

inline double persuasion_reward(std::string_view generated_text, const ScriptedResponder& responder,
                                const PersuasionPhrases& phrases = {}) {
    const std::string reply = responder.respond(generated_text);
    if (reply.find(phrases.target) != std::string::npos) return 1.0;
    if (reply.find(phrases.fallback) != std::string::npos) return -1.0;
    return 0.0;
}

inline RewardFn persuasion_reward_fn(ScriptedResponder responder, PersuasionPhrases phrases = {}) {
    return [responder = std::move(responder), phrases = std::move(phrases)](std::span<const int>,
                                                                            std::span<const int> generated) {
        return persuasion_reward(answer_text(generated), responder, phrases);
    };
}

}  // namespace bwarea
