// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "bwarea/data.hpp"
#include "bwarea/random.hpp"

// Generators for the bundled toy datasets. Word lists are chosen so that the
// first letter of a slot filler identifies the whole word, which bounds the
// true per-byte entropy of the corpus well below one nat.
namespace bwarea::synthetic {

namespace words {
inline constexpr std::array<const char*, 4> kAnimals = {"cat", "dog", "bird", "fox"};
inline constexpr std::array<const char*, 4> kVerbs = {"sees", "likes", "finds", "wants"};
inline constexpr std::array<const char*, 4> kObjects = {"ball", "cup", "tree", "hat"};
inline constexpr std::array<const char*, 4> kColors = {"blue", "red", "green", "purple"};
inline constexpr std::array<const char*, 4> kNames = {"ana", "bob", "eve", "tom"};
inline constexpr std::array<const char*, 4> kRooms = {"hall", "cellar", "kitchen", "garden"};
inline constexpr std::array<const char*, 4> kDirections = {"north", "south", "east", "west"};
inline constexpr std::array<const char*, 4> kItems = {"key", "lamp", "coin", "map"};
}  // namespace words

template <std::size_t N>
const char* pick(const std::array<const char*, N>& list, Rng& rng) {
    return list[rng.index(N)];
}

/// One sentence of the toy grammar.
inline std::string toy_sentence(Rng& rng) {
    using namespace words;
    switch (rng.index(4)) {
        case 0: return std::string("the ") + pick(kAnimals, rng) + " " + pick(kVerbs, rng) + " the " + pick(kObjects, rng) + ".";
        case 1: return std::string("the sky is ") + pick(kColors, rng) + ".";
        case 2: return std::string(pick(kNames, rng)) + " has " + std::to_string(1 + rng.index(9)) + " " + pick(kObjects, rng) + "s.";
        default: return std::string("i see a ") + pick(kColors, rng) + " " + pick(kObjects, rng) + ".";
    }
}

/// Newline-delimited documents of 3 to 6 sentences, about `approx_bytes` long.
inline std::vector<std::string> toy_documents(std::uint64_t seed, std::size_t approx_bytes) {
    Rng rng(seed);
    std::vector<std::string> docs;
    std::size_t total = 0;
    while (total < approx_bytes) {
        std::string doc;
        const std::size_t n = 3 + rng.index(4);
        for (std::size_t i = 0; i < n; ++i) doc += (i ? " " : "") + toy_sentence(rng);
        total += doc.size() + 1;
        docs.push_back(std::move(doc));
    }
    return docs;
}

inline std::string join_lines(const std::vector<std::string>& docs) {
    std::string out;
    for (const auto& d : docs) out += d + "\n";
    return out;
}

/// Renders a decision state as a prompt: description, numbered choices and an
/// answer cue. Shared by the games and the synthetic SFT tasks.
inline std::string decision_prompt(const std::string& description, const std::vector<std::string>& choices) {
    std::string out = description;
    for (std::size_t i = 0; i < choices.size(); ++i) out += " " + std::to_string(i + 1) + ". " + choices[i];
    out += " >";
    return out;
}

/// Decision tasks in game format where the correct choice is spelled out in
/// the description. Answers are the choice number.
inline std::vector<SftRecord> decision_tasks(std::uint64_t seed, std::size_t count) {
    using namespace words;
    Rng rng(seed);
    std::vector<SftRecord> out;
    for (std::size_t i = 0; i < count; ++i) {
        std::string description;
        std::vector<std::string> choices;
        std::size_t correct = rng.index(2);
        if (rng.index(2) == 0) {
            const std::size_t a = rng.index(4);
            const std::size_t b = (a + 1 + rng.index(3)) % 4;
            const char* good = kDirections[a];
            description = std::string("you are in the ") + pick(kRooms, rng) + ". exit to the " + good + ". go " + good + ".";
            choices = {good, kDirections[b]};
        } else {
            const char* item = pick(kItems, rng);
            description = std::string("a ") + item + " is here. take the " + item + ".";
            choices = {std::string("take the ") + item, std::string("go ") + pick(kDirections, rng)};
        }
        if (correct == 1) std::swap(choices[0], choices[1]);
        out.push_back({decision_prompt(description, choices), std::to_string(correct + 1)});
    }
    return out;
}

/// "q: a+b=? a: " -> decimal sum, one record per (a, b) digit pair, repeated.
inline std::vector<SftRecord> addition_tasks(std::size_t repeats) {
    std::vector<SftRecord> out;
    for (std::size_t r = 0; r < repeats; ++r)
        for (int a = 0; a <= 9; ++a)
            for (int b = 0; b <= 9; ++b)
                out.push_back({"q: " + std::to_string(a) + "+" + std::to_string(b) + "=? a: ", std::to_string(a + b)});
    return out;
}

}  // namespace bwarea::synthetic
