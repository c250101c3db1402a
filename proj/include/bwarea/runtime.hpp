// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fcntl.h>
#include <unistd.h>

#include "json.hpp"

#include "bwarea/checkpoint.hpp"
#include "bwarea/data.hpp"
#include "bwarea/environments.hpp"
#include "bwarea/evaluation.hpp"
#include "bwarea/generation.hpp"
#include "bwarea/training.hpp"

namespace bwarea {

class ConfigError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

class StageOrderError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class StageError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// ----------------------------------------------------------------- logging

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

/// Verbosity from BWAREA_LOG_LEVEL (error, warn, info, debug); default info.
inline LogLevel log_level_from_env() {
    const char* v = std::getenv("BWAREA_LOG_LEVEL");
    if (!v) return LogLevel::kInfo;
    const std::string s = detail::fold(v);
    if (s == "error") return LogLevel::kError;
    if (s == "warn" || s == "warning") return LogLevel::kWarn;
    if (s == "debug") return LogLevel::kDebug;
    return LogLevel::kInfo;
}

/// Console messages plus an append-only JSONL run log.
class RunLog {
   public:
    explicit RunLog(const std::filesystem::path& path = {}, LogLevel level = log_level_from_env()) : level_(level) {
        if (!path.empty()) {
            if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
            file_.open(path, std::ios::app);
            if (!file_) throw ConfigError("cannot open run log " + path.string());
        }
    }

    void message(LogLevel level, const std::string& text) const {
        if (level > level_) return;
        static const char* names[] = {"error", "warn", "info", "debug"};
        std::cerr << "[" << names[static_cast<int>(level)] << "] " << text << "\n";
    }

    void record(const nlohmann::json& j) {
        if (file_) file_ << j.dump() << "\n" << std::flush;
    }

    void report(const LossReport& r) {
        record(r.to_json());
        for (const auto& e : r.events) message(e.rfind("warning", 0) == 0 ? LogLevel::kWarn : LogLevel::kInfo, r.stage + ": " + e);
    }

   private:
    LogLevel level_;
    std::ofstream file_;
};

/// Parses every record of a JSONL run log.
inline std::vector<nlohmann::json> read_run_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<nlohmann::json> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(nlohmann::json::parse(line));
    return out;
}

// ------------------------------------------------------------------ locks

/// Exclusive ownership of a checkpoint directory for the lifetime of a run.
class DirectoryLock {
   public:
    explicit DirectoryLock(const std::filesystem::path& dir) : path_(dir / ".bwarea.lock") {
        std::filesystem::create_directories(dir);
        const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0) throw StageError("checkpoint directory " + dir.string() + " is locked by another run (" + path_.string() + ")");
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
        ::close(fd);
    }
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;
    ~DirectoryLock() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }

   private:
    std::filesystem::path path_;
};

// ------------------------------------------------------------------ config

inline const std::vector<std::string>& known_stages() {
    static const std::vector<std::string> s{"pretrain1", "pretrain2", "sft", "rl", "eval", "generate", "probe"};
    return s;
}

/// Position of a training stage in the pipeline; -1 for non-training stages.
inline int stage_rank(const std::string& stage) {
    if (stage == "init") return 0;
    if (stage == "pretrain1") return 1;
    if (stage == "pretrain2") return 2;
    if (stage == "sft") return 3;
    if (stage == "rl") return 4;
    return -1;
}

struct Paths {
    std::string corpus, heldout, sft, game, checkpoint_in, checkpoint_out, log, trace_out, eval_out;
};

struct RlOptions {
    std::string task = "game";  // game | persuasion
    std::size_t iterations = 20000;
    std::size_t prompts_per_update = 0;  // 0 = every game state
    std::size_t eval_every = 25;
    bool stop_at_optimal = true;
    bool baseline = false;  // also train the baseline at token level
    std::size_t baseline_iterations = 0;  // 0 = same budget as the latent policy
    std::string persuasion_prompt = "the sky is ";
};

struct GenerateOptions {
    std::string prompt;
    std::size_t max_len = 64;
    bool sample = false;
    double temperature = 1.0;
    std::vector<int> actions;  // probe overrides
    bool interactive = false;
    std::size_t top_k = 5;
};

struct RunConfig {
    std::string stage = "pretrain1";
    std::uint64_t seed = 1;
    ModelConfig model;
    TrainConfig train;
    Paths paths;
    bool train_baseline = true;
    std::size_t checkpoint_every = 0;
    RlOptions rl;
    GenerateOptions generate;
    EvalOptions eval;
    bool force = false;
    bool deterministic = true;

    /// Throws ConfigError naming the first problem found.
    void validate() const {
        if (std::find(known_stages().begin(), known_stages().end(), stage) == known_stages().end())
            throw ConfigError("unknown stage '" + stage + "'");
        try {
            model.validate();
            train.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        auto need = [](const std::string& p, const char* what) {
            if (p.empty()) throw ConfigError(std::string("missing path: ") + what);
            if (!std::filesystem::exists(p)) throw ConfigError(std::string(what) + " does not exist: " + p);
        };
        if (stage == "pretrain1" || stage == "pretrain2") need(paths.corpus, "corpus");
        if (stage == "sft") need(paths.sft, "sft");
        if (stage == "rl" && rl.task == "game") need(paths.game, "game");
        if (stage == "rl" && rl.task != "game" && rl.task != "persuasion") throw ConfigError("unknown rl task '" + rl.task + "'");
        if (stage != "pretrain1" || !paths.checkpoint_in.empty()) need(paths.checkpoint_in, "checkpoint_in");
        if (stage == "eval") need(paths.heldout, "heldout");
        if (stage_rank(stage) > 0 && paths.checkpoint_out.empty()) throw ConfigError("missing path: checkpoint_out");
    }
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
    j = {{"stage", c.stage},
         {"seed", c.seed},
         {"model", c.model},
         {"train", c.train},
         {"paths",
          {{"corpus", c.paths.corpus},
           {"heldout", c.paths.heldout},
           {"sft", c.paths.sft},
           {"game", c.paths.game},
           {"checkpoint_in", c.paths.checkpoint_in},
           {"checkpoint_out", c.paths.checkpoint_out},
           {"log", c.paths.log},
           {"trace_out", c.paths.trace_out},
           {"eval_out", c.paths.eval_out}}},
         {"train_baseline", c.train_baseline},
         {"checkpoint_every", c.checkpoint_every},
         {"rl",
          {{"task", c.rl.task},
           {"iterations", c.rl.iterations},
           {"prompts_per_update", c.rl.prompts_per_update},
           {"eval_every", c.rl.eval_every},
           {"stop_at_optimal", c.rl.stop_at_optimal},
           {"baseline", c.rl.baseline},
           {"baseline_iterations", c.rl.baseline_iterations},
           {"persuasion_prompt", c.rl.persuasion_prompt}}},
         {"generate",
          {{"prompt", c.generate.prompt},
           {"max_len", c.generate.max_len},
           {"sample", c.generate.sample},
           {"temperature", c.generate.temperature},
           {"actions", c.generate.actions},
           {"interactive", c.generate.interactive},
           {"top_k", c.generate.top_k}}},
         {"eval", {{"seq_len", c.eval.seq_len}, {"batch", c.eval.batch}, {"max_segments", c.eval.max_segments}}},
         {"force", c.force},
         {"deterministic", c.deterministic}};
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
    RunConfig d;
    c.stage = j.value("stage", d.stage);
    c.seed = j.value("seed", d.seed);
    c.model = j.value("model", nlohmann::json::object()).get<ModelConfig>();
    c.train = j.value("train", nlohmann::json::object()).get<TrainConfig>();
    const auto p = j.value("paths", nlohmann::json::object());
    c.paths.corpus = p.value("corpus", "");
    c.paths.heldout = p.value("heldout", "");
    c.paths.sft = p.value("sft", "");
    c.paths.game = p.value("game", "");
    c.paths.checkpoint_in = p.value("checkpoint_in", "");
    c.paths.checkpoint_out = p.value("checkpoint_out", "");
    c.paths.log = p.value("log", "");
    c.paths.trace_out = p.value("trace_out", "");
    c.paths.eval_out = p.value("eval_out", "");
    c.train_baseline = j.value("train_baseline", d.train_baseline);
    c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
    const auto rl = j.value("rl", nlohmann::json::object());
    c.rl.task = rl.value("task", d.rl.task);
    c.rl.iterations = rl.value("iterations", d.rl.iterations);
    c.rl.prompts_per_update = rl.value("prompts_per_update", d.rl.prompts_per_update);
    c.rl.eval_every = rl.value("eval_every", d.rl.eval_every);
    c.rl.stop_at_optimal = rl.value("stop_at_optimal", d.rl.stop_at_optimal);
    c.rl.baseline = rl.value("baseline", d.rl.baseline);
    c.rl.baseline_iterations = rl.value("baseline_iterations", d.rl.baseline_iterations);
    c.rl.persuasion_prompt = rl.value("persuasion_prompt", d.rl.persuasion_prompt);
    const auto g = j.value("generate", nlohmann::json::object());
    c.generate.prompt = g.value("prompt", d.generate.prompt);
    c.generate.max_len = g.value("max_len", d.generate.max_len);
    c.generate.sample = g.value("sample", d.generate.sample);
    c.generate.temperature = g.value("temperature", d.generate.temperature);
    c.generate.actions = g.value("actions", d.generate.actions);
    c.generate.interactive = g.value("interactive", d.generate.interactive);
    c.generate.top_k = g.value("top_k", d.generate.top_k);
    const auto e = j.value("eval", nlohmann::json::object());
    c.eval.seq_len = e.value("seq_len", d.eval.seq_len);
    c.eval.batch = e.value("batch", d.eval.batch);
    c.eval.max_segments = e.value("max_segments", d.eval.max_segments);
    c.force = j.value("force", d.force);
    c.deterministic = j.value("deterministic", d.deterministic);
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    try {
        return nlohmann::json::parse(read_file(path)).get<RunConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

/// Hash of everything that shapes the learned weights: model and training
/// hyperparameters plus the seed. Paths and output options are excluded.
inline std::string config_hash(const RunConfig& c) {
    const std::string s = nlohmann::json{{"model", c.model}, {"train", c.train}, {"seed", c.seed}}.dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Refuses out-of-order stage transitions and config changes on resume.
inline void check_stage_order(const RunConfig& cfg, const Provenance& prov) {
    if (cfg.force) return;
    const int have = stage_rank(prov.stage);
    const int want = stage_rank(cfg.stage);
    auto require = [&](int min_rank, const char* what) {
        if (have < min_rank)
            throw StageOrderError("stage " + cfg.stage + " needs a checkpoint from " + what + " or later, got '" +
                                  prov.stage + "' (use --force to override)");
    };
    if (cfg.stage == "pretrain2") require(1, "pretrain1");
    if (cfg.stage == "sft") require(2, "pretrain2");
    if (cfg.stage == "rl") require(2, "pretrain2");
    if (want > 0 && want < have)
        throw StageOrderError("stage " + cfg.stage + " would run after later stage '" + prov.stage +
                              "' (use --force to override)");
    if (want > 0 && prov.stage == cfg.stage && !prov.config_hash.empty() && prov.config_hash != config_hash(cfg))
        throw StageOrderError("resuming stage " + cfg.stage + " with a different configuration (checkpoint " +
                              prov.config_hash + ", run " + config_hash(cfg) + "); use --force to override");
}

// ------------------------------------------------------------------ stages

using Models = ModelBundle<float>;

struct RunState {
    RunConfig cfg;
    Models models;
    Provenance provenance;
    std::map<std::string, Adam<float>> optimizers;
    RunLog log;

    Adam<float>& optimizer(const std::string& key, double lr, const Checkpoint* ck) {
        auto it = optimizers.find(key);
        if (it != optimizers.end()) return it->second;
        auto& opt = optimizers.emplace(key, Adam<float>(AdamConfig{lr})).first->second;
        if (ck) load_optimizer(*ck, key, opt);
        return opt;
    }

    Checkpoint snapshot(std::uint64_t step) const {
        Provenance p{cfg.stage, step, cfg.seed, config_hash(cfg)};
        auto ck = make_checkpoint(models, p);
        for (const auto& [k, o] : optimizers) store_optimizer(ck, k, o);
        return ck;
    }

    void save(std::uint64_t step) const {
        if (!cfg.paths.checkpoint_out.empty()) save_checkpoint(cfg.paths.checkpoint_out, snapshot(step));
    }
};

namespace detail {

inline void maybe_checkpoint(RunState& st, std::size_t step) {
    if (st.cfg.checkpoint_every && step % st.cfg.checkpoint_every == 0) st.save(step);
}

/// Checkpoint optimizer state only when resuming the same stage.
inline const Checkpoint* resume_source(const RunState& st, const std::optional<Checkpoint>& ck) {
    return ck && ck->provenance.stage == st.cfg.stage ? &*ck : nullptr;
}

inline void stage_pretrain1(RunState& st, const std::optional<Checkpoint>& ck) {
    auto& c = st.cfg;
    const auto corpus = load_corpus(c.paths.corpus);
    BatchStream stream(corpus, c.train.seq_len, c.train.batch_size, c.seed);
    auto& opt = st.optimizer("world_inverse", c.train.lr_world, resume_source(st, ck));
    auto& bopt = st.optimizer("baseline", c.train.lr_baseline, resume_source(st, ck));
    CodeUsage usage;
    for (std::size_t s = 1; s <= c.train.steps; ++s) {
        const auto batch = stream.next();
        st.log.report(pretrain_step1(batch, st.models.world, st.models.inverse, opt, c.train, {}, &usage));
        if (c.train_baseline) st.log.report(baseline_step(batch, st.models.baseline, bopt, c.train));
        if (s % 25 == 0) st.log.message(LogLevel::kInfo, "pretrain1 step " + std::to_string(s));
        maybe_checkpoint(st, s);
    }
}

inline void stage_pretrain2(RunState& st, const std::optional<Checkpoint>& ck) {
    auto& c = st.cfg;
    const auto corpus = load_corpus(c.paths.corpus);
    BatchStream stream(corpus, c.train.seq_len, c.train.batch_size, c.seed + 1);
    auto& opt = st.optimizer("policy", c.train.lr_policy, resume_source(st, ck));
    for (std::size_t s = 1; s <= c.train.steps; ++s) {
        st.log.report(pretrain_step2(stream.next(), st.models.inverse, st.models.policy, opt, c.train));
        if (s % 25 == 0) st.log.message(LogLevel::kInfo, "pretrain2 step " + std::to_string(s));
        maybe_checkpoint(st, s);
    }
}

/// Step 1 epochs (world + inverse) then step 2 epochs (policy), each over the
/// answer-masked SFT set; the baseline is fine-tuned alongside step 1.
inline void stage_sft(RunState& st, const std::optional<Checkpoint>& ck) {
    auto& c = st.cfg;
    const auto records = load_sft_records(c.paths.sft);
    if (records.empty()) throw DataError("SFT file has no records");
    auto& opt1 = st.optimizer("sft1", c.train.lr_world, resume_source(st, ck));
    auto& opt2 = st.optimizer("sft2", c.train.lr_policy, resume_source(st, ck));
    auto& bopt = st.optimizer("sft_baseline", c.train.lr_baseline, resume_source(st, ck));
    std::size_t step = 0;
    CodeUsage usage;
    for (int phase = 1; phase <= 2; ++phase)
        for (std::size_t e = 0; e < c.train.epochs; ++e)
            for (const auto& b : sft_batches(records, c.train.sft_max_len, c.train.batch_size, c.seed + 7 * e + phase)) {
                ++step;
                auto& m = st.models;
                st.log.report(sft_step(b, m.world, m.inverse, m.policy, phase == 1 ? opt1 : opt2, c.train, phase, &usage));
                if (phase == 1 && c.train_baseline)
                    st.log.report(baseline_step(b.tokens, m.baseline, bopt, c.train, b.mask, "sft_baseline"));
                maybe_checkpoint(st, step);
            }
}

}  // namespace detail

/// Greedy game agent backed by the latent-action model.
inline GameAgent latent_agent(const Models& m, std::size_t max_len) {
    return [&m, max_len](std::size_t, const std::string& prompt) {
        Rng rng(0);
        const auto ids = Vocabulary::encode(prompt);
        RolloutOptions o{DecodeMode::kGreedy, DecodeMode::kGreedy, max_len, 1.0};
        return answer_text(rollout(std::span<const int>(ids), m.world, m.inverse, m.policy, o, rng).generated);
    };
}

/// Greedy game agent backed by the baseline model.
inline GameAgent baseline_agent(const Models& m, std::size_t max_len) {
    return [&m, max_len](std::size_t, const std::string& prompt) {
        Rng rng(0);
        const auto ids = Vocabulary::encode(prompt);
        return answer_text(rollout_baseline(std::span<const int>(ids), m.baseline, DecodeMode::kGreedy, max_len, 1.0, rng).generated);
    };
}

struct RlOutcome {
    std::size_t iterations = 0;
    double greedy_return = 0;
    double optimal_return = 0;
    double baseline_return = 0;
    std::size_t baseline_iterations = 0;
};

namespace detail {

inline RlOutcome stage_rl(RunState& st, const std::optional<Checkpoint>& ck) {
    auto& c = st.cfg;
    auto& m = st.models;
    Rng rng(c.seed + 11);
    auto& opt = st.optimizer("rl", c.train.lr_rl, resume_source(st, ck));
    RlOutcome out;
    std::vector<std::vector<int>> prompts;
    RewardFn reward;
    std::optional<DecisionGame> game;
    if (c.rl.task == "game") {
        game = load_game(c.paths.game);
        for (std::size_t i = 0; i < game->size(); ++i) prompts.push_back(Vocabulary::encode(game->prompt(i)));
        reward = game_reward(*game);
        out.optimal_return = game->optimal_return();
    } else {
        prompts.push_back(Vocabulary::encode(c.rl.persuasion_prompt));
        reward = persuasion_reward_fn(ScriptedResponder{});
        out.optimal_return = 1.0;
    }
    auto pick = [&](Rng& r) {
        if (c.rl.prompts_per_update == 0 || c.rl.prompts_per_update >= prompts.size()) return prompts;
        std::vector<std::vector<int>> sub;
        for (std::size_t i = 0; i < c.rl.prompts_per_update; ++i) sub.push_back(prompts[r.index(prompts.size())]);
        return sub;
    };
    auto evaluate = [&](const GameAgent& agent) {
        if (game) return run_episode(*game, agent).total_return;
        return reward(prompts[0], Vocabulary::encode(agent(0, c.rl.persuasion_prompt)));
    };
    const std::size_t every = std::max<std::size_t>(1, c.rl.eval_every);
    out.greedy_return = evaluate(latent_agent(m, c.train.max_gen));
    for (std::size_t it = 1; it <= c.rl.iterations; ++it) {
        if (c.rl.stop_at_optimal && out.greedy_return >= out.optimal_return) break;
        auto r = rl_update(pick(rng), m.world, m.inverse, m.policy, reward, opt, c.train, rng);
        out.iterations = it;
        if (it % every == 0) {
            out.greedy_return = evaluate(latent_agent(m, c.train.max_gen));
            st.log.record({{"stage", "rl"}, {"iteration", it}, {"greedy_return", out.greedy_return}});
            st.log.message(LogLevel::kInfo, "rl iteration " + std::to_string(it) + " return " + std::to_string(out.greedy_return));
        }
        st.log.report(r);
        maybe_checkpoint(st, it);
    }
    out.greedy_return = evaluate(latent_agent(m, c.train.max_gen));
    if (c.rl.baseline) {
        auto& bopt = st.optimizer("rl_baseline", c.train.lr_rl, resume_source(st, ck));
        Rng brng(c.seed + 13);
        out.baseline_return = evaluate(baseline_agent(m, c.train.max_gen));
        const std::size_t budget = c.rl.baseline_iterations ? c.rl.baseline_iterations : c.rl.iterations;
        for (std::size_t it = 1; it <= budget; ++it) {
            if (c.rl.stop_at_optimal && out.baseline_return >= out.optimal_return) break;
            st.log.report(rl_update_baseline(pick(brng), m.baseline, reward, bopt, c.train, brng));
            out.baseline_iterations = it;
            if (it % every == 0) out.baseline_return = evaluate(baseline_agent(m, c.train.max_gen));
        }
        out.baseline_return = evaluate(baseline_agent(m, c.train.max_gen));
    }
    st.log.record({{"stage", "rl"},
                   {"summary", true},
                   {"iterations", out.iterations},
                   {"greedy_return", out.greedy_return},
                   {"optimal_return", out.optimal_return},
                   {"baseline_return", out.baseline_return},
                   {"baseline_iterations", out.baseline_iterations}});
    return out;
}

}  // namespace detail

/// Interactive action probe: each step shows the policy's top-k actions; the
/// user enters an action index to pin it, an empty line to take the policy's
/// choice, or "q" to stop. Returns the trace.
inline RolloutTrace probe_repl(std::istream& in, std::ostream& out, const Models& m, const std::string& prompt,
                               std::size_t max_len, std::size_t top_k) {
    RolloutTrace trace;
    trace.prompt = Vocabulary::encode(prompt);
    if (trace.prompt.empty()) throw std::invalid_argument("probe needs a non-empty prompt");
    trace.actions = prefix_actions(std::span<const int>(trace.prompt), m.inverse);
    std::vector<int> tokens = trace.prompt;
    for (std::size_t step = 0; step < max_len && tokens.size() <= m.config.max_context; ++step) {
        const auto top = policy_top_k(std::span<const int>(tokens), m.policy, top_k);
        out << "step " << step << " | " << Vocabulary::decode(tokens) << "\n  top actions:";
        for (const auto& [a, p] : top) out << " " << a << "(" << std::fixed << std::setprecision(3) << p << ")";
        out << "\n  action [enter = " << top.front().first << ", q = quit]: " << std::flush;
        std::string line;
        if (!std::getline(in, line) || detail::trim(line) == "q") break;
        int action = top.front().first;
        if (!detail::trim(line).empty()) {
            try {
                action = std::stoi(detail::trim(line));
            } catch (const std::exception&) {
                out << "  not a number\n";
                --step;
                continue;
            }
            if (action < 0 || static_cast<std::size_t>(action) >= m.config.num_codes) {
                out << "  action out of range [0, " << m.config.num_codes << ")\n";
                --step;
                continue;
            }
        }
        auto t = probe_actions(std::span<const int>(tokens), m.world, m.inverse, std::span<const int>(&action, 1), 1);
        const int tok = t.generated.at(0);
        trace.actions.push_back(action);
        trace.generated.push_back(tok);
        trace.token_logprobs.push_back(t.token_logprobs.at(0));
        tokens.push_back(tok);
        out << "  -> " << Vocabulary::token_name(tok) << "\n";
        if (tok == Vocabulary::kEnd) break;
    }
    out << "result: " << trace.generated_text() << "\n";
    return trace;
}

/// Executes one stage end to end. Returns 0 on success; on failure prints the
/// error with stage context and returns a non-zero status (2 configuration,
/// 3 stage order or contract, 1 anything else).
inline int run(RunConfig cfg, std::ostream& out = std::cout, std::istream& in = std::cin) {
    RunLog console;
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        console.message(LogLevel::kError, std::string("config: ") + e.what());
        return 2;
    }
    std::optional<DirectoryLock> lock;
    try {
        std::optional<Checkpoint> ck;
        if (!cfg.paths.checkpoint_in.empty()) ck = load_checkpoint(cfg.paths.checkpoint_in);
        if (ck && !(ck->model == cfg.model)) {
            if (!cfg.force) throw StageOrderError("checkpoint model hyperparameters differ from the configuration");
            cfg.model = ck->model;
        }
        RunState st{cfg, Models(cfg.model, cfg.seed), {}, {}, RunLog(cfg.paths.log)};
        if (ck) {
            check_stage_order(cfg, ck->provenance);
            restore_models(*ck, st.models);
            st.provenance = ck->provenance;
        }
        const bool training = stage_rank(cfg.stage) > 0;
        if (training && !cfg.paths.checkpoint_out.empty()) {
            const auto dir = std::filesystem::path(cfg.paths.checkpoint_out).parent_path();
            lock.emplace(dir.empty() ? std::filesystem::path(".") : dir);
        }
        st.log.record({{"stage", cfg.stage}, {"event", "start"}, {"config_hash", config_hash(cfg)}, {"config", cfg}});
        const auto t0 = std::chrono::steady_clock::now();
        std::uint64_t steps = 0;
        if (cfg.stage == "pretrain1") {
            detail::stage_pretrain1(st, ck);
            steps = cfg.train.steps;
        } else if (cfg.stage == "pretrain2") {
            detail::stage_pretrain2(st, ck);
            steps = cfg.train.steps;
        } else if (cfg.stage == "sft") {
            detail::stage_sft(st, ck);
        } else if (cfg.stage == "rl") {
            const auto r = detail::stage_rl(st, ck);
            steps = r.iterations;
            out << "rl: return " << r.greedy_return << " / " << r.optimal_return << " after " << r.iterations
                << " iterations";
            if (cfg.rl.baseline) out << "; baseline return " << r.baseline_return;
            out << "\n";
        } else if (cfg.stage == "eval") {
            const auto heldout = load_corpus(cfg.paths.heldout);
            auto rep = eval_lm(st.models.world, st.models.inverse, &st.models.baseline, heldout, cfg.eval);
            auto mix_opts = cfg.eval;
            if (!mix_opts.max_segments) mix_opts.max_segments = 4;
            const auto mix = marginal_vs_expected_ce(st.models.world, st.models.inverse, st.models.policy, heldout, mix_opts);
            rep.marginal_ce = mix.marginal;
            rep.expected_ce = mix.expected;
            out << rep.to_table();
            st.log.record({{"stage", "eval"}, {"report", rep.to_json()}});
            if (!cfg.paths.eval_out.empty()) std::ofstream(cfg.paths.eval_out) << rep.to_json().dump(2) << "\n";
        } else if (cfg.stage == "generate") {
            Rng rng(cfg.seed);
            const auto ids = Vocabulary::encode(cfg.generate.prompt);
            const auto mode = cfg.generate.sample ? DecodeMode::kSample : DecodeMode::kGreedy;
            RolloutOptions o{mode, mode, cfg.generate.max_len, cfg.generate.temperature};
            const auto trace = rollout(std::span<const int>(ids), st.models.world, st.models.inverse, st.models.policy, o, rng);
            out << cfg.generate.prompt << trace.generated_text() << "\n";
            if (!cfg.paths.trace_out.empty()) std::ofstream(cfg.paths.trace_out, std::ios::app) << trace.to_json().dump() << "\n";
        } else if (cfg.stage == "probe") {
            RolloutTrace trace;
            if (cfg.generate.interactive) {
                trace = probe_repl(in, out, st.models, cfg.generate.prompt, cfg.generate.max_len, cfg.generate.top_k);
            } else {
                if (cfg.generate.actions.empty()) throw ConfigError("probe needs --action or --interactive");
                const auto ids = Vocabulary::encode(cfg.generate.prompt);
                trace = probe_actions(std::span<const int>(ids), st.models.world, st.models.inverse,
                                      std::span<const int>(cfg.generate.actions), cfg.generate.max_len);
                out << cfg.generate.prompt << trace.generated_text() << "\n";
            }
            if (!cfg.paths.trace_out.empty()) std::ofstream(cfg.paths.trace_out, std::ios::app) << trace.to_json().dump() << "\n";
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (training) st.save(steps);
        st.log.record({{"stage", cfg.stage}, {"event", "end"}, {"seconds", secs}});
        return 0;
    } catch (const ConfigError& e) {
        console.message(LogLevel::kError, cfg.stage + ": " + e.what());
        return 2;
    } catch (const StageOrderError& e) {
        console.message(LogLevel::kError, cfg.stage + ": " + e.what());
        return 3;
    } catch (const ContractError& e) {
        console.message(LogLevel::kError, cfg.stage + ": contract violation: " + e.what());
        return 3;
    } catch (const std::exception& e) {
        console.message(LogLevel::kError, cfg.stage + ": " + e.what());
        return 1;
    }
}

}  // namespace bwarea
