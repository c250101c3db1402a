// SPDX-License-Identifier: Apache-2.0
// Command-line front end: one subcommand per stage plus a data generator.

#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "bwarea/bwarea.hpp"

namespace {

struct Overrides {
    std::string config, corpus, heldout, sft, game, checkpoint_in, checkpoint_out, log, trace_out, eval_out, task;
    std::string prompt;
    std::uint64_t seed = 0;
    std::size_t steps = 0, iterations = 0, max_len = 0;
    std::vector<int> actions;
    bool force = false, deterministic = false, sample = false, interactive = false, baseline = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "Random seed");
    cmd->add_option("--checkpoint-in", o.checkpoint_in, "Checkpoint to start from");
    cmd->add_option("--checkpoint-out", o.checkpoint_out, "Checkpoint to write");
    cmd->add_option("--log", o.log, "Append JSONL run records to this file");
    cmd->add_flag("--force", o.force, "Skip stage-order and config-hash checks");
    cmd->add_flag("--deterministic", o.deterministic, "Reference mode (single-threaded, bitwise reproducible)");
}

bwarea::RunConfig resolve(const std::string& stage, const Overrides& o) {
    bwarea::RunConfig c = o.config.empty() ? bwarea::RunConfig{} : bwarea::load_run_config(o.config);
    c.stage = stage;
    if (o.seed) c.seed = o.seed;
    if (o.steps) c.train.steps = o.steps;
    if (o.iterations) c.rl.iterations = o.iterations;
    if (o.max_len) c.generate.max_len = o.max_len;
    auto set = [](std::string& dst, const std::string& v) {
        if (!v.empty()) dst = v;
    };
    set(c.paths.corpus, o.corpus);
    set(c.paths.heldout, o.heldout);
    set(c.paths.sft, o.sft);
    set(c.paths.game, o.game);
    set(c.paths.checkpoint_in, o.checkpoint_in);
    set(c.paths.checkpoint_out, o.checkpoint_out);
    set(c.paths.log, o.log);
    set(c.paths.trace_out, o.trace_out);
    set(c.paths.eval_out, o.eval_out);
    set(c.rl.task, o.task);
    set(c.generate.prompt, o.prompt);
    if (!o.actions.empty()) c.generate.actions = o.actions;
    c.force = c.force || o.force;
    c.deterministic = true;  // the only kernel mode on this build
    c.generate.sample = c.generate.sample || o.sample;
    c.generate.interactive = c.generate.interactive || o.interactive;
    c.rl.baseline = c.rl.baseline || o.baseline;
    return c;
}

int make_data(const std::filesystem::path& dir, std::uint64_t seed) {
    namespace syn = bwarea::synthetic;
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "toy_corpus.txt") << syn::join_lines(syn::toy_documents(seed, 200000));
    std::ofstream(dir / "toy_heldout.txt") << syn::join_lines(syn::toy_documents(seed + 1000, 20000));
    bwarea::save_sft_records(dir / "addition.jsonl", syn::addition_tasks(4));
    bwarea::save_sft_records(dir / "decision_tasks.jsonl", syn::decision_tasks(seed, 400));
    // Per-choice answer-format records for every game found under games/.
    if (std::filesystem::is_directory(dir / "games")) {
        std::filesystem::create_directories(dir / "sft");
        for (const auto& entry : std::filesystem::directory_iterator(dir / "games")) {
            if (entry.path().extension() != ".game") continue;
            const auto game = bwarea::load_game(entry.path());
            std::vector<bwarea::SftRecord> records;
            for (int rep = 0; rep < 40; ++rep)
                for (auto& r : bwarea::game_format_records(game)) records.push_back(r);
            bwarea::save_sft_records(dir / "sft" / (entry.path().stem().string() + "_format.jsonl"), records);
        }
    }
    std::cout << "wrote toy corpus, held-out split and SFT sets to " << dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Latent-action language model toolkit"};
    app.require_subcommand(1);
    Overrides o;

    auto* p1 = app.add_subcommand("pretrain1", "Joint world + inverse model pre-training");
    auto* p2 = app.add_subcommand("pretrain2", "Policy behavior cloning against the frozen inverse model");
    auto* sft = app.add_subcommand("sft", "Answer-masked fine-tuning (world + inverse, then policy)");
    auto* rl = app.add_subcommand("rl", "Policy-only ReMax on a game or the persuasion task");
    auto* gen = app.add_subcommand("generate", "Generate a continuation with policy-chosen actions");
    auto* probe = app.add_subcommand("probe", "Generate with pinned actions, or step interactively");
    auto* ev = app.add_subcommand("eval", "Held-out metrics for the latent-action model and baseline");
    auto* md = app.add_subcommand("make-data", "Write the bundled synthetic datasets");

    for (auto* cmd : {p1, p2, sft, rl, gen, probe, ev}) add_common(cmd, o);
    for (auto* cmd : {p1, p2}) {
        cmd->add_option("--steps", o.steps, "Number of updates");
        cmd->add_option("--corpus", o.corpus, "Training corpus (.txt or .tok)");
    }
    sft->add_option("--sft", o.sft, "SFT records (JSONL with prompt/answer)");
    rl->add_option("--game", o.game, "Game file");
    rl->add_option("--task", o.task, "game or persuasion");
    rl->add_option("--iterations", o.iterations, "Maximum RL updates");
    rl->add_flag("--baseline", o.baseline, "Also train the baseline model at token level");
    for (auto* cmd : {gen, probe}) {
        cmd->add_option("--prompt", o.prompt, "Prompt text")->required();
        cmd->add_option("--max-len", o.max_len, "Maximum generated tokens");
        cmd->add_option("--trace-out", o.trace_out, "Append the trace as JSONL");
    }
    gen->add_flag("--sample", o.sample, "Sample actions and tokens instead of argmax");
    probe->add_option("--action", o.actions, "Action index (repeat for a per-step list)");
    probe->add_flag("--interactive", o.interactive, "Step through generation choosing actions");
    ev->add_option("--heldout", o.heldout, "Held-out corpus");
    ev->add_option("--eval-out", o.eval_out, "Write the report as JSON");
    std::string data_dir = "data";
    std::uint64_t data_seed = 1;
    md->add_option("--out-dir", data_dir, "Output directory");
    md->add_option("--seed", data_seed, "Generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (md->parsed()) return make_data(data_dir, data_seed);
        for (auto* cmd : {p1, p2, sft, rl, gen, probe, ev})
            if (cmd->parsed()) return bwarea::run(resolve(cmd->get_name(), o));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
