// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"

using namespace bwarea;
namespace fs = std::filesystem;

namespace {

class TempDir {
   public:
    explicit TempDir(const std::string& tag) : path_(fs::temp_directory_path() / ("bwarea_" + tag)) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    fs::path operator/(const std::string& f) const { return path_ / f; }
    const fs::path& path() const { return path_; }

   private:
    fs::path path_;
};

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::string& b) {
    std::ofstream(p, std::ios::binary | std::ios::trunc).write(b.data(), static_cast<std::streamsize>(b.size()));
}

Checkpoint tiny_checkpoint(std::uint64_t seed = 3) {
    ModelBundle<float> m(oracle::tiny_config(), seed);
    auto ck = make_checkpoint(m, {"pretrain1", 10, seed, "abc"});
    ck.optimizer_steps["x"] = 0;
    return ck;
}

RunConfig smoke_config(const TempDir& dir, std::size_t steps = 200) {
    RunConfig c;
    c.stage = "pretrain1";
    c.seed = 4;
    c.model = oracle::tiny_config();
    c.train.steps = steps;
    c.train.seq_len = 16;
    c.train.batch_size = 4;
    c.paths.corpus = (dir / "corpus.txt").string();
    c.paths.checkpoint_out = (dir / "ck" / "p1.bwa").string();
    c.paths.log = (dir / "run.jsonl").string();
    if (!fs::exists(c.paths.corpus)) {
        std::ofstream f(c.paths.corpus);
        for (const auto& d : synthetic::toy_documents(1, 4000)) f << d << "\n";
    }
    return c;
}

}  // namespace

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
    TempDir dir("ck_rt");
    auto ck = tiny_checkpoint();
    save_checkpoint(dir / "a.bwa", ck);
    auto back = load_checkpoint(dir / "a.bwa");
    EXPECT_EQ(back, ck);
    save_checkpoint(dir / "b.bwa", back);
    EXPECT_EQ(read_bytes(dir / "a.bwa"), read_bytes(dir / "b.bwa"));
}

TEST(Checkpoint, RestoredModelsProduceIdenticalLogits) {
    ModelBundle<float> a(oracle::tiny_config(), 3), b(oracle::tiny_config(), 99);
    restore_models(make_checkpoint(a, {}), b);
    auto ids = oracle::random_ids(10, 1);
    auto la = a.baseline.forward(ids, ids.size()), lb = b.baseline.forward(ids, ids.size());
    EXPECT_TRUE(std::equal(la.values().begin(), la.values().end(), lb.values().begin()));
    auto other = oracle::tiny_config();
    other.d_model = 8;
    ModelBundle<float> c(other, 1);
    EXPECT_THROW(restore_models(make_checkpoint(a, {}), c), CheckpointError);
}

TEST(Checkpoint, OneFlippedPayloadByteChangesOneScalar) {
    auto ck = tiny_checkpoint();
    auto bytes = encode_checkpoint(ck);
    bytes[bytes.size() - 4] = static_cast<char>(bytes[bytes.size() - 4] ^ 0x01);
    auto back = decode_checkpoint(bytes);
    std::size_t differing = 0;
    for (const auto& [name, rec] : ck.records) {
        const auto& other = back.records.at(name);
        ASSERT_EQ(rec.shape, other.shape);
        for (std::size_t i = 0; i < rec.values.size(); ++i) differing += rec.values[i] != other.values[i];
    }
    EXPECT_EQ(differing, 1u);
}

TEST(Checkpoint, TruncationIsAnIntegrityError) {
    auto bytes = encode_checkpoint(tiny_checkpoint());
    for (std::size_t cut : {std::size_t{1}, std::size_t{8}, bytes.size() / 2, bytes.size() - 1})
        EXPECT_THROW(decode_checkpoint(std::string_view(bytes).substr(0, cut)), CheckpointIntegrityError) << cut;
    EXPECT_THROW(decode_checkpoint(bytes + "x"), CheckpointIntegrityError);
}

TEST(Checkpoint, VersionMismatchNamesTheVersions) {
    auto bytes = encode_checkpoint(tiny_checkpoint());
    bytes[4] = 9;
    try {
        decode_checkpoint(bytes);
        FAIL() << "accepted";
    } catch (const CheckpointVersionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("version 9"), std::string::npos);
        EXPECT_NE(msg.find("expected 1"), std::string::npos);
        EXPECT_NE(msg.find("re-export"), std::string::npos);
    }
}

TEST(Checkpoint, BadMagicAndMissingFile) {
    auto bytes = encode_checkpoint(tiny_checkpoint());
    bytes[0] = 'X';
    EXPECT_THROW(decode_checkpoint(bytes), CheckpointError);
    EXPECT_THROW(load_checkpoint("/nonexistent/ck.bwa"), CheckpointError);
}

TEST(Checkpoint, OptimizerStateRoundTrips) {
    ParameterStore<float> store("p");
    Rng rng(1);
    auto w = store.create_normal("w", {2, 3}, 0.5, rng);
    Adam<float> opt(AdamConfig{0.1});
    StoreList<float> list{&store};
    for (int i = 0; i < 3; ++i) {
        store.zero_grad();
        backward(sum(mul(w, w)));
        opt.step(list);
    }
    Checkpoint ck;
    store_optimizer(ck, "k", opt);
    auto back = decode_checkpoint(encode_checkpoint(ck));
    Adam<float> restored(AdamConfig{0.1});
    ASSERT_TRUE(load_optimizer(back, "k", restored));
    EXPECT_EQ(restored.step_count(), 3u);
    EXPECT_FALSE(load_optimizer(back, "missing", restored));
}

TEST(StageOrder, LaterStagesNeedEarlierCheckpoints) {
    RunConfig c;
    c.stage = "rl";
    EXPECT_THROW(check_stage_order(c, {"pretrain1", 1, 1, ""}), StageOrderError);
    EXPECT_NO_THROW(check_stage_order(c, {"pretrain2", 1, 1, ""}));
    EXPECT_NO_THROW(check_stage_order(c, {"sft", 1, 1, ""}));
    c.force = true;
    EXPECT_NO_THROW(check_stage_order(c, {"pretrain1", 1, 1, ""}));
    c.force = false;
    c.stage = "pretrain1";
    EXPECT_THROW(check_stage_order(c, {"sft", 1, 1, ""}), StageOrderError);
    c.stage = "eval";
    EXPECT_NO_THROW(check_stage_order(c, {"init", 0, 0, ""}));
}

TEST(StageOrder, ResumeWithChangedConfigIsRefused) {
    RunConfig c;
    c.stage = "pretrain1";
    const auto h = config_hash(c);
    EXPECT_NO_THROW(check_stage_order(c, {"pretrain1", 5, 1, h}));
    c.train.lr_world *= 2;
    EXPECT_NE(config_hash(c), h);
    try {
        check_stage_order(c, {"pretrain1", 5, 1, h});
        FAIL() << "accepted";
    } catch (const StageOrderError& e) {
        EXPECT_NE(std::string(e.what()).find("--force"), std::string::npos);
    }
    c.paths.log = "elsewhere.jsonl";
    c.train.lr_world /= 2;
    EXPECT_EQ(config_hash(c), h);
}

TEST(RunConfig, JsonRoundTripAndValidation) {
    TempDir dir("cfg");
    auto c = smoke_config(dir);
    c.rl.task = "persuasion";
    c.generate.actions = {1, 2};
    nlohmann::json j = c;
    std::ofstream(dir / "c.json") << j.dump(2);
    auto back = load_run_config(dir / "c.json");
    EXPECT_EQ(nlohmann::json(back), j);
    EXPECT_NO_THROW(c.validate());
    c.stage = "dance";
    EXPECT_THROW(c.validate(), ConfigError);
    c.stage = "pretrain1";
    c.paths.corpus = (dir / "missing.txt").string();
    EXPECT_THROW(c.validate(), ConfigError);
    c = smoke_config(dir);
    c.paths.checkpoint_out.clear();
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Lock, SecondHolderIsRefused) {
    TempDir dir("lock");
    {
        DirectoryLock a(dir.path());
        EXPECT_TRUE(fs::exists(dir / ".bwarea.lock"));
        EXPECT_THROW(DirectoryLock b(dir.path()), StageError);
    }
    EXPECT_FALSE(fs::exists(dir / ".bwarea.lock"));
    EXPECT_NO_THROW(DirectoryLock c(dir.path()));
}

TEST(RunLogFile, AppendsParsableRecords) {
    TempDir dir("log");
    {
        RunLog log(dir / "a.jsonl", LogLevel::kError);
        log.record({{"k", 1}});
        LossReport r;
        r.stage = "pretrain1";
        r.step = 2;
        log.report(r);
    }
    {
        RunLog log(dir / "a.jsonl", LogLevel::kError);
        log.record({{"k", 3}});
    }
    auto recs = read_run_log(dir / "a.jsonl");
    ASSERT_EQ(recs.size(), 3u);
    EXPECT_EQ(recs[0]["k"], 1);
    EXPECT_EQ(LossReport::from_json(recs[1]).step, 2u);
    EXPECT_EQ(recs[2]["k"], 3);
}

TEST(Run, ExitCodes) {
    TempDir dir("exit");
    std::ostringstream out;
    auto c = smoke_config(dir, 2);
    c.stage = "nope";
    EXPECT_EQ(run(c, out), 2);
    c = smoke_config(dir, 2);
    c.model.heads = 3;  // does not divide d_model
    EXPECT_EQ(run(c, out), 2);
    c = smoke_config(dir, 2);
    ASSERT_EQ(run(c, out), 0);
    auto rl = smoke_config(dir, 2);
    rl.stage = "rl";
    rl.rl.task = "persuasion";
    rl.paths.checkpoint_in = c.paths.checkpoint_out;
    rl.paths.checkpoint_out = (dir / "ck" / "rl.bwa").string();
    EXPECT_EQ(run(rl, out), 3);  // pretrain1 checkpoint refused for rl
    auto bad = smoke_config(dir, 2);
    bad.stage = "eval";
    bad.paths.heldout = bad.paths.corpus;
    write_bytes(dir / "broken.bwa", "BWA1");
    bad.paths.checkpoint_in = (dir / "broken.bwa").string();
    EXPECT_EQ(run(bad, out), 1);
}

TEST(Run, Pretrain1SmokeRunWritesALoadableCheckpoint) {
    TempDir dir("smoke");
    std::ostringstream out;
    auto c = smoke_config(dir, 200);
    ASSERT_EQ(run(c, out), 0);
    auto ck = load_checkpoint(c.paths.checkpoint_out);
    EXPECT_EQ(ck.provenance.stage, "pretrain1");
    EXPECT_EQ(ck.provenance.step, 200u);
    EXPECT_EQ(ck.provenance.config_hash, config_hash(c));
    EXPECT_EQ(ck.model, c.model);
    EXPECT_EQ(ck.optimizer_steps.at("world_inverse"), 200u);
    auto recs = read_run_log(c.paths.log);
    std::size_t reports = 0;
    double first = -1, last = -1;
    for (const auto& r : recs)
        if (r.contains("stage") && r["stage"] == "pretrain1" && r.contains("total")) {
            auto rep = LossReport::from_json(r);
            EXPECT_TRUE(rep.finite());
            if (first < 0) first = rep.predict;
            last = rep.predict;
            ++reports;
        }
    EXPECT_EQ(reports, 200u);
    EXPECT_LT(last, first);
    EXPECT_FALSE(fs::exists(dir / "ck" / ".bwarea.lock"));

    // Follow-on eval on the written checkpoint.
    auto ev = smoke_config(dir, 200);
    ev.stage = "eval";
    ev.paths.checkpoint_in = c.paths.checkpoint_out;
    ev.paths.heldout = c.paths.corpus;
    ev.paths.eval_out = (dir / "eval.json").string();
    ev.eval = {16, 4, 4};
    ASSERT_EQ(run(ev, out), 0);
    std::ifstream in(ev.paths.eval_out);
    auto rep = EvalReport::from_json(nlohmann::json::parse(in));
    EXPECT_TRUE(rep.finite());
    EXPECT_GT(rep.tokens, 0u);
}

TEST(Run, FinalCheckpointIsDeterministic) {
    TempDir dir("det");
    std::ostringstream out;
    auto a = smoke_config(dir, 20);
    auto b = a;
    b.paths.checkpoint_out = (dir / "ck2" / "p1.bwa").string();
    ASSERT_EQ(run(a, out), 0);
    ASSERT_EQ(run(b, out), 0);
    EXPECT_EQ(read_bytes(a.paths.checkpoint_out), read_bytes(b.paths.checkpoint_out));
}

TEST(Run, GenerateAndProbeOnACheckpoint) {
    TempDir dir("gen");
    std::ostringstream out;
    auto c = smoke_config(dir, 5);
    ASSERT_EQ(run(c, out), 0);
    auto g = smoke_config(dir, 5);
    g.stage = "generate";
    g.paths.checkpoint_in = c.paths.checkpoint_out;
    g.paths.checkpoint_out.clear();
    g.generate.prompt = "the ";
    g.generate.max_len = 6;
    g.paths.trace_out = (dir / "t.jsonl").string();
    ASSERT_EQ(run(g, out), 0);
    g.stage = "probe";
    EXPECT_EQ(run(g, out), 2);  // no action given
    g.generate.actions = {1};
    ASSERT_EQ(run(g, out), 0);
    auto traces = read_run_log(g.paths.trace_out);
    ASSERT_EQ(traces.size(), 2u);
    for (const auto& t : traces) EXPECT_LE(RolloutTrace::from_json(t).generated.size(), 6u);
}

TEST(Cli, HelpAndBadArguments) {
    const std::string cli = BWAREA_CLI;
    EXPECT_EQ(std::system((cli + " --help > /dev/null 2>&1").c_str()), 0);
    EXPECT_NE(std::system((cli + " pretrain1 --steps notanumber > /dev/null 2>&1").c_str()), 0);
    EXPECT_NE(std::system((cli + " > /dev/null 2>&1").c_str()), 0);
}

TEST(Configs, BundledPipelineConfigsParse) {
    const std::filesystem::path dir = std::filesystem::path(oracle::data_path("")).parent_path().parent_path() / "configs";
    std::size_t n = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        std::ifstream in(entry.path());
        const auto cfg = nlohmann::json::parse(in).get<RunConfig>();
        EXPECT_NE(std::find(known_stages().begin(), known_stages().end(), cfg.stage), known_stages().end()) << entry.path();
        EXPECT_NO_THROW(cfg.train.validate()) << entry.path();
        EXPECT_EQ(nlohmann::json(cfg).get<RunConfig>().stage, cfg.stage);
        ++n;
    }
    EXPECT_GE(n, 5u);
}
