#include "doctest.h"

#include "transavs/image.hpp"
#include "transavs/inference.hpp"
#include "transavs/tavs_io.hpp"
#include "transavs/trainer.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace transavs;
namespace fs = std::filesystem;

namespace {

struct Result {
    int status = -1;
    std::string out, err;
};

const fs::path& work() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "transavs_test_cli";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::stringstream ss;
    ss << std::ifstream(p, std::ios::binary).rdbuf();
    return ss.str();
}

Result run(const std::string& args) {
    const auto out = work() / "stdout.txt", err = work() / "stderr.txt";
    const std::string cmd = "cd '" + work().string() + "' && '" TRANSAVS_CLI_PATH "' " + args + " >'" + out.string() +
                            "' 2>'" + err.string() + "'";
    const int raw = std::system(cmd.c_str());
    Result r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

std::size_t count_dirs(const fs::path& p) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(p)) n += e.is_directory();
    return n;
}

const char* kTinyConfig =
    "model.queries = 6\n"
    "model.d = 8\n"
    "model.stage1_channels = 4\n"
    "model.stage2_channels = 4\n"
    "model.stage3_channels = 4\n"
    "model.audio_hidden = 8\n"
    "batch_size = 2\n"
    "max_iterations = 4\n"
    "checkpoint_every = 2\n"
    "base_lr = 1e-3\n"
    "eval_split = valid\n";

}  // namespace

TEST_CASE("gen-data: counts, usage errors and byte-identical reruns") {
    auto r = run("gen-data --mode S4 --train 10 --valid 2 --test 2 --seed 0 --size 32x32 --out data");
    REQUIRE(r.status == 0);
    CHECK(r.out.find("manifest.jsonl") != std::string::npos);
    auto manifest = synth::read_manifest(work() / "data" / "manifest.jsonl");
    CHECK(manifest.entries.size() == 14);
    CHECK(count_dirs(work() / "data" / "train") == 10);
    CHECK(count_dirs(work() / "data" / "valid") == 2);
    CHECK(count_dirs(work() / "data" / "test") == 2);

    CHECK(run("gen-data --mode S4 --train 10 --valid 2 --test 2 --seed 0 --size 32x32 --out data2").status == 0);
    for (const auto& e : manifest.entries) {
        const auto a = manifest.clip_dir(e), b = work() / "data2" / e.dir;
        for (const auto& f : fs::directory_iterator(a)) CHECK(slurp(f.path()) == slurp(b / f.path().filename()));
    }
    CHECK(slurp(work() / "data" / "manifest.jsonl").size() == slurp(work() / "data2" / "manifest.jsonl").size());

    CHECK(run("gen-data --mode S4 --train 1").status == 2);
    CHECK(run("gen-data --mode S5 --out bad").status == 2);
    CHECK(run("gen-data --size 30x30 --out bad").status == 2);
    CHECK(run("frobnicate").status == 2);
    CHECK(run("--help").status == 0);
}

TEST_CASE("train, eval and infer on a tiny configuration") {
    REQUIRE(run("gen-data --mode S4 --train 4 --valid 1 --test 2 --seed 3 --size 32x32 --out tiny").status == 0);
    std::ofstream(work() / "tiny.cfg") << kTinyConfig;

    auto r = run("train --config tiny.cfg --data tiny/manifest.jsonl --out run");
    INFO(r.err);
    REQUIRE(r.status == 0);
    CHECK(r.out.find("checkpoint=") != std::string::npos);
    CHECK(r.out.find("MJ=") != std::string::npos);
    CHECK(fs::exists(work() / "run" / "checkpoints" / "iter_000004.tavs"));
    CHECK(fs::exists(work() / "run" / "metrics.csv"));
    CHECK(fs::exists(work() / "run" / "config.txt"));
    CHECK(slurp(work() / "run" / "config.txt").find("model.queries = 6") != std::string::npos);

    // Resume from iteration 2 with a longer horizon: no gaps in iteration numbers.
    r = run("train --config tiny.cfg --data tiny/manifest.jsonl --out run --set max_iterations=6 "
            "--resume run/checkpoints/iter_000002.tavs");
    REQUIRE(r.status == 0);
    std::ifstream log(work() / "run" / "loss.csv");
    std::string line;
    std::getline(log, line);
    std::size_t expect = 1;
    while (std::getline(log, line)) CHECK(std::stoul(line) == expect++);
    CHECK(expect == 7);

    r = run("train --config tiny.cfg --data tiny/manifest.jsonl --out run --set bogus_key=1");
    CHECK(r.status == 2);
    CHECK(r.err.find("bogus_key") != std::string::npos);
    CHECK(run("train --config missing.cfg").status == 2);
    CHECK(run("train --config tiny.cfg --data nowhere/manifest.jsonl --out run2").status == 1);

    r = run("eval --ckpt run/checkpoints/iter_000006.tavs --data tiny/manifest.jsonl --split test --out ev");
    REQUIRE(r.status == 0);
    CHECK(r.out.rfind("MJ=", 0) == 0);
    CHECK(r.out.find(" MF=") != std::string::npos);
    CHECK(fs::exists(work() / "ev" / "metrics.csv"));
    CHECK(run("eval --ckpt nothing.tavs --data tiny/manifest.jsonl").status == 1);

    const auto manifest = synth::read_manifest(work() / "tiny" / "manifest.jsonl");
    const auto clip_dir = manifest.clip_dir(manifest.split("test")[0]);
    r = run("infer --ckpt run/checkpoints/iter_000006.tavs --clip '" + clip_dir.string() + "' --out inf");
    REQUIRE(r.status == 0);
    const auto z = read_tavs(work() / "inf" / "z.tavs");
    for (std::size_t t = 0; t < 5; ++t) {
        const auto path = work() / "inf" / ("mask_" + std::to_string(t) + ".pgm");
        REQUIRE(fs::exists(path));
        const Tensor& masks = find_tensor(z, "frame" + std::to_string(t) + ".masks");
        const Tensor& probs = find_tensor(z, "frame" + std::to_string(t) + ".probs");
        CHECK(masks.shape() == Shape{6, 32, 32});
        CHECK(read_pgm(path) == fuse_predictions(probs, reshape(masks, {6, 32 * 32}), 32, 32));
        CHECK(fs::exists(work() / "inf" / "queries" / ("frame" + std::to_string(t) + "_q005.pgm")));
    }
    CHECK(!fs::exists(work() / "inf" / "mask_5.pgm"));
    CHECK(run("infer --ckpt run/checkpoints/iter_000006.tavs --clip nowhere --out inf2").status == 1);

    // Every invocation appended one record.
    std::ifstream runs(work() / "runs.log");
    std::size_t records = 0;
    while (std::getline(runs, line)) {
        CHECK(line.find("\"exit_status\"") != std::string::npos);
        ++records;
    }
    CHECK(records >= 8);
}

TEST_CASE("infer: a classifier forced to no-object yields empty masks") {
    ModelConfig cfg;
    cfg.queries = 4;
    cfg.d = 8;
    cfg.stage_channels = {4, 4, 4};
    cfg.audio_hidden = 8;
    TransAVS model = TransAVS::init(cfg, 1);
    model.head.g_bias.mutable_data()[0] = -50.0;
    model.head.g_bias.mutable_data()[1] = 50.0;
    TrainConfig tc;
    tc.model = cfg;
    AdamW opt(model.parameters(), tc);
    save_checkpoint(work() / "empty.tavs", model, opt);

    const auto clip = synth::generate_clip(11, synth::Mode::S4, 32, 32);
    synth::write_clip(work() / "clip11", clip);
    auto r = run("infer --ckpt empty.tavs --clip clip11 --out inf_empty");
    REQUIRE(r.status == 0);
    for (std::size_t t = 0; t < 5; ++t)
        CHECK(read_pgm(work() / "inf_empty" / ("mask_" + std::to_string(t) + ".pgm")).count() == 0);
}

TEST_CASE("verify: passes on a clean build and names an injected fault") {
    auto r = run("verify");
    INFO(r.out);
    CHECK(r.status == 0);
    CHECK(r.out.find("oracle.attention") != std::string::npos);

    r = run("verify --inject-fault attention-scale");
    CHECK(r.status == 1);
    CHECK(r.err.find("FAIL oracle.attention") != std::string::npos);
    CHECK(run("verify --inject-fault unknown").status == 2);
}
