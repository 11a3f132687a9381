// transavs: data generation, training, evaluation, inference and verification.
//
// Exit codes: 0 success, 1 runtime or data failure, 2 usage error.

#include "transavs/config.hpp"
#include "transavs/errors.hpp"
#include "transavs/evaluate.hpp"
#include "transavs/fusion.hpp"
#include "transavs/synth.hpp"
#include "transavs/trainer.hpp"
#include "transavs/verify.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace transavs;

namespace {

struct RunRecord {
    std::string subcommand;
    std::vector<std::string> argv;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    nlohmann::ordered_json artifacts = nlohmann::ordered_json::object();
};

std::string timestamp() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

void append_run_log(const RunRecord& rec, const std::string& started, double seconds, int status) {
    nlohmann::ordered_json line;
    line["started"] = started;
    line["subcommand"] = rec.subcommand;
    line["argv"] = rec.argv;
    line["config"] = rec.config;
    line["artifacts"] = rec.artifacts;
    line["wall_clock_s"] = seconds;
    line["exit_status"] = status;
    std::ofstream out("runs.log", std::ios::app);
    if (out) out << line.dump() << '\n';
}

std::size_t thread_cap() {
    const char* env = std::getenv("TRANSAVS_THREADS");
    if (!env || !*env) return 0;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw UsageError("TRANSAVS_THREADS must be a positive integer");
    return static_cast<std::size_t>(v);
}

std::pair<std::size_t, std::size_t> parse_size(const std::string& text) {
    const auto x = text.find('x');
    try {
        if (x == std::string::npos) throw std::invalid_argument(text);
        std::size_t used_h = 0, used_w = 0;
        const std::string hs = text.substr(0, x), ws = text.substr(x + 1);
        const auto h = std::stoull(hs, &used_h), w = std::stoull(ws, &used_w);
        if (used_h != hs.size() || used_w != ws.size()) throw std::invalid_argument(text);
        return {h, w};
    } catch (const std::exception&) {
        throw UsageError("--size expects HxW, got '" + text + "'");
    }
}

std::string fmt_metric(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// -- subcommands ------------------------------------------------------------

struct GenDataArgs {
    std::string mode = "S4", out, size = "64x64";
    std::size_t train = 200, valid = 40, test = 40;
    std::uint64_t seed = 0;
};

int cmd_gen_data(const GenDataArgs& a, RunRecord& rec) {
    synth::DatasetSpec spec;
    spec.mode = synth::parse_mode(a.mode);
    spec.n_train = a.train;
    spec.n_valid = a.valid;
    spec.n_test = a.test;
    spec.seed0 = a.seed;
    std::tie(spec.height, spec.width) = parse_size(a.size);
    rec.config = {{"mode", a.mode}, {"train", a.train}, {"valid", a.valid}, {"test", a.test},
                  {"seed", a.seed}, {"size", a.size}, {"out", a.out}};
    const auto manifest = synth::write_dataset(a.out, spec);
    rec.artifacts["manifest"] = manifest.path.string();
    std::cout << manifest.path.string() << '\n';
    return 0;
}

struct TrainArgs {
    std::string config, resume, data, out;
    std::vector<std::string> overrides;
};

int cmd_train(const TrainArgs& a, RunRecord& rec) {
    TrainConfig cfg;
    if (!a.config.empty()) apply_config(cfg, read_config_file(a.config));
    ConfigMap cli;
    for (const auto& kv : a.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
        cli[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    if (!a.data.empty()) cli["data"] = a.data;
    if (!a.out.empty()) cli["out_dir"] = a.out;
    apply_config(cfg, cli);
    if (const auto cap = thread_cap()) cfg.threads = std::min(cfg.threads, cap);
    for (const auto& [k, v] : config_entries(cfg)) rec.config[k] = v;

    const FitResult res = fit(cfg, a.resume);
    rec.artifacts["run_dir"] = cfg.out_dir;
    rec.artifacts["checkpoint"] = res.final_checkpoint.string();
    rec.artifacts["loss_csv"] = (fs::path(cfg.out_dir) / "loss.csv").string();
    std::cout << "checkpoint=" << res.final_checkpoint.string() << '\n';
    if (res.mean_j >= 0.0) {
        rec.artifacts["metrics_csv"] = (fs::path(cfg.out_dir) / "metrics.csv").string();
        std::cout << "MJ=" << fmt_metric(res.mean_j) << " MF=" << fmt_metric(res.mean_f) << '\n';
    }
    return 0;
}

struct EvalArgs {
    std::string ckpt, data, split = "test", out = ".";
    double beta2 = 0.3;
};

int cmd_eval(const EvalArgs& a, RunRecord& rec) {
    rec.config = {{"ckpt", a.ckpt}, {"data", a.data}, {"split", a.split}, {"out", a.out}, {"beta2", a.beta2}};
    if (!fs::exists(a.ckpt)) throw IoError("checkpoint not found: " + a.ckpt);
    const TransAVS model = load_model(a.ckpt);
    const auto manifest = synth::read_manifest(a.data);
    const EvalRecord r = evaluate_split(model, manifest, a.split, a.out, a.beta2);
    rec.artifacts["metrics_csv"] = (fs::path(a.out) / "metrics.csv").string();
    rec.artifacts["summary"] = (fs::path(a.out) / "summary.txt").string();
    std::cout << "MJ=" << fmt_metric(r.mean_j) << " MF=" << fmt_metric(r.mean_f) << '\n';
    return 0;
}

struct InferArgs {
    std::string ckpt, clip, out;
};

int cmd_infer(const InferArgs& a, RunRecord& rec) {
    rec.config = {{"ckpt", a.ckpt}, {"clip", a.clip}, {"out", a.out}};
    if (!fs::exists(a.ckpt)) throw IoError("checkpoint not found: " + a.ckpt);
    const TransAVS model = load_model(a.ckpt);
    const synth::SceneClip clip = synth::load_clip(a.clip);
    const ClipPrediction pred = model.forward(clip);
    fs::create_directories(fs::path(a.out) / "queries");
    std::vector<NamedTensor> dump;
    for (std::size_t t = 0; t < pred.frames.size(); ++t) {
        const PredictionSet& z = pred.frames[t];
        write_pgm(fs::path(a.out) / ("mask_" + std::to_string(t) + ".pgm"),
                  fuse_predictions(z.probs, z.masks, z.height, z.width));
        auto m = z.masks.data();
        const std::size_t hw = z.height * z.width;
        for (std::size_t i = 0; i < z.size(); ++i) {
            char name[48];
            std::snprintf(name, sizeof name, "frame%zu_q%03zu.pgm", t, i);
            write_pgm_gray(fs::path(a.out) / "queries" / name, m.subspan(i * hw, hw), z.height, z.width);
        }
        const std::string p = "frame" + std::to_string(t) + ".";
        dump.push_back({p + "masks", reshape(z.masks.detach(), {z.size(), z.height, z.width})});
        dump.push_back({p + "probs", z.probs.detach()});
        dump.push_back({p + "queries", z.queries.detach()});
    }
    write_tavs(fs::path(a.out) / "z.tavs", dump);
    rec.artifacts["masks"] = pred.frames.size();
    rec.artifacts["z"] = (fs::path(a.out) / "z.tavs").string();
    rec.artifacts["query_maps"] = (fs::path(a.out) / "queries").string();
    std::cout << "frames=" << pred.frames.size() << " out=" << a.out << '\n';
    return 0;
}

int cmd_verify(const std::string& fault, RunRecord& rec) {
    if (!fault.empty()) {
        if (fault != "attention-scale") throw UsageError("unknown fault '" + fault + "'");
        testing::set_attention_scale_fault(true);
        rec.config["fault"] = fault;
    }
    const auto results = verify::run_all();
    verify::print_table(std::cout, results);
    std::size_t failed = 0;
    for (const auto& r : results)
        if (!r.passed) {
            std::cerr << "FAIL " << r.name << '\n';
            ++failed;
        }
    rec.artifacts["checks"] = results.size();
    rec.artifacts["failed"] = failed;
    std::cout << (failed ? "verify: " + std::to_string(failed) + " check(s) failed" : std::string("verify: all checks passed"))
              << '\n';
    return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    transavs::tune_allocator();
    CLI::App app{"Audio-visual segmentation with audio queries"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset");
    gen_cmd->add_option("--mode", gen.mode, "S4 or MS3")->capture_default_str();
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();
    gen_cmd->add_option("--train", gen.train)->capture_default_str();
    gen_cmd->add_option("--valid", gen.valid)->capture_default_str();
    gen_cmd->add_option("--test", gen.test)->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
    gen_cmd->add_option("--size", gen.size, "Frame size HxW")->capture_default_str();

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Train a model");
    train_cmd->add_option("--config", train.config, "key=value config file")->check(CLI::ExistingFile);
    train_cmd->add_option("--resume", train.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
    train_cmd->add_option("--data", train.data, "Dataset manifest (overrides config)");
    train_cmd->add_option("--out", train.out, "Run directory (overrides config)");
    train_cmd->add_option("--set", train.overrides, "Override a config key: key=value");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
    eval_cmd->add_option("--ckpt", ev.ckpt)->required();
    eval_cmd->add_option("--data", ev.data, "Dataset manifest")->required();
    eval_cmd->add_option("--split", ev.split)->capture_default_str();
    eval_cmd->add_option("--out", ev.out, "Directory for metrics.csv, summary.txt, pred/")->capture_default_str();
    eval_cmd->add_option("--beta2", ev.beta2, "F-measure beta squared")->capture_default_str();

    InferArgs inf;
    auto* infer_cmd = app.add_subcommand("infer", "Segment one clip");
    infer_cmd->add_option("--ckpt", inf.ckpt)->required();
    infer_cmd->add_option("--clip", inf.clip, "Clip directory")->required();
    infer_cmd->add_option("--out", inf.out)->required();

    std::string fault;
    auto* verify_cmd = app.add_subcommand("verify", "Run the oracle suite");
    verify_cmd->add_option("--inject-fault", fault, "Testing hook: attention-scale")->group("");

    RunRecord rec;
    rec.argv.assign(argv, argv + argc);
    const std::string started = timestamp();
    const auto t0 = std::chrono::steady_clock::now();
    int status = 0;
    try {
        app.parse(argc, argv);
        if (*gen_cmd) rec.subcommand = "gen-data", status = cmd_gen_data(gen, rec);
        else if (*train_cmd) rec.subcommand = "train", status = cmd_train(train, rec);
        else if (*eval_cmd) rec.subcommand = "eval", status = cmd_eval(ev, rec);
        else if (*infer_cmd) rec.subcommand = "infer", status = cmd_infer(inf, rec);
        else if (*verify_cmd) rec.subcommand = "verify", status = cmd_verify(fault, rec);
    } catch (const CLI::ParseError& e) {
        if (app.exit(e) == 0) return 0;  // --help
        status = 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        status = 2;
    } catch (const NonFiniteLoss& e) {
        std::cerr << "training aborted: " << e.what() << '\n';
        status = 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        status = 1;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (rec.subcommand.empty() && argc > 1) rec.subcommand = argv[1];
    append_run_log(rec, started, secs, status);
    return status;
}
