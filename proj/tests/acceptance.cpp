// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include "transavs/config.hpp"
#include "transavs/evaluate.hpp"
#include "transavs/trainer.hpp"
#include "transavs/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace transavs;
namespace fs = std::filesystem;

namespace {

constexpr double kGradientTolerance = 1e-4;
constexpr double kGradientSeconds = 120.0;
constexpr double kLossOracleTolerance = 1e-12;
constexpr double kLearnMinJ = 0.70;
constexpr double kLearnMinF = 0.75;
constexpr double kLearnMinGain = 0.40;
constexpr double kLearnSeconds = 3600.0;
constexpr double kAblationMargin = 0.02;

// Desk-scale recipe shared by the learning criteria.
constexpr double kLearningRate = 1e-3;
constexpr double kNoObjectWeight = 0.02;
constexpr double kGradClip = 1.0;
constexpr double kLrPolyPower = 0.9;
constexpr std::size_t kAblationIterations = 1000;
constexpr std::size_t kAblationTrain = 200;

struct Outcome {
    bool passed = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

const fs::path& work() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "transavs_acceptance";
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

Outcome all_pass(const std::vector<verify::CheckResult>& results, double tolerance) {
    Outcome o{true, ""};
    double worst = 0.0;
    for (const auto& r : results) {
        worst = std::max(worst, r.max_error);
        if (!r.passed || !(r.max_error <= tolerance)) {
            o.passed = false;
            o.detail += r.name + " failed (" + r.detail + "); ";
        }
    }
    if (results.size() > 1)
        o.detail += std::to_string(results.size()) + " checks; ";
    else if (!results[0].detail.empty())
        o.detail += results[0].detail + "; ";
    o.detail += "max error " + fmt("%.3e", worst);
    return o;
}

TrainConfig recipe(const fs::path& manifest, const fs::path& out) {
    TrainConfig cfg;
    cfg.base_lr = kLearningRate;
    cfg.grad_clip_norm = kGradClip;
    cfg.lr_poly_power = kLrPolyPower;
    cfg.loss.no_object_weight = kNoObjectWeight;
    cfg.data = manifest.string();
    cfg.out_dir = out.string();
    cfg.eval_split = "none";
    return cfg;
}

Outcome gradient_fidelity() {
    const auto t0 = Clock::now();
    auto results = verify::op_gradients();
    results.push_back(verify::fusion_gradient());
    results.push_back(verify::total_loss_gradient());
    results.push_back(verify::total_loss_gradient(3, true));
    const double elapsed = seconds_since(t0);
    Outcome o = all_pass(results, kGradientTolerance);
    o.passed = o.passed && elapsed < kGradientSeconds;
    o.detail += ", " + fmt("%.1f s", elapsed);
    return o;
}

Outcome loss_oracles() {
    return all_pass({verify::aqdl_oracle(100), verify::aqml_oracle(100)}, kLossOracleTolerance);
}

Outcome schedule() { return all_pass({verify::schedule_check()}, 0.0); }

Outcome round_robin() { return all_pass({verify::round_robin_check()}, 0.0); }

Outcome metrics() {
    return all_pass({verify::jaccard_oracle(1000), verify::fscore_oracle(1000), verify::metric_conventions()}, 0.0);
}

Outcome inference_rule() { return all_pass({verify::fusion_rule_oracle(100)}, 0.0); }

Outcome matching() { return all_pass({verify::matching_oracle(200)}, 0.0); }

Outcome desk_learning() {
    synth::DatasetSpec spec;
    spec.mode = synth::Mode::S4;
    spec.n_train = 200;
    spec.n_valid = 20;
    spec.n_test = 50;
    spec.seed0 = 0;
    const auto manifest = synth::write_dataset(work() / "s4", spec);

    TrainConfig cfg = recipe(work() / "s4" / "manifest.jsonl", work() / "s4_run");
    cfg.max_iterations = 2000;
    cfg.batch_size = 4;
    cfg.checkpoint_every = 1000;
    const auto t0 = Clock::now();
    const FitResult fitted = fit(cfg);
    const double elapsed = seconds_since(t0);

    const auto trained = evaluate_split(load_model(fitted.final_checkpoint), manifest, "test");
    const auto baseline = evaluate_split(load_model(checkpoint_path(cfg.out_dir, 0)), manifest, "test");
    Outcome o;
    o.passed = trained.mean_j >= kLearnMinJ && trained.mean_f >= kLearnMinF &&
               trained.mean_j - baseline.mean_j >= kLearnMinGain && trained.mean_f - baseline.mean_f >= kLearnMinGain &&
               elapsed < kLearnSeconds;
    o.detail = "MJ " + fmt("%.4f", trained.mean_j) + " MF " + fmt("%.4f", trained.mean_f) + ", untrained MJ " +
               fmt("%.4f", baseline.mean_j) + " MF " + fmt("%.4f", baseline.mean_f) + ", training " +
               fmt("%.0f s", elapsed);
    return o;
}

Outcome ablation_direction() {
    synth::DatasetSpec spec;
    spec.mode = synth::Mode::MS3;
    spec.n_train = kAblationTrain;
    spec.n_valid = 20;
    spec.n_test = 50;
    spec.seed0 = 100000;
    const auto manifest = synth::write_dataset(work() / "ms3", spec);
    std::vector<synth::SceneClip> train;
    for (const auto& e : manifest.split("train")) train.push_back(synth::load_clip(manifest.clip_dir(e)));

    Outcome o{true, ""};
    double sum_inc = 0.0, sum_fix = 0.0;
    for (std::uint64_t seed : {1, 2, 3}) {
        double mj[2];
        for (int fixed = 0; fixed < 2; ++fixed) {
            TrainConfig cfg = recipe(work() / "ms3" / "manifest.jsonl",
                                     work() / ("ms3_seed" + std::to_string(seed) + (fixed ? "_fixed" : "_inc")));
            cfg.seed = seed;
            cfg.max_iterations = kAblationIterations;
            cfg.checkpoint_every = kAblationIterations;
            if (fixed) cfg.loss.delta1_mode = cfg.loss.delta2_mode = ThresholdMode::Fixed;
            const FitResult fitted = fit(cfg, {}, &train);
            mj[fixed] = evaluate_split(load_model(fitted.final_checkpoint), manifest, "test").mean_j;
        }
        sum_inc += mj[0];
        sum_fix += mj[1];
        o.detail += "seed " + std::to_string(seed) + ": increasing " + fmt("%.4f", mj[0]) + " fixed " +
                    fmt("%.4f", mj[1]) + "; ";
    }
    const double inc = sum_inc / 3.0, fix = sum_fix / 3.0;
    o.passed = inc >= fix - kAblationMargin;
    o.detail += "mean increasing " + fmt("%.4f", inc) + " vs fixed " + fmt("%.4f", fix);
    return o;
}

bool same_values(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::ranges::equal(a.data(), b.data());
}

bool same_forward(const ClipPrediction& a, const ClipPrediction& b) {
    if (a.frames.size() != b.frames.size()) return false;
    for (std::size_t t = 0; t < a.frames.size(); ++t) {
        const auto &x = a.frames[t], &y = b.frames[t];
        if (!same_values(x.probs, y.probs) || !same_values(x.masks, y.masks) || !same_values(x.queries, y.queries))
            return false;
    }
    return true;
}

Outcome reproducibility() {
    synth::DatasetSpec spec;
    spec.n_train = 8;
    spec.seed0 = 200000;
    const auto manifest = synth::write_dataset(work() / "repro", spec);

    std::string logs[2], ckpts[2];
    fs::path final_ckpt;
    for (int run = 0; run < 2; ++run) {
        TrainConfig cfg = recipe(work() / "repro" / "manifest.jsonl", work() / ("repro_run" + std::to_string(run)));
        cfg.max_iterations = 10;
        cfg.checkpoint_every = 5;
        cfg.seed = 7;
        final_ckpt = fit(cfg).final_checkpoint;
        logs[run] = slurp(fs::path(cfg.out_dir) / "loss.csv");
        ckpts[run] = slurp(final_ckpt);
    }
    const bool same_log = !logs[0].empty() && logs[0] == logs[1];
    const bool same_ckpt = !ckpts[0].empty() && ckpts[0] == ckpts[1];

    // Load, re-save and reload; forward outputs must agree bit for bit.
    const auto clip = synth::load_clip(manifest.clip_dir(manifest.split("test")[0]));
    TransAVS loaded = load_model(final_ckpt);
    TrainConfig cfg;
    AdamW opt(loaded.parameters(), cfg);
    load_checkpoint(final_ckpt, loaded, opt);
    const auto resaved = work() / "repro_resaved.tavs";
    save_checkpoint(resaved, loaded, opt);
    const bool same_bytes = slurp(resaved) == ckpts[1];
    const bool same_out = same_forward(loaded.forward(clip), load_model(resaved).forward(clip));

    Outcome o;
    o.passed = same_log && same_ckpt && same_bytes && same_out;
    o.detail = std::string("loss.csv ") + (same_log ? "identical" : "differs") + ", checkpoint " +
               (same_ckpt ? "identical" : "differs") + ", re-save " + (same_bytes ? "identical" : "differs") +
               ", forward after reload " + (same_out ? "bit-exact" : "differs");
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    tune_allocator();
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient fidelity", gradient_fidelity},
        {"loss oracle equivalence", loss_oracles},
        {"threshold schedule", schedule},
        {"round-robin attention", round_robin},
        {"metric correctness", metrics},
        {"inference rule", inference_rule},
        {"matching optimality", matching},
        {"desk-scale learning (S4)", desk_learning},
        {"ablation direction (MS3)", ablation_direction},
        {"reproducibility", reproducibility},
    };
    std::set<std::size_t> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::strtoul(argv[i], nullptr, 10));

    std::size_t failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        if (!selected.empty() && !selected.count(k + 1)) continue;
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.passed;
        std::cout << (o.passed ? "PASS" : "FAIL") << " [" << k + 1 << "] " << criteria[k].first << ": " << o.detail
                  << std::endl;
    }
    return failed ? 1 : 0;
}
