#include "doctest.h"

#include "transavs/config.hpp"
#include "transavs/errors.hpp"
#include "transavs/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace transavs;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model() {
    ModelConfig m;
    m.queries = 8;
    m.d = 8;
    m.stage_channels = {4, 4, 4};
    m.audio_hidden = 8;
    return m;
}

TrainConfig tiny_train(const fs::path& out) {
    TrainConfig cfg;
    cfg.model = tiny_model();
    cfg.base_lr = 1e-3;
    cfg.batch_size = 2;
    cfg.max_iterations = 50;
    cfg.checkpoint_every = 25;
    cfg.eval_split = "none";
    cfg.out_dir = out.string();
    return cfg;
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("transavs_test_trainer_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<synth::SceneClip> clips(std::size_t n, std::uint64_t seed0 = 100) {
    std::vector<synth::SceneClip> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(synth::generate_clip(seed0 + i, synth::Mode::S4, 32, 32));
    return out;
}

std::string slurp(const fs::path& p) {
    std::stringstream ss;
    ss << std::ifstream(p, std::ios::binary).rdbuf();
    return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
    std::vector<std::string> out;
    std::ifstream in(p);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

double batch_loss(const TransAVS& model, std::span<const synth::SceneClip* const> batch, const TrainConfig& cfg,
                  std::size_t it) {
    double acc = 0.0;
    for (auto* c : batch) acc += clip_loss(model, *c, cfg, it).total.item();
    return acc / static_cast<double>(batch.size());
}

}  // namespace

TEST_CASE("AdamW: ten steps on a scalar quadratic match a hand-stepped reference") {
    // f(p) = (p − 3)² / 2, gradient p − 3.
    TrainConfig cfg;
    cfg.base_lr = 0.1;
    cfg.weight_decay = 0.01;
    Tensor p({1}, {0.5}, true);
    AdamW opt({{"p", &p, ParamGroup::Head}}, cfg);

    double x = 0.5, m = 0.0, v = 0.0;
    for (int t = 1; t <= 10; ++t) {
        const double g = x - 3.0;
        opt.step({{p[0] - 3.0}});
        x -= 0.1 * 0.01 * x;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1.0 - std::pow(0.9, t)), vh = v / (1.0 - std::pow(0.999, t));
        x -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
        CHECK(std::abs(p[0] - x) < 1e-12);
    }
    CHECK(opt.steps() == 10);
    CHECK(std::abs(opt.first_moment(0)[0] - m) < 1e-12);
    CHECK(std::abs(opt.second_moment(0)[0] - v) < 1e-12);
}

TEST_CASE("AdamW: zero gradients apply weight decay only") {
    TrainConfig cfg;
    Tensor p({3}, {1.0, -2.0, 0.25}, true);
    AdamW opt({{"p", &p, ParamGroup::Head}}, cfg);
    opt.step({{0.0, 0.0, 0.0}});
    const double f = 1.0 - cfg.base_lr * cfg.weight_decay;
    CHECK(p[0] == 1.0 * f);
    CHECK(p[1] == -2.0 * f);
    CHECK(p[2] == 0.25 * f);
    CHECK_THROWS_AS(opt.step({}), DimensionError);
}

TEST_CASE("AdamW: encoder parameters step at 0.1 x base_lr") {
    TrainConfig cfg;
    TransAVS model = TransAVS::init(tiny_model(), 0);
    AdamW opt(model.parameters(), cfg);
    std::size_t backbone = 0, head = 0;
    for (std::size_t i = 0; i < opt.params().size(); ++i) {
        const auto& ref = opt.params()[i];
        if (ref.group == ParamGroup::Backbone) {
            ++backbone;
            CHECK(ref.name.rfind("enc.", 0) == 0);
            CHECK(opt.effective_lr(i) == doctest::Approx(cfg.base_lr * 0.1).epsilon(1e-15));
        } else {
            ++head;
            CHECK(ref.name.rfind("enc.", 0) != 0);
            CHECK(opt.effective_lr(i) == cfg.base_lr);
        }
    }
    CHECK(backbone > 0);
    CHECK(head > 0);
}

TEST_CASE("learning-rate factor: constant and polynomial decay") {
    TrainConfig cfg;
    cfg.max_iterations = 100;
    CHECK(lr_factor(0, cfg) == 1.0);
    CHECK(lr_factor(73, cfg) == 1.0);
    cfg.lr_poly_power = 1.0;
    CHECK(lr_factor(0, cfg) == 1.0);
    CHECK(lr_factor(50, cfg) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(lr_factor(100, cfg) == 0.0);
    CHECK(lr_factor(150, cfg) == 0.0);
    cfg.lr_poly_power = 0.9;
    CHECK(lr_factor(25, cfg) == doctest::Approx(std::pow(0.75, 0.9)).epsilon(1e-15));
    double prev = 2.0;
    for (std::size_t it = 0; it <= 100; ++it) {
        CHECK(lr_factor(it, cfg) <= prev);
        prev = lr_factor(it, cfg);
    }
    cfg.lr_poly_power = -1.0;
    CHECK_THROWS_AS(cfg.validate(), UsageError);
}

TEST_CASE("AdamW: lr_scale acts as a smaller base learning rate") {
    TrainConfig a, b;
    b.base_lr = a.base_lr * 0.25;
    Tensor p({2}, {1.0, -0.5}, true), q({2}, {1.0, -0.5}, true);
    AdamW oa({{"p", &p, ParamGroup::Head}}, a), ob({{"p", &q, ParamGroup::Head}}, b);
    for (int t = 0; t < 5; ++t) {
        oa.step({{p[0] - 2.0, p[1]}}, 0.25);
        ob.step({{q[0] - 2.0, q[1]}});
        CHECK(p[0] == doctest::Approx(q[0]).epsilon(1e-14));
        CHECK(p[1] == doctest::Approx(q[1]).epsilon(1e-14));
    }
}

TEST_CASE("train_step: global gradient clipping rescales the reduced gradient") {
    auto data = clips(2, 400);
    std::vector<const synth::SceneClip*> batch{&data[0], &data[1]};
    TrainConfig cfg = tiny_train(".");
    cfg.grad_clip_norm = 1e-3;

    TransAVS clipped = TransAVS::init(cfg.model, 5);
    AdamW opt_clipped(clipped.parameters(), cfg);
    const auto m = train_step(clipped, opt_clipped, batch, cfg, 0);

    TransAVS manual = TransAVS::init(cfg.model, 5);
    AdamW opt_manual(manual.parameters(), cfg);
    StepMetrics unused;
    auto grads = batch_gradients(manual, batch, cfg, 0, unused);
    double sq = 0.0;
    for (const auto& g : grads)
        for (double x : g) sq += x * x;
    CHECK(m.grad_norm == std::sqrt(sq));
    REQUIRE(m.grad_norm > cfg.grad_clip_norm);
    const double s = cfg.grad_clip_norm / m.grad_norm;
    for (auto& g : grads)
        for (double& x : g) x *= s;
    opt_manual.step(grads);

    const auto a = clipped.state(), b = manual.state();
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t k = 0; k < a[i].tensor.numel(); ++k) CHECK(a[i].tensor[k] == b[i].tensor[k]);

    TrainConfig bad = cfg;
    bad.grad_clip_norm = -1.0;
    CHECK_THROWS_AS(bad.validate(), UsageError);
}

TEST_CASE("train_step: bit-reproducible and independent of the worker count") {
    auto data = clips(2);
    std::vector<const synth::SceneClip*> batch{&data[0], &data[1]};
    TrainConfig cfg = tiny_train(".");
    auto run = [&](std::size_t threads) {
        TrainConfig c = cfg;
        c.threads = threads;
        TransAVS model = TransAVS::init(c.model, 7);
        AdamW opt(model.parameters(), c);
        auto m = train_step(model, opt, batch, c, 0);
        CHECK(m.iteration == 1);
        return std::pair{model.state(), m.loss};
    };
    auto [a, la] = run(1);
    auto [b, lb] = run(1);
    auto [c, lc] = run(2);
    CHECK(la == lb);
    CHECK(la == lc);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].name == b[i].name);
        CHECK(a[i].tensor.numel() == b[i].tensor.numel());
        for (std::size_t k = 0; k < a[i].tensor.numel(); ++k) {
            CHECK(a[i].tensor[k] == b[i].tensor[k]);
            CHECK(a[i].tensor[k] == c[i].tensor[k]);
        }
    }
}

TEST_CASE("train_step: a small step lowers the loss of its batch") {
    auto data = clips(2, 300);
    std::vector<const synth::SceneClip*> batch{&data[0], &data[1]};
    TrainConfig cfg = tiny_train(".");
    cfg.base_lr = 1e-6;
    cfg.encoder_lr_multiplier = 1.0;
    cfg.weight_decay = 0.0;
    TransAVS model = TransAVS::init(cfg.model, 3);
    AdamW opt(model.parameters(), cfg);
    const double before = batch_loss(model, batch, cfg, 0);
    train_step(model, opt, batch, cfg, 0);
    CHECK(batch_loss(model, batch, cfg, 0) < before);
}

TEST_CASE("train_step: non-finite values abort with the offending name") {
    auto data = clips(1);
    std::vector<const synth::SceneClip*> batch{&data[0]};
    TrainConfig cfg = tiny_train(".");
    TransAVS model = TransAVS::init(cfg.model, 0);
    model.head.g.mutable_data()[0] = std::nan("");
    AdamW opt(model.parameters(), cfg);
    try {
        train_step(model, opt, batch, cfg, 0);
        FAIL("expected NonFiniteLoss");
    } catch (const NonFiniteLoss& e) {
        const std::string msg = e.what();
        CHECK(msg.find("dice") != std::string::npos);
    }
}

TEST_CASE("batch indices: epoch-wise permutations") {
    std::vector<int> seen(10, 0);
    for (std::size_t it = 0; it < 5; ++it)
        for (auto i : batch_indices(0, it, 2, 10)) ++seen[i];
    for (int s : seen) CHECK(s == 1);
    CHECK(batch_indices(0, 7, 3, 10) == batch_indices(0, 7, 3, 10));
    CHECK(batch_indices(0, 0, 10, 10) != batch_indices(1, 0, 10, 10));
}

TEST_CASE("checkpoint round trip reproduces forward outputs bit-exactly") {
    auto dir = scratch("ckpt");
    auto data = clips(2);
    std::vector<const synth::SceneClip*> batch{&data[0], &data[1]};
    TrainConfig cfg = tiny_train(dir);
    TransAVS model = TransAVS::init(cfg.model, 5);
    AdamW opt(model.parameters(), cfg);
    for (std::size_t it = 0; it < 3; ++it) train_step(model, opt, batch, cfg, it);
    save_checkpoint(dir / "a.tavs", model, opt);

    TransAVS loaded = load_model(dir / "a.tavs");
    auto p1 = model.forward(data[1]), p2 = loaded.forward(data[1]);
    for (std::size_t t = 0; t < p1.frames.size(); ++t) {
        for (std::size_t i = 0; i < p1.frames[t].masks.numel(); ++i) CHECK(p1.frames[t].masks[i] == p2.frames[t].masks[i]);
        for (std::size_t i = 0; i < p1.frames[t].probs.numel(); ++i) CHECK(p1.frames[t].probs[i] == p2.frames[t].probs[i]);
    }

    TransAVS resumed = TransAVS::init(cfg.model, 99);
    AdamW opt2(resumed.parameters(), cfg);
    CHECK(load_checkpoint(dir / "a.tavs", resumed, opt2) == 3);
    CHECK(opt2.steps() == 3);
    for (std::size_t i = 0; i < opt.params().size(); ++i) CHECK(opt2.first_moment(i) == opt.first_moment(i));
    CHECK_THROWS_AS(load_model(dir / "missing.tavs"), IoError);
    fs::remove_all(dir);
}

TEST_CASE("fit: loss decreases, resume continues identically, zero iterations") {
    auto dir = scratch("fit");
    synth::DatasetSpec spec;
    spec.n_train = 10;
    spec.n_valid = 1;
    spec.n_test = 1;
    spec.height = spec.width = 32;
    auto manifest = synth::write_dataset(dir / "data", spec);

    TrainConfig cfg = tiny_train(dir / "full");
    cfg.data = manifest.path.string();
    auto full = fit(cfg);
    CHECK(full.iterations == 50);
    CHECK(fs::exists(checkpoint_path(dir / "full", 0)));
    CHECK(fs::exists(checkpoint_path(dir / "full", 25)));
    CHECK(fs::exists(checkpoint_path(dir / "full", 50)));
    CHECK(full.final_checkpoint == checkpoint_path(dir / "full", 50));
    CHECK(fs::exists(dir / "full" / "config.txt"));

    const auto log = lines(dir / "full" / "loss.csv");
    REQUIRE(log.size() == 51);
    CHECK(log[0] == "iter,loss,aqdl,aqml,class,dice,delta1,delta2");
    std::vector<double> loss;
    for (std::size_t i = 1; i < log.size(); ++i) {
        CHECK(std::stoul(log[i]) == i);
        loss.push_back(std::stod(log[i].substr(log[i].find(',') + 1)));
    }
    double early = 0.0, late = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
        early += loss[i];  // iterations 1..10
        late += loss[40 + i];  // iterations 41..50
    }
    CHECK(late < early);

    // Resume from iteration 25 in a copy of the run directory.
    fs::create_directories(dir / "resumed");
    fs::copy(dir / "full" / "loss.csv", dir / "resumed" / "loss.csv");
    TrainConfig rcfg = cfg;
    rcfg.out_dir = (dir / "resumed").string();
    fit(rcfg, checkpoint_path(dir / "full", 25));
    CHECK(slurp(dir / "resumed" / "loss.csv") == slurp(dir / "full" / "loss.csv"));
    CHECK(slurp(checkpoint_path(dir / "resumed", 50)) == slurp(checkpoint_path(dir / "full", 50)));

    TrainConfig zcfg = cfg;
    zcfg.max_iterations = 0;
    zcfg.out_dir = (dir / "zero").string();
    auto zero = fit(zcfg);
    CHECK(zero.iterations == 0);
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir / "zero" / "checkpoints")) {
        CHECK(e.path().filename() == "iter_000000.tavs");
        ++n;
    }
    CHECK(n == 1);
    CHECK(lines(dir / "zero" / "loss.csv").size() == 1);
    fs::remove_all(dir);
}

TEST_CASE("config: parse, apply, format round trip and unknown keys") {
    auto map = parse_config_text("# run\nbase_lr = 0.001\nloss.delta1_mode = \"fixed\"\nmodel.queries=12\n\n");
    CHECK(map.at("base_lr") == "0.001");
    CHECK(map.at("loss.delta1_mode") == "fixed");
    TrainConfig cfg;
    apply_config(cfg, map);
    CHECK(cfg.base_lr == 0.001);
    CHECK(cfg.loss.delta1_mode == ThresholdMode::Fixed);
    CHECK(cfg.model.queries == 12);

    TrainConfig again;
    apply_config(again, parse_config_text(format_config(cfg)));
    CHECK(format_config(again) == format_config(cfg));

    try {
        apply_config(cfg, {{"nonsense.key", "1"}});
        FAIL("expected UsageError");
    } catch (const UsageError& e) {
        CHECK(std::string(e.what()).find("nonsense.key") != std::string::npos);
    }
    CHECK_THROWS_AS(apply_config(cfg, {{"batch_size", "many"}}), UsageError);
    CHECK_THROWS_AS(read_config_file("/nonexistent/run.cfg"), IoError);
    TrainConfig bad;
    bad.base_lr = 0.0;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = TrainConfig{};
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), UsageError);
}
