#include "transavs/verify.hpp"

#include "transavs/fusion.hpp"
#include "transavs/gradcheck.hpp"
#include "transavs/inference.hpp"
#include "transavs/losses.hpp"
#include "transavs/model.hpp"
#include "transavs/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <random>

namespace transavs::verify {

namespace {

CheckResult finish(std::string name, double err, double tol, std::size_t cases, std::string detail = {}) {
    CheckResult r;
    r.name = std::move(name);
    r.max_error = err;
    r.tolerance = tol;
    r.cases = cases;
    r.passed = std::isfinite(err) && err <= tol;
    r.detail = std::move(detail);
    return r;
}

CheckResult from_report(std::string name, const GradcheckReport& rep) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "worst input %zu index %zu", rep.worst_input, rep.worst_index);
    CheckResult r = finish(std::move(name), rep.max_rel_error, kGradTolerance, rep.checked, buf);
    r.passed = r.passed && rep.checked > 0;
    return r;
}

// Entries bounded away from 0 so kinks and log/sqrt domains are not probed.
Tensor away_from_zero(Shape shape, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> mag(0.2, 1.5);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = sign(rng) ? mag(rng) : -mag(rng);
    return Tensor(std::move(shape), std::move(v), true);
}

Tensor positive(Shape shape, std::mt19937_64& rng) { return Tensor::uniform(std::move(shape), rng, 0.3, 2.0, true); }

Tensor randn(Shape shape, std::mt19937_64& rng) { return Tensor::randn(std::move(shape), rng, 1.0, true); }

// Contracts an op's output with fixed random weights so every output entry
// contributes a distinct sensitivity.
Tensor contract(const Tensor& y, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ y.numel());
    Tensor w = Tensor::uniform(y.shape(), rng, -1.0, 1.0);
    return sum(mul(y, w));
}

struct OpCase {
    const char* name;
    std::vector<Tensor> inputs;
    std::function<Tensor(std::span<const Tensor>)> op;
};

BinaryMask random_mask(std::size_t h, std::size_t w, double density, std::mt19937_64& rng) {
    BinaryMask m(h, w);
    std::bernoulli_distribution on(density);
    for (auto& b : m.bits) b = on(rng) ? 1 : 0;
    return m;
}

std::vector<double> softmax_rows_raw(std::vector<double> logits, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < n; ++i) {
        double top = logits[i * k];
        for (std::size_t c = 1; c < k; ++c) top = std::max(top, logits[i * k + c]);
        double z = 0.0;
        for (std::size_t c = 0; c < k; ++c) z += (logits[i * k + c] = std::exp(logits[i * k + c] - top));
        for (std::size_t c = 0; c < k; ++c) logits[i * k + c] /= z;
    }
    return logits;
}

}  // namespace

std::vector<CheckResult> op_gradients(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::vector<std::size_t> rows{2, 0, 3};
    const std::vector<std::size_t> cols{1, 0, 3, 2};
    std::vector<OpCase> cases;
    cases.push_back({"grad.matmul", {randn({4, 5}, rng), randn({5, 3}, rng)},
                     [](auto in) { return matmul(in[0], in[1]); }});
    cases.push_back({"grad.transpose", {randn({3, 4}, rng)}, [](auto in) { return transpose(in[0]); }});
    cases.push_back({"grad.add", {randn({2, 3}, rng), randn({2, 3}, rng)}, [](auto in) { return add(in[0], in[1]); }});
    cases.push_back({"grad.sub", {randn({2, 3}, rng), randn({2, 3}, rng)}, [](auto in) { return sub(in[0], in[1]); }});
    cases.push_back({"grad.mul", {randn({2, 3}, rng), randn({2, 3}, rng)}, [](auto in) { return mul(in[0], in[1]); }});
    cases.push_back({"grad.div", {randn({2, 3}, rng), away_from_zero({2, 3}, rng)},
                     [](auto in) { return div(in[0], in[1]); }});
    cases.push_back({"grad.scale", {randn({2, 3}, rng)}, [](auto in) { return scale(in[0], -1.7); }});
    cases.push_back({"grad.add_scalar", {randn({2, 3}, rng)}, [](auto in) { return add_scalar(in[0], 0.4); }});
    cases.push_back({"grad.relu", {away_from_zero({3, 4}, rng)}, [](auto in) { return relu(in[0]); }});
    cases.push_back({"grad.log", {positive({2, 3}, rng)}, [](auto in) { return log(in[0]); }});
    cases.push_back({"grad.exp", {randn({2, 3}, rng)}, [](auto in) { return exp(in[0]); }});
    cases.push_back({"grad.square", {randn({2, 3}, rng)}, [](auto in) { return square(in[0]); }});
    cases.push_back({"grad.sqrt", {positive({2, 3}, rng)}, [](auto in) { return sqrt(in[0]); }});
    cases.push_back({"grad.pow", {positive({2, 3}, rng)}, [](auto in) { return pow(in[0], 2.5); }});
    cases.push_back({"grad.sigmoid", {randn({2, 3}, rng)}, [](auto in) { return sigmoid(in[0]); }});
    cases.push_back({"grad.clamp_min", {away_from_zero({3, 4}, rng)}, [](auto in) { return clamp_min(in[0], 0.0); }});
    cases.push_back({"grad.add_row_vector", {randn({3, 4}, rng), randn({4}, rng)},
                     [](auto in) { return add_row_vector(in[0], in[1]); }});
    cases.push_back({"grad.add_col_vector", {randn({3, 4}, rng), randn({3}, rng)},
                     [](auto in) { return add_col_vector(in[0], in[1]); }});
    cases.push_back({"grad.sum", {randn({2, 3}, rng)}, [](auto in) { return scale(sum(in[0]), 1.3); }});
    cases.push_back({"grad.mean", {randn({2, 3}, rng)}, [](auto in) { return scale(mean(in[0]), 1.3); }});
    cases.push_back({"grad.softmax_rows", {randn({3, 4}, rng)}, [](auto in) { return softmax_rows(in[0]); }});
    cases.push_back({"grad.log_softmax_rows", {randn({3, 4}, rng)}, [](auto in) { return log_softmax_rows(in[0]); }});
    cases.push_back({"grad.reshape", {randn({2, 6}, rng)}, [](auto in) { return reshape(in[0], {3, 4}); }});
    cases.push_back({"grad.concat", {randn({2, 3}, rng), randn({1, 3}, rng)}, [](auto in) {
                         return concat(std::vector<Tensor>{in[0], in[1]});
                     }});
    cases.push_back({"grad.index_rows", {randn({4, 3}, rng)}, [rows](auto in) { return index_rows(in[0], rows); }});
    cases.push_back({"grad.select_per_row", {randn({4, 5}, rng)},
                     [cols](auto in) { return select_per_row(in[0], cols); }});
    cases.push_back({"grad.upsample_nearest2x", {randn({2, 2, 3}, rng)},
                     [](auto in) { return upsample_nearest2x(in[0]); }});
    cases.push_back({"grad.conv2d", {randn({2, 6, 5}, rng), randn({3, 2 * 9}, rng)},
                     [](auto in) { return conv2d(in[0], in[1], 3, 2, 1); }});
    cases.push_back({"grad.conv2d_1x1", {randn({3, 4, 4}, rng), randn({2, 3}, rng)},
                     [](auto in) { return conv2d(in[0], in[1], 1, 1, 0); }});
    {
        // Pairwise inverse-distance kernel with one gated-off pair.
        Tensor r = randn({3, 4}, rng);
        const std::vector<std::uint8_t> gate{0, 1, 1, 0, 0, 0, 0, 0, 0};
        cases.push_back({"grad.aqdl_kernel", {r}, [gate](auto in) { return aqdl_kernel(in[0], gate, 0.5); }});
    }
    {
        Tensor logits = randn({4, 2}, rng);
        const std::vector<std::size_t> targets{0, 1, 1, 0};
        cases.push_back({"grad.focal_loss", {logits}, [targets](auto in) {
                             return focal_loss(log_softmax_rows(in[0]), targets, 2.0, 0.25);
                         }});
        BinaryMask y = random_mask(4, 4, 0.4, rng);
        cases.push_back({"grad.dice_loss", {randn({1, 16}, rng)},
                         [y](auto in) { return dice_loss(sigmoid(in[0]), y, 1.0); }});
    }

    std::vector<CheckResult> out;
    std::uint64_t salt = seed;
    for (auto& c : cases) {
        const std::uint64_t s = ++salt;
        auto op = c.op;
        auto f = [op, s](std::span<const Tensor> in) {
            Tensor y = op(in);
            return y.numel() == 1 && y.ndim() == 0 ? y : contract(y, s);
        };
        out.push_back(from_report(c.name, gradcheck(f, c.inputs)));
    }
    return out;
}

CheckResult fusion_gradient(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    FusionConfig cfg;
    cfg.queries = 4;
    cfg.d = 8;
    cfg.encoder_layers = 2;
    cfg.decoder_layers = 2;
    FusionParams params = FusionParams::init(cfg, rng);
    std::vector<ParamRef> refs;
    params.collect(refs);

    std::vector<Tensor> inputs;
    inputs.push_back(randn({cfg.steps, cfg.d}, rng));  // F_a
    inputs.push_back(randn({cfg.d, 1, 1}, rng));        // f_v^1
    inputs.push_back(randn({cfg.d, 2, 2}, rng));        // f_v^2
    inputs.push_back(randn({cfg.d, 2, 4}, rng));        // f_v^3
    const std::size_t fixed = inputs.size();
    for (auto& r : refs) inputs.push_back(*r.tensor);

    auto f = [&, params](std::span<const Tensor> in) mutable {
        std::vector<ParamRef> slots;
        params.collect(slots);
        for (std::size_t i = 0; i < slots.size(); ++i) *slots[i].tensor = in[fixed + i];
        VisualPyramid pyr;
        pyr.scales = {in[1], in[2], in[3]};
        pyr.full = in[3];
        FusionOutput o = run_fusion(in[0], pyr, params, cfg);
        return add(contract(o.fused, 11), contract(o.queries, 12));
    };
    return from_report("grad.run_fusion", gradcheck(f, inputs));
}

CheckResult total_loss_gradient(std::uint64_t seed, bool recipe_terms) {
    ModelConfig mc;
    mc.queries = 4;
    mc.d = 8;
    mc.encoder_layers = 2;
    mc.decoder_layers = 2;
    mc.stage_channels = {4, 4, 4};
    mc.audio_hidden = 8;
    TransAVS model = TransAVS::init(mc, seed);

    std::mt19937_64 rng(seed + 100);
    synth::SceneClip clip;
    clip.height = clip.width = 8;
    for (std::size_t t = 0; t < mc.steps; ++t) {
        clip.frames.push_back(Tensor::uniform({3, 8, 8}, rng, 0.0, 1.0));
        BinaryMask m(8, 8);
        for (std::size_t y = 2 + t % 2; y < 6; ++y)
            for (std::size_t x = 1; x < 5 + t % 3; ++x) m(y, x) = 1;
        clip.gt_masks.push_back(m);
    }
    clip.spectrogram = Tensor::uniform({mc.steps, synth::kFreqBins, synth::kTimeBins}, rng, 0.0, 1.0);

    LossConfig lc;
    lc.delta1_mode = lc.delta2_mode = ThresholdMode::Fixed;
    lc.delta1_fixed = lc.delta2_fixed = 0.2;
    lc.d0 = 1e3;
    if (recipe_terms) {
        lc.no_object_weight = 0.1;
        lc.background_target = true;
    }
    const std::size_t frames = 2;

    // Selections are frozen at the unperturbed point.
    std::vector<LossSelections> sels;
    std::size_t s1_min = mc.queries, s2_min = mc.queries;
    {
        ClipPrediction pred = model.forward(clip, frames);
        for (std::size_t t = 0; t < frames; ++t) {
            sels.push_back(select(pred.frames[t], model.projection, std::span(&clip.gt_masks[t], 1), lc, 0));
            s1_min = std::min(s1_min, sels.back().s1.size());
            s2_min = std::min(s2_min, sels.back().s2.size());
        }
    }

    std::vector<Tensor> inputs;
    for (auto& r : model.parameters()) inputs.push_back(*r.tensor);
    auto f = [&, model](std::span<const Tensor> in) mutable {
        auto slots = model.parameters();
        for (std::size_t i = 0; i < slots.size(); ++i) *slots[i].tensor = in[i];
        ClipPrediction pred = model.forward(clip, frames);
        Tensor acc;
        for (std::size_t t = 0; t < frames; ++t) {
            Tensor l = total_loss(pred.frames[t], model.projection, std::span(&clip.gt_masks[t], 1), lc, sels[t]).total;
            acc = acc.defined() ? add(acc, l) : l;
        }
        return acc;
    };
    CheckResult r = from_report(recipe_terms ? "grad.total_loss.weighted" : "grad.total_loss", gradcheck(f, inputs));
    r.detail += ", min |S1|=" + std::to_string(s1_min) + " min |S2|=" + std::to_string(s2_min);
    return r;
}

CheckResult aqdl_oracle(std::size_t instances, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    std::size_t gated = 0, small = 0;
    for (std::size_t k = 0; k < instances; ++k) {
        const std::size_t n = 1 + rng() % 8, d = 2 + rng() % 6;
        Tensor q = Tensor::randn({n, d}, rng, 0.3 + 0.1 * static_cast<double>(k % 5));
        Tensor h = Tensor::randn({d, d}, rng, 1.0 / std::sqrt(static_cast<double>(d)));
        std::vector<std::size_t> s1;
        for (std::size_t i = 0; i < n; ++i)
            if (rng() % 3 != 0) s1.push_back(i);
        const double d0 = 0.05 + 0.5 * static_cast<double>(rng() % 8);
        const PairNorm norm = k % 2 ? PairNorm::Pairs : PairNorm::Printed;
        small += s1.size() < 2;
        const double ref = oracle::aqdl(q.data(), h.data(), d, s1, d0, norm);
        const double got = aqdl(q, h, s1, d0, norm).item();
        if (s1.size() >= 2) {
            Tensor r = matmul(index_rows(q, s1), h);
            const auto g = distance_gate(r, d0);
            bool any_off = false;
            for (std::size_t i = 0; i < s1.size(); ++i)
                for (std::size_t j = i + 1; j < s1.size(); ++j) any_off = any_off || g[i * s1.size() + j] == 0;
            gated += any_off;
        }
        worst = std::max(worst, std::abs(ref - got) / std::max(1.0, std::abs(ref)));
    }
    return finish("oracle.aqdl", worst, kOracleTolerance, instances,
                  std::to_string(gated) + " with gated pairs, " + std::to_string(small) + " with n<2");
}

CheckResult aqml_oracle(std::size_t instances, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    std::size_t small = 0;
    for (std::size_t k = 0; k < instances; ++k) {
        const std::size_t n = 1 + rng() % 6, hw = 4 + rng() % 61;
        Tensor m = Tensor::uniform({n, hw}, rng, 0.0, 1.0);
        std::vector<std::size_t> s2;
        for (std::size_t i = 0; i < n; ++i)
            if (rng() % 3 != 0) s2.push_back(i);
        const PairNorm norm = k % 2 ? PairNorm::Pairs : PairNorm::Printed;
        small += s2.size() < 2;
        const double ref = oracle::aqml(m.data(), hw, s2, norm);
        const double got = aqml(m, s2, norm).item();
        worst = std::max(worst, std::abs(ref - got));
    }
    return finish("oracle.aqml", worst, kOracleTolerance, instances, std::to_string(small) + " with n<2");
}

CheckResult attention_oracle(std::size_t instances, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (std::size_t k = 0; k < instances; ++k) {
        const std::size_t n = 1 + rng() % 6, m = 1 + rng() % 9, d = 2 + rng() % 15;
        Tensor q = Tensor::randn({n, d}, rng), kk = Tensor::randn({m, d}, rng), v = Tensor::randn({m, d}, rng);
        const auto ref = oracle::attention(q.data(), kk.data(), v.data(), n, m, d);
        const Tensor out = attention(q, kk, v);
        const auto got = out.data();
        for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(ref[i] - got[i]));
    }
    return finish("oracle.attention", worst, kOracleTolerance, instances);
}

CheckResult schedule_check() {
    LossConfig cfg;  // a = 0.55, b = 0.65, n_iter = 5000
    double worst = 0.0;
    std::size_t cases = 0;
    std::string detail;
    auto expect = [&](std::size_t it, double want) {
        const auto [d1, d2] = threshold_at(it, cfg);
        worst = std::max({worst, std::abs(d1 - want), std::abs(d2 - want)});
        ++cases;
    };
    expect(0, 0.55);
    expect(4999, 0.55);
    expect(5000, 0.55 + 0.10 / 18.0);
    expect(90000, 0.65);
    expect(1000000, 0.65);
    double prev = 0.0;
    for (std::size_t it = 0; it <= 200000; it += 250) {
        const double d = threshold_at(it, cfg).first;
        const double ref = oracle::threshold(it, cfg.schedule_a, cfg.schedule_b, cfg.schedule_n_iter);
        worst = std::max(worst, std::abs(d - ref));
        if (d < prev) worst = std::max(worst, prev - d + 1.0), detail = "decrease at " + std::to_string(it);
        if (d < cfg.schedule_a || d > cfg.schedule_b) worst = 1.0, detail = "out of [a, b] at " + std::to_string(it);
        prev = d;
        ++cases;
    }
    LossConfig fixed = cfg;
    fixed.delta1_mode = fixed.delta2_mode = ThresholdMode::Fixed;
    for (std::size_t it : {0, 5000, 90000}) {
        const auto [d1, d2] = threshold_at(it, fixed);
        worst = std::max({worst, std::abs(d1 - 0.6), std::abs(d2 - 0.6)});
        ++cases;
    }
    return finish("schedule.threshold_at", worst, kOracleTolerance, cases, detail);
}

CheckResult round_robin_check() {
    std::mt19937_64 rng(12);
    FusionConfig cfg;
    cfg.queries = 3;
    cfg.d = 4;
    cfg.decoder_layers = 6;
    FusionParams params = FusionParams::init(cfg, rng);
    VisualPyramid pyr;
    const std::array<std::pair<std::size_t, std::size_t>, 3> sizes{{{1, 2}, {2, 2}, {2, 4}}};
    for (std::size_t i = 0; i < 3; ++i)
        pyr.scales[i] = Tensor::randn({cfg.d, sizes[i].first, sizes[i].second}, rng);
    pyr.full = Tensor::randn({cfg.d, 4, 8}, rng);
    FusionTrace trace;
    run_fusion(Tensor::randn({cfg.steps, cfg.d}, rng), pyr, params, cfg, &trace);

    const std::vector<std::size_t> want{2, 3, 1, 2, 3, 1};
    std::size_t mismatches = trace.scales.size() == want.size() ? 0 : 1;
    std::string seen;
    for (std::size_t l = 0; l < std::min(want.size(), trace.kv_shapes.size()); ++l) {
        const auto [h, w] = sizes[want[l] - 1];
        const Shape expect_kv{h * w, cfg.d};
        mismatches += trace.kv_shapes[l] != expect_kv;
        mismatches += l < trace.scales.size() && trace.scales[l] != want[l];
        seen += (seen.empty() ? "" : ",") + shape_str(trace.kv_shapes[l]);
    }
    return finish("fusion.round_robin", static_cast<double>(mismatches), 0.0, want.size(), "kv " + seen);
}

CheckResult jaccard_oracle(std::size_t pairs, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (std::size_t k = 0; k < pairs; ++k) {
        const double da = (k % 10 == 0) ? 0.0 : static_cast<double>(rng() % 100) / 100.0;
        const double db = (k % 7 == 0) ? 0.0 : static_cast<double>(rng() % 100) / 100.0;
        BinaryMask a = random_mask(16, 16, da, rng), b = random_mask(16, 16, db, rng);
        worst = std::max(worst, std::abs(jaccard(a, b) - oracle::jaccard(a, b)));
        worst = std::max(worst, std::abs(jaccard(a, b) - jaccard(b, a)));
    }
    return finish("oracle.jaccard", worst, 0.0, pairs);
}

CheckResult fscore_oracle(std::size_t pairs, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (std::size_t k = 0; k < pairs; ++k) {
        const double da = (k % 10 == 0) ? 0.0 : static_cast<double>(rng() % 100) / 100.0;
        const double db = (k % 7 == 0) ? 0.0 : static_cast<double>(rng() % 100) / 100.0;
        BinaryMask a = random_mask(16, 16, da, rng), b = random_mask(16, 16, db, rng);
        worst = std::max(worst, std::abs(fscore(a, b, 0.3) - oracle::fscore(a, b, 0.3)));
    }
    return finish("oracle.fscore", worst, 0.0, pairs);
}

CheckResult metric_conventions() {
    BinaryMask empty(16, 16), full(16, 16), left(16, 16), right(16, 16);
    for (auto& b : full.bits) b = 1;
    for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x) (x < 8 ? left : right)(y, x) = 1;
    double worst = 0.0;
    auto expect = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
    expect(jaccard(empty, empty), 1.0);
    expect(fscore(empty, empty, 0.3), 1.0);
    expect(jaccard(empty, full), 0.0);
    expect(jaccard(full, empty), 0.0);
    expect(fscore(empty, full, 0.3), 0.0);
    expect(fscore(full, empty, 0.3), 0.0);
    expect(jaccard(left, left), 1.0);
    expect(fscore(left, left, 0.3), 1.0);
    expect(jaccard(left, right), 0.0);
    expect(fscore(left, right, 0.3), 0.0);
    // precision 0.5, recall 1: 1.3·0.5 / (0.3·0.5 + 1)
    expect(fscore(full, left, 0.3), 1.3 * 0.5 / 1.15);
    return finish("metric.conventions", worst, kOracleTolerance, 11);
}

CheckResult fusion_rule_oracle(std::size_t instances, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.5);
    std::size_t mismatched = 0;
    const std::size_t n = 5, k = kNumCategories, h = 8, w = 8;
    for (std::size_t it = 0; it < instances; ++it) {
        std::vector<double> logits(n * k);
        for (auto& x : logits) x = z(rng);
        const auto probs = softmax_rows_raw(logits, n, k);
        std::vector<double> masks(n * h * w);
        for (auto& x : masks) x = 1.0 / (1.0 + std::exp(-z(rng)));
        if (it % 10 == 0)  // duplicated query to exercise ties
            std::copy_n(masks.begin(), h * w, masks.begin() + h * w);
        const BinaryMask ref = oracle::fuse(probs, masks, n, k, h, w);
        const BinaryMask got = fuse_predictions(Tensor({n, k}, probs), Tensor({n, h * w}, masks), h, w);
        mismatched += !(ref == got);
    }
    return finish("oracle.fuse_predictions", static_cast<double>(mismatched), 0.0, instances);
}

CheckResult matching_oracle(std::size_t trials, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    double worst = 0.0;
    std::size_t invalid = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t cols = 1 + rng() % 4;
        const std::size_t rows = 1 + rng() % cols;
        std::vector<double> cost(rows * cols);
        for (auto& c : cost) c = t % 5 == 0 ? std::floor(u(rng) / 3.0) : u(rng);  // integer costs force ties
        const auto assign = hungarian(cost, rows, cols);
        std::vector<std::uint8_t> used(cols, 0);
        double total = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            if (assign[r] >= cols || used[assign[r]]) ++invalid;
            else used[assign[r]] = 1, total += cost[r * cols + assign[r]];
        }
        worst = std::max(worst, std::abs(total - oracle::best_assignment_cost(cost, rows, cols)));
    }
    return finish("oracle.hungarian", invalid > 0 ? 1.0 : worst, kOracleTolerance, trials,
                  std::to_string(invalid) + " invalid assignments");
}

std::vector<CheckResult> run_all() {
    std::vector<CheckResult> out = op_gradients();
    out.push_back(fusion_gradient());
    out.push_back(total_loss_gradient());
    out.push_back(total_loss_gradient(3, true));
    out.push_back(aqdl_oracle());
    out.push_back(aqml_oracle());
    out.push_back(attention_oracle());
    out.push_back(schedule_check());
    out.push_back(round_robin_check());
    out.push_back(jaccard_oracle());
    out.push_back(fscore_oracle());
    out.push_back(metric_conventions());
    out.push_back(fusion_rule_oracle());
    out.push_back(matching_oracle());
    return out;
}

void print_table(std::ostream& out, const std::vector<CheckResult>& results) {
    char line[256];
    std::snprintf(line, sizeof line, "%-28s %-4s %12s %10s %7s  %s\n", "check", "ok", "max_error", "tolerance",
                  "cases", "detail");
    out << line;
    for (const auto& r : results) {
        std::snprintf(line, sizeof line, "%-28s %-4s %12.3e %10.1e %7zu  %s\n", r.name.c_str(),
                      r.passed ? "PASS" : "FAIL", r.max_error, r.tolerance, r.cases, r.detail.c_str());
        out << line;
    }
}

}  // namespace transavs::verify
