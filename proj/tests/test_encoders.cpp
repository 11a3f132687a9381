#include "doctest.h"

#include "transavs/encoders.hpp"
#include "transavs/errors.hpp"
#include "transavs/gradcheck.hpp"

#include <cmath>
#include <random>

using namespace transavs;

namespace {

EncoderConfig small_config() {
    EncoderConfig cfg;
    cfg.d = 8;
    cfg.stage_channels = {4, 4, 4};
    cfg.audio_hidden = 8;
    return cfg;
}

void fill(Tensor& t, double v) {
    for (auto& x : t.mutable_data()) x = v;
}

}  // namespace

TEST_CASE("encode_visual: pyramid shapes for a 64x64 frame") {
    std::mt19937_64 rng(1);
    EncoderConfig cfg;
    auto p = EncoderParams::init(cfg, rng);
    Tensor frame = Tensor::uniform({3, 64, 64}, rng, 0.0, 1.0);
    VisualPyramid pyr = encode_visual(p, frame);
    CHECK(pyr.scale(1).shape() == Shape{cfg.d, 8, 8});
    CHECK(pyr.scale(2).shape() == Shape{cfg.d, 16, 16});
    CHECK(pyr.scale(3).shape() == Shape{cfg.d, 32, 32});
    CHECK(pyr.full.shape() == Shape{cfg.d, 64, 64});
}

TEST_CASE("encode_visual: non-square frames keep the ladder") {
    std::mt19937_64 rng(2);
    auto cfg = small_config();
    auto p = EncoderParams::init(cfg, rng);
    VisualPyramid pyr = encode_visual(p, Tensor::uniform({3, 32, 64}, rng, 0.0, 1.0));
    CHECK(pyr.scale(1).shape() == Shape{8, 4, 8});
    CHECK(pyr.scale(2).shape() == Shape{8, 8, 16});
    CHECK(pyr.scale(3).shape() == Shape{8, 16, 32});
    CHECK(pyr.full.shape() == Shape{8, 32, 64});
}

TEST_CASE("encode_visual: zero image and zero biases give zero features") {
    std::mt19937_64 rng(3);
    auto cfg = small_config();
    auto p = EncoderParams::init(cfg, rng);
    for (auto& b : p.conv_b) fill(b, 0.0);
    for (auto& b : p.proj_b) fill(b, 0.0);
    VisualPyramid pyr = encode_visual(p, Tensor::zeros({3, 32, 32}));
    for (std::size_t i = 1; i <= 3; ++i)
        for (double v : pyr.scale(i).data()) CHECK(v == 0.0);
    for (double v : pyr.full.data()) CHECK(v == 0.0);
}

TEST_CASE("encode_visual: wrong channel count or size throws") {
    std::mt19937_64 rng(4);
    auto cfg = small_config();
    auto p = EncoderParams::init(cfg, rng);
    CHECK_THROWS_AS(encode_visual(p, Tensor::zeros({1, 32, 32})), DimensionError);
    CHECK_THROWS_AS(encode_visual(p, Tensor::zeros({3, 30, 32})), DimensionError);
    CHECK_THROWS_AS(encode_visual(p, Tensor::zeros({3, 32})), DimensionError);
}

TEST_CASE("encode_visual: finite differences on sum(f_v^1) w.r.t. first-layer weights") {
    std::mt19937_64 rng(5);
    auto cfg = small_config();
    auto p = EncoderParams::init(cfg, rng);
    Tensor frame = Tensor::uniform({3, 16, 16}, rng, 0.0, 1.0);
    auto rep = gradcheck(
        [&](auto in) {
            EncoderParams q = p;
            q.conv_w[0] = in[0];
            return sum(encode_visual(q, frame).scale(1));
        },
        {p.conv_w[0]});
    CHECK(rep.checked == p.conv_w[0].numel());
    CHECK(rep.max_rel_error < 1e-5);
}

TEST_CASE("encode_audio: shape, per-slice independence and permutation") {
    std::mt19937_64 rng(6);
    auto cfg = small_config();
    auto p = EncoderParams::init(cfg, rng);
    const std::size_t slice = cfg.freq_bins * cfg.time_bins;
    Tensor spec = Tensor::uniform({5, cfg.freq_bins, cfg.time_bins}, rng, 0.0, 1.0);
    Tensor fa = encode_audio(p, cfg, spec);
    CHECK(fa.shape() == Shape{5, cfg.d});

    // Reverse the slice order: output rows reverse identically.
    std::vector<double> rev(spec.numel());
    for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t i = 0; i < slice; ++i) rev[(4 - t) * slice + i] = spec[t * slice + i];
    Tensor fr = encode_audio(p, cfg, Tensor(spec.shape(), rev));
    for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t c = 0; c < cfg.d; ++c) CHECK(std::abs(fr[(4 - t) * cfg.d + c] - fa[t * cfg.d + c]) < 1e-12);

    // Clips sharing slice 2 share row 2.
    Tensor other = Tensor::uniform(spec.shape(), rng, 0.0, 1.0);
    std::vector<double> mix(other.data().begin(), other.data().end());
    for (std::size_t i = 0; i < slice; ++i) mix[2 * slice + i] = spec[2 * slice + i];
    Tensor fm = encode_audio(p, cfg, Tensor(spec.shape(), mix));
    for (std::size_t c = 0; c < cfg.d; ++c) CHECK(fm[2 * cfg.d + c] == fa[2 * cfg.d + c]);
}

TEST_CASE("encode_audio: wrong T or slice size throws") {
    std::mt19937_64 rng(7);
    auto cfg = small_config();
    auto p = EncoderParams::init(cfg, rng);
    CHECK_THROWS_AS(encode_audio(p, cfg, Tensor::zeros({4, cfg.freq_bins, cfg.time_bins})), DimensionError);
    CHECK_THROWS_AS(encode_audio(p, cfg, Tensor::zeros({5, cfg.freq_bins, cfg.time_bins + 1})), DimensionError);
}

TEST_CASE("encoders: every parameter passes gradcheck") {
    std::mt19937_64 rng(8);
    auto cfg = small_config();
    cfg.freq_bins = 4;
    cfg.time_bins = 2;
    auto p = EncoderParams::init(cfg, rng);
    std::vector<ParamRef> refs;
    p.collect(refs);
    std::vector<Tensor> leaves;
    for (auto& r : refs) leaves.push_back(*r.tensor);

    Tensor frame = Tensor::uniform({3, 8, 8}, rng, 0.0, 1.0);
    Tensor spec = Tensor::uniform({5, 4, 2}, rng, 0.0, 1.0);
    std::vector<Tensor> weights;
    auto rep = gradcheck(
        [&](auto in) {
            std::size_t k = 0;
            for (auto& r : refs) *r.tensor = in[k++];
            VisualPyramid pyr = encode_visual(p, frame);
            Tensor fa = encode_audio(p, cfg, spec);
            std::vector<Tensor> outs{pyr.scale(1), pyr.scale(2), pyr.scale(3), pyr.full, fa};
            if (weights.empty()) {
                std::mt19937_64 wrng(99);
                for (auto& o : outs) weights.push_back(Tensor::randn(o.shape(), wrng));
            }
            Tensor total = Tensor::scalar(0.0);
            for (std::size_t i = 0; i < outs.size(); ++i) total = add(total, sum(mul(outs[i], weights[i])));
            return total;
        },
        leaves);
    CHECK(rep.checked > 0);
    CHECK(rep.max_rel_error < 1e-4);
}
