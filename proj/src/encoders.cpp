#include "transavs/encoders.hpp"

#include <cmath>

namespace transavs {

Tensor init_weight(Shape shape, std::size_t fan_in, std::mt19937_64& rng, double gain) {
    return Tensor::randn(std::move(shape), rng, gain / std::sqrt(static_cast<double>(fan_in)), true);
}

EncoderParams EncoderParams::init(const EncoderConfig& cfg, std::mt19937_64& rng) {
    EncoderParams p;
    std::size_t cin = 3;
    for (std::size_t i = 0; i < 3; ++i) {
        const auto cout = cfg.stage_channels[i];
        p.conv_w[i] = init_weight({cout, cin * 9}, cin * 9, rng, std::sqrt(2.0));
        p.conv_b[i] = Tensor::zeros({cout}, true);
        cin = cout;
    }
    // Taps: f_v^1 <- stage 3, f_v^2 <- stage 2, f_v^3 <- stage 1, f_v^4 <- f_v^3.
    const std::array<std::size_t, 4> proj_in{cfg.stage_channels[2], cfg.stage_channels[1], cfg.stage_channels[0], cfg.d};
    for (std::size_t i = 0; i < 4; ++i) {
        p.proj_w[i] = init_weight({cfg.d, proj_in[i]}, proj_in[i], rng);
        p.proj_b[i] = Tensor::zeros({cfg.d}, true);
    }
    const auto slice = cfg.freq_bins * cfg.time_bins;
    p.aud_w1 = init_weight({slice, cfg.audio_hidden}, slice, rng, std::sqrt(2.0));
    p.aud_b1 = Tensor::zeros({cfg.audio_hidden}, true);
    p.aud_w2 = init_weight({cfg.audio_hidden, cfg.d}, cfg.audio_hidden, rng);
    p.aud_b2 = Tensor::zeros({cfg.d}, true);
    return p;
}

void EncoderParams::collect(std::vector<ParamRef>& out) {
    for (std::size_t i = 0; i < 3; ++i) {
        out.push_back({"enc.vis.conv" + std::to_string(i + 1) + ".w", &conv_w[i], ParamGroup::Backbone});
        out.push_back({"enc.vis.conv" + std::to_string(i + 1) + ".b", &conv_b[i], ParamGroup::Backbone});
    }
    for (std::size_t i = 0; i < 4; ++i) {
        out.push_back({"enc.proj." + std::to_string(i + 1), &proj_w[i], ParamGroup::Backbone});
        out.push_back({"enc.proj." + std::to_string(i + 1) + ".b", &proj_b[i], ParamGroup::Backbone});
    }
    out.push_back({"enc.aud.w1", &aud_w1, ParamGroup::Backbone});
    out.push_back({"enc.aud.b1", &aud_b1, ParamGroup::Backbone});
    out.push_back({"enc.aud.w2", &aud_w2, ParamGroup::Backbone});
    out.push_back({"enc.aud.b2", &aud_b2, ParamGroup::Backbone});
}

namespace {

// 1×1 convolution: [C, h, w] -> [d, h, w].
Tensor pointwise(const Tensor& x, const Tensor& w, const Tensor& b) {
    const auto c = x.dim(0), h = x.dim(1), wd = x.dim(2);
    Tensor flat = reshape(x, {c, h * wd});
    Tensor y = add_col_vector(matmul(w, flat), b);
    return reshape(y, {w.dim(0), h, wd});
}

}  // namespace

VisualPyramid encode_visual(const EncoderParams& p, const Tensor& frame) {
    if (frame.ndim() != 3 || frame.dim(0) != 3)
        throw DimensionError("encode_visual: expected a [3, H, W] frame, got " + shape_str(frame.shape()));
    if (frame.dim(1) % 8 != 0 || frame.dim(2) % 8 != 0)
        throw DimensionError("encode_visual: H and W must be divisible by 8, got " + shape_str(frame.shape()));

    std::array<Tensor, 3> stage;
    Tensor x = frame;
    for (std::size_t i = 0; i < 3; ++i) {
        Tensor y = conv2d(x, p.conv_w[i], 3, 2, 1);
        const auto c = y.dim(0), h = y.dim(1), w = y.dim(2);
        y = reshape(relu(add_col_vector(reshape(y, {c, h * w}), p.conv_b[i])), {c, h, w});
        stage[i] = y;
        x = y;
    }
    VisualPyramid out;
    out.scales[0] = pointwise(stage[2], p.proj_w[0], p.proj_b[0]);
    out.scales[1] = pointwise(stage[1], p.proj_w[1], p.proj_b[1]);
    out.scales[2] = pointwise(stage[0], p.proj_w[2], p.proj_b[2]);
    out.full = pointwise(upsample_nearest2x(out.scales[2]), p.proj_w[3], p.proj_b[3]);
    return out;
}

Tensor encode_audio(const EncoderParams& p, const EncoderConfig& cfg, const Tensor& spectrogram) {
    if (spectrogram.ndim() != 3 || spectrogram.dim(0) != cfg.steps || spectrogram.dim(1) != cfg.freq_bins ||
        spectrogram.dim(2) != cfg.time_bins) {
        throw DimensionError("encode_audio: expected [" + std::to_string(cfg.steps) + "x" +
                             std::to_string(cfg.freq_bins) + "x" + std::to_string(cfg.time_bins) + "], got " +
                             shape_str(spectrogram.shape()));
    }
    Tensor x = reshape(spectrogram, {cfg.steps, cfg.freq_bins * cfg.time_bins});
    Tensor hidden = relu(add_row_vector(matmul(x, p.aud_w1), p.aud_b1));
    return add_row_vector(matmul(hidden, p.aud_w2), p.aud_b2);
}

}  // namespace transavs
