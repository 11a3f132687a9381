#pragma once

// Trainable stand-ins for the visual and audio backbones.
//
// Visual: three stride-2 3×3 conv+ReLU stages tapped at strides 2, 4, 8. Each
// tap gets a learned 1×1 projection to d channels:
//   f_v^3 : d × H/2 × W/2   (stage 1)
//   f_v^2 : d × H/4 × W/4   (stage 2)
//   f_v^1 : d × H/8 × W/8   (stage 3)
//   f_v^4 : d × H   × W     (nearest 2× upsample of f_v^3, then 1×1 conv)
// Audio: each spectrogram slice is flattened and passed through a two-layer
// MLP, so row t of F_a depends on slice t only.

#include "transavs/params.hpp"
#include "transavs/tensor.hpp"

#include <array>
#include <random>
#include <vector>

namespace transavs {

struct EncoderConfig {
    std::size_t d = 32;
    std::array<std::size_t, 3> stage_channels{16, 32, 32};
    std::size_t steps = 5;       // T
    std::size_t freq_bins = 32;  // spectrogram slice height
    std::size_t time_bins = 8;   // spectrogram slice width
    std::size_t audio_hidden = 64;
};

struct EncoderParams {
    std::array<Tensor, 3> conv_w;  // [C_i, C_{i-1}*9]
    std::array<Tensor, 3> conv_b;  // [C_i]
    std::array<Tensor, 4> proj_w;  // [d, C] per output scale (index 0 -> f_v^1)
    std::array<Tensor, 4> proj_b;  // [d]
    Tensor aud_w1, aud_b1, aud_w2, aud_b2;

    static EncoderParams init(const EncoderConfig& cfg, std::mt19937_64& rng);
    void collect(std::vector<ParamRef>& out);
};

struct VisualPyramid {
    std::array<Tensor, 3> scales;  // scales[i-1] is f_v^i, [d, h_i, w_i]
    Tensor full;                   // f_v^4, [d, H, W]

    const Tensor& scale(std::size_t i) const { return scales.at(i - 1); }
};

/// frame: [3, H, W]; H and W must be divisible by 8.
VisualPyramid encode_visual(const EncoderParams& p, const Tensor& frame);

/// spectrogram: [T, F, Tb] -> F_a: [T, d]. Throws DimensionError when T or the
/// slice size differ from the configured ones.
Tensor encode_audio(const EncoderParams& p, const EncoderConfig& cfg, const Tensor& spectrogram);

}  // namespace transavs
