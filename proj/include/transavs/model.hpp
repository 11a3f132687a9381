#pragma once

#include "transavs/encoders.hpp"
#include "transavs/fusion.hpp"
#include "transavs/mask_head.hpp"
#include "transavs/synth.hpp"
#include "transavs/tavs_io.hpp"

#include <cstdint>
#include <vector>

namespace transavs {

struct ModelConfig {
    std::size_t queries = 100;  // N
    std::size_t d = 32;
    std::size_t encoder_layers = 2;  // N_1
    std::size_t decoder_layers = 6;  // N_2
    std::size_t steps = synth::kClipSteps;
    std::size_t schedule_offset = 0;
    bool ffn = false;
    std::array<std::size_t, 3> stage_channels{16, 32, 32};
    std::size_t audio_hidden = 64;

    EncoderConfig encoder() const;
    FusionConfig fusion() const;
};

struct ClipPrediction {
    Tensor audio;    // F_a, [T, d]
    Tensor queries;  // A_q, [N, d]
    std::vector<PredictionSet> frames;
};

class TransAVS {
  public:
    static TransAVS init(const ModelConfig& cfg, std::uint64_t seed);

    /// Deep copy with independent parameter leaves.
    TransAVS clone() const;

    std::vector<ParamRef> parameters();
    std::vector<const Tensor*> parameter_tensors() const;

    /// Runs every frame of the clip, or only `frame_limit` leading frames.
    ClipPrediction forward(const synth::SceneClip& clip, std::size_t frame_limit = 0,
                           FusionTrace* trace = nullptr) const;

    /// Parameters plus a `meta.model` record of the configuration.
    std::vector<NamedTensor> state() const;
    static TransAVS from_state(const std::vector<NamedTensor>& state);

    ModelConfig config;
    EncoderParams encoder;
    FusionParams fusion;
    HeadParams head;
    Tensor projection;  // h, [d, d]; used by the query-distance loss only
};

}  // namespace transavs
