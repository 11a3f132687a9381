#include "transavs/model.hpp"

#include <random>

namespace transavs {

namespace {

constexpr double kMetaVersion = 1.0;

std::vector<double> encode_config(const ModelConfig& c) {
    return {kMetaVersion,
            static_cast<double>(c.queries),
            static_cast<double>(c.d),
            static_cast<double>(c.encoder_layers),
            static_cast<double>(c.decoder_layers),
            static_cast<double>(c.steps),
            static_cast<double>(c.schedule_offset),
            c.ffn ? 1.0 : 0.0,
            static_cast<double>(c.stage_channels[0]),
            static_cast<double>(c.stage_channels[1]),
            static_cast<double>(c.stage_channels[2]),
            static_cast<double>(c.audio_hidden)};
}

ModelConfig decode_config(const Tensor& meta) {
    auto v = meta.data();
    if (v.size() != 12 || v[0] != kMetaVersion) throw IoError("checkpoint: unsupported meta.model record");
    auto z = [&](std::size_t i) { return static_cast<std::size_t>(v[i]); };
    ModelConfig c;
    c.queries = z(1);
    c.d = z(2);
    c.encoder_layers = z(3);
    c.decoder_layers = z(4);
    c.steps = z(5);
    c.schedule_offset = z(6);
    c.ffn = v[7] != 0.0;
    c.stage_channels = {z(8), z(9), z(10)};
    c.audio_hidden = z(11);
    return c;
}

}  // namespace

EncoderConfig ModelConfig::encoder() const {
    EncoderConfig e;
    e.d = d;
    e.stage_channels = stage_channels;
    e.steps = steps;
    e.freq_bins = synth::kFreqBins;
    e.time_bins = synth::kTimeBins;
    e.audio_hidden = audio_hidden;
    return e;
}

FusionConfig ModelConfig::fusion() const {
    FusionConfig f;
    f.queries = queries;
    f.d = d;
    f.steps = steps;
    f.encoder_layers = encoder_layers;
    f.decoder_layers = decoder_layers;
    f.schedule_offset = schedule_offset;
    f.ffn = ffn;
    return f;
}

TransAVS TransAVS::init(const ModelConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    TransAVS m;
    m.config = cfg;
    m.encoder = EncoderParams::init(cfg.encoder(), rng);
    m.fusion = FusionParams::init(cfg.fusion(), rng);
    m.head = HeadParams::init(cfg.d, rng);
    m.projection = init_weight({cfg.d, cfg.d}, cfg.d, rng);
    return m;
}

std::vector<ParamRef> TransAVS::parameters() {
    std::vector<ParamRef> out;
    encoder.collect(out);
    fusion.collect(out);
    head.collect(out);
    out.push_back({"loss.h", &projection, ParamGroup::Head});
    return out;
}

std::vector<const Tensor*> TransAVS::parameter_tensors() const {
    auto refs = const_cast<TransAVS*>(this)->parameters();
    std::vector<const Tensor*> out;
    out.reserve(refs.size());
    for (auto& r : refs) out.push_back(r.tensor);
    return out;
}

TransAVS TransAVS::clone() const {
    TransAVS copy = *this;
    for (auto& ref : copy.parameters()) *ref.tensor = Tensor(ref.tensor->shape(), std::vector<double>(ref.tensor->data().begin(), ref.tensor->data().end()), true);
    return copy;
}

ClipPrediction TransAVS::forward(const synth::SceneClip& clip, std::size_t frame_limit, FusionTrace* trace) const {
    const auto fcfg = config.fusion();
    ClipPrediction out;
    out.audio = encode_audio(encoder, config.encoder(), clip.spectrogram);
    out.queries = encode_queries(out.audio, fusion);
    const std::size_t frames = frame_limit == 0 ? clip.steps() : std::min(frame_limit, clip.steps());
    out.frames.reserve(frames);
    for (std::size_t t = 0; t < frames; ++t) {
        VisualPyramid pyramid = encode_visual(encoder, clip.frames[t]);
        Tensor fused = decode_queries(out.queries, pyramid, fusion, fcfg, trace);
        out.frames.push_back(predict(out.queries, fused, pyramid.full, head));
    }
    return out;
}

std::vector<NamedTensor> TransAVS::state() const {
    std::vector<NamedTensor> out;
    out.push_back({"meta.model", Tensor({12}, encode_config(config))});
    for (auto& ref : const_cast<TransAVS*>(this)->parameters()) out.push_back({ref.name, ref.tensor->detach()});
    return out;
}

TransAVS TransAVS::from_state(const std::vector<NamedTensor>& state) {
    const ModelConfig cfg = decode_config(find_tensor(state, "meta.model"));
    TransAVS m = init(cfg, 0);
    for (auto& ref : m.parameters()) {
        const Tensor& src = find_tensor(state, ref.name);
        if (src.shape() != ref.tensor->shape())
            throw IoError("checkpoint: tensor '" + ref.name + "' has shape " + shape_str(src.shape()) + ", expected " +
                          shape_str(ref.tensor->shape()));
        *ref.tensor = Tensor(src.shape(), std::vector<double>(src.data().begin(), src.data().end()), true);
    }
    return m;
}

}  // namespace transavs
