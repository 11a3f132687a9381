#include "transavs/fusion.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

namespace transavs {

namespace {
std::atomic<bool> g_scale_fault{false};
}

namespace testing {
void set_attention_scale_fault(bool enabled) { g_scale_fault = enabled; }
}  // namespace testing

AttentionParams AttentionParams::init(std::size_t d, bool ffn, std::mt19937_64& rng) {
    AttentionParams p;
    p.wq = init_weight({d, d}, d, rng);
    p.wk = init_weight({d, d}, d, rng);
    p.wv = init_weight({d, d}, d, rng);
    if (ffn) {
        p.ffn_w1 = init_weight({d, 2 * d}, d, rng, std::sqrt(2.0));
        p.ffn_b1 = Tensor::zeros({2 * d}, true);
        p.ffn_w2 = init_weight({2 * d, d}, 2 * d, rng);
        p.ffn_b2 = Tensor::zeros({d}, true);
    }
    return p;
}

FusionParams FusionParams::init(const FusionConfig& cfg, std::mt19937_64& rng) {
    if (cfg.queries < 1) throw UsageError("fusion: need at least one query");
    if (cfg.encoder_layers < 1 || cfg.decoder_layers < 1) throw UsageError("fusion: N_1 and N_2 must be >= 1");
    FusionParams p;
    p.w1 = init_weight({cfg.queries, cfg.steps}, cfg.steps, rng);
    for (std::size_t n = 0; n < cfg.encoder_layers; ++n) p.encoder.push_back(AttentionParams::init(cfg.d, cfg.ffn, rng));
    for (std::size_t l = 0; l < cfg.decoder_layers; ++l) p.decoder.push_back(AttentionParams::init(cfg.d, cfg.ffn, rng));
    return p;
}

void FusionParams::collect(std::vector<ParamRef>& out) {
    out.push_back({"fusion.w1", &w1, ParamGroup::Head});
    auto add = [&](const std::string& prefix, AttentionParams& a) {
        out.push_back({prefix + ".q", &a.wq, ParamGroup::Head});
        out.push_back({prefix + ".k", &a.wk, ParamGroup::Head});
        out.push_back({prefix + ".v", &a.wv, ParamGroup::Head});
        if (a.ffn_w1.defined()) {
            out.push_back({prefix + ".ffn.w1", &a.ffn_w1, ParamGroup::Head});
            out.push_back({prefix + ".ffn.b1", &a.ffn_b1, ParamGroup::Head});
            out.push_back({prefix + ".ffn.w2", &a.ffn_w2, ParamGroup::Head});
            out.push_back({prefix + ".ffn.b2", &a.ffn_b2, ParamGroup::Head});
        }
    };
    for (std::size_t n = 0; n < encoder.size(); ++n) add("fusion.enc." + std::to_string(n), encoder[n]);
    for (std::size_t l = 0; l < decoder.size(); ++l) add("fusion.dec." + std::to_string(l + 1), decoder[l]);
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    const double dk = static_cast<double>(q.dim(1));
    const double factor = g_scale_fault ? 1.0 / dk : 1.0 / std::sqrt(dk);
    Tensor scores = scale(matmul(q, transpose(k)), factor);
    return matmul(softmax_rows(scores), v);
}

std::size_t decoder_scale(std::size_t layer, std::size_t schedule_offset) {
    const std::size_t i = (layer + schedule_offset) % 3 + 1;
    if (i < 1 || i > 3) throw std::logic_error("decoder_scale: scale index out of range");
    return i;
}

Tensor disentangle(const Tensor& audio, const Tensor& w1) { return matmul(w1, audio); }

namespace {

Tensor feed_forward(const Tensor& x, const AttentionParams& p) {
    if (!p.ffn_w1.defined()) return x;
    Tensor h = relu(add_row_vector(matmul(x, p.ffn_w1), p.ffn_b1));
    return add(x, add_row_vector(matmul(h, p.ffn_w2), p.ffn_b2));
}

}  // namespace

Tensor encoder_layer(const Tensor& queries, const AttentionParams& p) {
    Tensor out = add(attention(matmul(queries, p.wq), matmul(queries, p.wk), matmul(queries, p.wv)), queries);
    return feed_forward(out, p);
}

Tensor decoder_layer(const Tensor& fused, const Tensor& visual, const AttentionParams& p) {
    if (visual.ndim() != 2 || visual.dim(1) != fused.dim(1))
        throw DimensionError("decoder_layer: visual sequence " + shape_str(visual.shape()) +
                             " does not match fused features " + shape_str(fused.shape()));
    Tensor out = add(attention(matmul(fused, p.wq), matmul(visual, p.wk), matmul(visual, p.wv)), fused);
    return feed_forward(out, p);
}

Tensor flatten_spatial(const Tensor& feature) {
    if (feature.ndim() != 3) throw DimensionError("flatten_spatial: expected [d, h, w], got " + shape_str(feature.shape()));
    const auto d = feature.dim(0), hw = feature.dim(1) * feature.dim(2);
    return transpose(reshape(feature, {d, hw}));
}

Tensor encode_queries(const Tensor& audio, const FusionParams& p) {
    Tensor a = disentangle(audio, p.w1);
    for (const auto& layer : p.encoder) a = encoder_layer(a, layer);
    return a;
}

Tensor decode_queries(const Tensor& queries, const VisualPyramid& pyramid, const FusionParams& p,
                      const FusionConfig& cfg, FusionTrace* trace) {
    std::array<Tensor, 3> seq;
    Tensor f = queries;
    for (std::size_t l = 1; l <= p.decoder.size(); ++l) {
        const auto i = decoder_scale(l, cfg.schedule_offset);
        if (!seq[i - 1].defined()) seq[i - 1] = flatten_spatial(pyramid.scale(i));
        if (trace) {
            trace->scales.push_back(i);
            trace->kv_shapes.push_back(seq[i - 1].shape());
        }
        f = decoder_layer(f, seq[i - 1], p.decoder[l - 1]);
    }
    return f;
}

FusionOutput run_fusion(const Tensor& audio, const VisualPyramid& pyramid, const FusionParams& p,
                        const FusionConfig& cfg, FusionTrace* trace) {
    FusionOutput out;
    out.queries = encode_queries(audio, p);
    out.fused = decode_queries(out.queries, pyramid, p, cfg, trace);
    return out;
}

}  // namespace transavs
