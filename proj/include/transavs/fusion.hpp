#pragma once

// Audio-visual transformer fusion.
//
//   A_q^0     = W_1 F_a                                  (N×T · T×d)
//   A_q^{n+1} = Atten(A_q^n W_Q, A_q^n W_K, A_q^n W_V) + A_q^n
//   F_av^1    = A_q^{N_1}
//   F_av^{l+1}= Atten(F_av^l W_Q, f_v^i W_K, f_v^i W_V) + F_av^l,  i = (l mod 3) + 1
//
// Atten(Q, K, V) = softmax(Q Kᵀ / √d) V, single head. Visual scales are
// flattened row-major to (h·w)×d sequences before cross-attention.

#include "transavs/encoders.hpp"
#include "transavs/params.hpp"
#include "transavs/tensor.hpp"

#include <random>
#include <vector>

namespace transavs {

struct FusionConfig {
    std::size_t queries = 100;  // N
    std::size_t d = 32;
    std::size_t steps = 5;  // T
    std::size_t encoder_layers = 2;  // N_1
    std::size_t decoder_layers = 6;  // N_2
    /// Added to l before the modulo; 0 keeps i = (l mod 3) + 1 with l from 1.
    std::size_t schedule_offset = 0;
    /// Append a 2-layer ReLU MLP with residual after each attention block.
    bool ffn = false;
};

struct AttentionParams {
    Tensor wq, wk, wv;              // [d, d]
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;  // only when FusionConfig::ffn

    static AttentionParams init(std::size_t d, bool ffn, std::mt19937_64& rng);
};

struct FusionParams {
    Tensor w1;  // [N, T]
    std::vector<AttentionParams> encoder;
    std::vector<AttentionParams> decoder;

    static FusionParams init(const FusionConfig& cfg, std::mt19937_64& rng);
    void collect(std::vector<ParamRef>& out);
};

/// Which visual scale each decoder layer attended to, and the key/value
/// sequence shape it consumed.
struct FusionTrace {
    std::vector<std::size_t> scales;
    std::vector<Shape> kv_shapes;
};

/// softmax(Q Kᵀ / √d_k) V.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v);

/// Scale index in {1, 2, 3} for decoder layer l (counted from 1).
std::size_t decoder_scale(std::size_t layer, std::size_t schedule_offset = 0);

Tensor disentangle(const Tensor& audio, const Tensor& w1);
Tensor encoder_layer(const Tensor& queries, const AttentionParams& p);
/// `visual` is a flattened (h·w)×d sequence.
Tensor decoder_layer(const Tensor& fused, const Tensor& visual, const AttentionParams& p);

/// [d, h, w] -> (h·w)×d, row-major over (y, x).
Tensor flatten_spatial(const Tensor& feature);

/// A_q = encoder stack applied to W_1 F_a.
Tensor encode_queries(const Tensor& audio, const FusionParams& p);
/// Decoder stack starting from A_q against one frame's pyramid.
Tensor decode_queries(const Tensor& queries, const VisualPyramid& pyramid, const FusionParams& p,
                      const FusionConfig& cfg, FusionTrace* trace = nullptr);

struct FusionOutput {
    Tensor queries;  // A_q^{N_1}
    Tensor fused;    // F_av^{N_2}
};

FusionOutput run_fusion(const Tensor& audio, const VisualPyramid& pyramid, const FusionParams& p,
                        const FusionConfig& cfg, FusionTrace* trace = nullptr);

namespace testing {
/// Fault hook for the verification harness: when set, attention scales
/// scores by 1/d instead of 1/√d.
void set_attention_scale_fault(bool enabled);
}  // namespace testing

}  // namespace transavs
