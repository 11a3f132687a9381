#pragma once

#include "transavs/params.hpp"
#include "transavs/tensor.hpp"

#include <random>
#include <vector>

namespace transavs {

inline constexpr std::size_t kNumCategories = 2;  // K
inline constexpr std::size_t kSoundingClass = 0;
inline constexpr std::size_t kNoObjectClass = 1;

struct HeadParams {
    Tensor w2;      // [d, d], 1×1 conv over f_v^4 channels
    Tensor g;       // [d, K]
    Tensor g_bias;  // [K]

    static HeadParams init(std::size_t d, std::mt19937_64& rng);
    void collect(std::vector<ParamRef>& out);
};

/// Z for one frame: z_i = (queries[i], masks[i], probs[i]).
struct PredictionSet {
    Tensor queries;    // A_q, [N, d]
    Tensor masks;      // [N, H*W], row-major pixels, values in (0, 1)
    Tensor probs;      // [N, K]
    Tensor log_probs;  // [N, K]
    std::size_t height = 0, width = 0;

    std::size_t size() const { return probs.dim(0); }
};

/// M = sigmoid(F_av W_2 f_v^4) -> [N, H*W].
Tensor generate_masks(const Tensor& fused, const Tensor& full_res, const Tensor& w2);
Tensor mask_logits(const Tensor& fused, const Tensor& full_res, const Tensor& w2);

/// Class logits F_av g + bias, [N, K].
Tensor class_logits(const Tensor& fused, const Tensor& g, const Tensor& bias);
/// P = softmax(F_av g + bias).
Tensor classify(const Tensor& fused, const Tensor& g, const Tensor& bias);

PredictionSet predict(const Tensor& queries, const Tensor& fused, const Tensor& full_res, const HeadParams& p);

}  // namespace transavs
