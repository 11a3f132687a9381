#include "transavs/mask_head.hpp"

namespace transavs {

HeadParams HeadParams::init(std::size_t d, std::mt19937_64& rng) {
    HeadParams p;
    p.w2 = init_weight({d, d}, d, rng);
    p.g = init_weight({d, kNumCategories}, d, rng);
    p.g_bias = Tensor::zeros({kNumCategories}, true);
    return p;
}

void HeadParams::collect(std::vector<ParamRef>& out) {
    out.push_back({"head.w2", &w2, ParamGroup::Head});
    out.push_back({"head.g", &g, ParamGroup::Head});
    out.push_back({"head.g_bias", &g_bias, ParamGroup::Head});
}

Tensor mask_logits(const Tensor& fused, const Tensor& full_res, const Tensor& w2) {
    if (full_res.ndim() != 3) throw DimensionError("generate_masks: f_v^4 must be [d, H, W], got " + shape_str(full_res.shape()));
    const auto d = full_res.dim(0), hw = full_res.dim(1) * full_res.dim(2);
    if (fused.ndim() != 2 || fused.dim(1) != d || w2.dim(0) != d || w2.dim(1) != d)
        throw DimensionError("generate_masks: shape mismatch " + shape_str(fused.shape()) + " / " +
                             shape_str(w2.shape()) + " / " + shape_str(full_res.shape()));
    // (F_av W_2) · f_v^4 is the cheaper association of F_av (W_2 f_v^4).
    return matmul(matmul(fused, w2), reshape(full_res, {d, hw}));
}

Tensor generate_masks(const Tensor& fused, const Tensor& full_res, const Tensor& w2) {
    return sigmoid(mask_logits(fused, full_res, w2));
}

Tensor class_logits(const Tensor& fused, const Tensor& g, const Tensor& bias) {
    return add_row_vector(matmul(fused, g), bias);
}

Tensor classify(const Tensor& fused, const Tensor& g, const Tensor& bias) {
    return softmax_rows(class_logits(fused, g, bias));
}

PredictionSet predict(const Tensor& queries, const Tensor& fused, const Tensor& full_res, const HeadParams& p) {
    PredictionSet z;
    z.queries = queries;
    z.masks = generate_masks(fused, full_res, p.w2);
    Tensor logits = class_logits(fused, p.g, p.g_bias);
    z.probs = softmax_rows(logits);
    z.log_probs = log_softmax_rows(logits);
    z.height = full_res.dim(1);
    z.width = full_res.dim(2);
    return z;
}

}  // namespace transavs
