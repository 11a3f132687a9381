#pragma once

#include "transavs/image.hpp"
#include "transavs/tensor.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace transavs {

/// Pixel label from the prediction set: the winner at (x, y) is
/// argmax_i p_i(c_i)·m_i(x, y) with c_i = argmax_c p_i(c); the pixel is set
/// iff the winner's class is sounding. Ties go to the lowest index.
/// probs: [N, K], masks: [N, H*W].
BinaryMask fuse_predictions(const Tensor& probs, const Tensor& masks, std::size_t height, std::size_t width);

/// |m ∩ y| / |m ∪ y|; 1 when both are empty.
double jaccard(const BinaryMask& pred, const BinaryMask& truth);

/// (1+β²)·P·R / (β²·P + R); 0 when there is no true positive, 1 when both
/// masks are empty.
double fscore(const BinaryMask& pred, const BinaryMask& truth, double beta2 = 0.3);

struct FrameScore {
    std::string clip;
    std::size_t frame = 0;
    double j = 0.0, f = 0.0;
};

struct EvalRecord {
    std::vector<FrameScore> frames;
    double mean_j = 0.0, mean_f = 0.0;

    void add(std::string clip, std::size_t frame, const BinaryMask& pred, const BinaryMask& truth, double beta2 = 0.3);
    /// Recomputes mean_j / mean_f as arithmetic means over frames.
    void finalize();
};

/// metrics.csv (clip,frame,J,F) and summary.txt (MJ, MF).
void write_eval_outputs(const std::filesystem::path& dir, const EvalRecord& record);

}  // namespace transavs
