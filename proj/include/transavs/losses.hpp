#pragma once

// Training objective:
//   L = λ1·L_AQDL + λ2·L_AQML + λ3·L_class + λ4·L_dice
//
// L_AQDL penalizes confident queries (sounding probability > δ1) whose
// projections h(q) lie closer than d_0 in squared distance; L_AQML penalizes
// overlapping masks of confident queries (sounding probability > δ2).
// Set membership, the d_0 gate and the 0.5 binarization are selections: they
// are evaluated once and carry no gradient.

#include "transavs/image.hpp"
#include "transavs/mask_head.hpp"
#include "transavs/tensor.hpp"

#include <span>
#include <utility>
#include <vector>

namespace transavs {

enum class ThresholdMode { Increasing, Fixed };

/// Normalization of the pairwise sums: Printed uses 2/(n(n+1)), Pairs uses
/// 2/(n(n-1)) (the reciprocal of the number of unordered pairs).
enum class PairNorm { Printed, Pairs };

struct LossConfig {
    double lambda_aqdl = 2.0;
    double lambda_aqml = 2.0;
    double lambda_class = 5.0;
    double lambda_dice = 5.0;
    double d0 = 1.0;
    ThresholdMode delta1_mode = ThresholdMode::Increasing;
    ThresholdMode delta2_mode = ThresholdMode::Increasing;
    double delta1_fixed = 0.6;
    double delta2_fixed = 0.6;
    double schedule_a = 0.55;
    double schedule_b = 0.65;
    std::size_t schedule_n_iter = 5000;
    double focal_gamma = 2.0;
    double focal_alpha = 0.25;
    double dice_eps = 1.0;
    double no_object_weight = 1.0;  // focal weight of unmatched queries; 1 is the plain mean
    bool background_target = false;  // also match the complement of the sounding masks as class 1
    PairNorm pair_norm = PairNorm::Printed;

    void validate() const;  // throws UsageError
};

/// (δ1, δ2) at a training iteration.
std::pair<double, double> threshold_at(std::size_t iteration, const LossConfig& cfg);

double pair_coefficient(std::size_t n, PairNorm norm);

/// Indices k with probs[k, sounding] > delta.
std::vector<std::size_t> confident_set(const Tensor& probs, double delta);

/// Elementwise x > 0.5 as 0/1.
Tensor binarize(const Tensor& masks);

/// coef · Σ_{i<j, gate(i,j)} 1 / max(‖r_i − r_j‖², 1e-12) over the rows of
/// `projected` [n, d]. `gate` is n×n row-major; only i<j entries are read.
Tensor aqdl_kernel(const Tensor& projected, std::span<const std::uint8_t> gate, double coef);
/// gate(i, j) = ‖r_i − r_j‖² < d0.
std::vector<std::uint8_t> distance_gate(const Tensor& projected, double d0);

/// L_AQDL over the query rows in `s1`, projected by h. Returns 0 when |s1| < 2.
Tensor aqdl(const Tensor& queries, const Tensor& h, std::span<const std::size_t> s1, double d0, PairNorm norm);
Tensor aqdl(const Tensor& queries, const Tensor& h, std::span<const std::size_t> s1,
            std::span<const std::uint8_t> gate, PairNorm norm);

/// L_AQML over the mask rows in `s2`, with `bin_s2` = Bin(masks[s2]) held
/// constant. Returns 0 when |s2| < 2.
Tensor aqml(const Tensor& masks, std::span<const std::size_t> s2, const Tensor& bin_s2, PairNorm norm);
Tensor aqml(const Tensor& masks, std::span<const std::size_t> s2, PairNorm norm);

/// Mean over queries of −α (1 − p_t)^γ log p_t with p_t = probs[i, targets[i]].
Tensor focal_loss(const Tensor& log_probs, std::span<const std::size_t> targets, double gamma, double alpha);
/// Weighted mean: no-object rows count no_object_weight, sounding rows 1.
Tensor focal_loss(const Tensor& log_probs, std::span<const std::size_t> targets, double gamma, double alpha,
                  double no_object_weight);
/// Σ w_i l_i / Σ w_i with per-row weights.
Tensor focal_loss(const Tensor& log_probs, std::span<const std::size_t> targets, double gamma, double alpha,
                  std::span<const double> weights);

/// 1 − (2 Σ m y + ε) / (Σ m + Σ y + ε); `mask` is [1, H*W] or [H*W].
Tensor dice_loss(const Tensor& mask, const BinaryMask& target, double eps);

// -- matching -----------------------------------------------------------------

/// Minimum-cost assignment of each row to a distinct column (rows ≤ cols).
/// Returns the column chosen for every row.
std::vector<std::size_t> hungarian(const std::vector<double>& cost, std::size_t rows, std::size_t cols);

/// cost[t, i] = λ3·focal(p_i, class_t) + λ4·dice(m_i, target_t). An empty
/// `classes` labels every target sounding.
std::vector<double> matching_cost(const PredictionSet& z, std::span<const BinaryMask> targets, const LossConfig& cfg,
                                  std::span<const std::size_t> classes = {});

/// Query index matched to each target.
std::vector<std::size_t> match(const PredictionSet& z, std::span<const BinaryMask> targets, const LossConfig& cfg,
                               std::span<const std::size_t> classes = {});

/// Supervised targets of one frame: the sounding masks, followed by the
/// complement of their union as class 1 when cfg.background_target is set
/// and the complement is nonempty.
struct TargetSet {
    std::vector<BinaryMask> masks;
    std::vector<std::size_t> classes;
};
TargetSet build_targets(std::span<const BinaryMask> sounding, std::size_t pixels, const LossConfig& cfg);

// -- combined objective ------------------------------------------------------

struct LossSelections {
    double delta1 = 0.0, delta2 = 0.0;
    std::vector<std::size_t> s1, s2;
    std::vector<std::uint8_t> gate;  // |s1|×|s1|
    Tensor bin_s2;                   // Bin(masks[s2]), undefined when |s2| == 0
    std::vector<std::size_t> matched;  // per entry of build_targets
};

LossSelections select(const PredictionSet& z, const Tensor& h, std::span<const BinaryMask> targets,
                      const LossConfig& cfg, std::size_t iteration);

struct LossTerms {
    Tensor total, aqdl, aqml, cls, dice;
};

LossTerms total_loss(const PredictionSet& z, const Tensor& h, std::span<const BinaryMask> targets,
                     const LossConfig& cfg, const LossSelections& sel);
LossTerms total_loss(const PredictionSet& z, const Tensor& h, std::span<const BinaryMask> targets,
                     const LossConfig& cfg, std::size_t iteration);

}  // namespace transavs
