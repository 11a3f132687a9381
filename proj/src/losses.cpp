#include "transavs/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace transavs {

namespace {

constexpr double kMinSqDist = 1e-12;

Tensor zero_loss() { return Tensor::scalar(0.0); }

double focal_term(double log_p, double gamma, double alpha) {
    const double p = std::exp(log_p);
    return -alpha * std::pow(1.0 - p, gamma) * log_p;
}

}  // namespace

void LossConfig::validate() const {
    if (lambda_aqdl < 0 || lambda_aqml < 0 || lambda_class < 0 || lambda_dice < 0)
        throw UsageError("loss weights must be >= 0");
    if (!(schedule_a > 0.0 && schedule_a <= schedule_b && schedule_b < 1.0))
        throw UsageError("threshold schedule needs 0 < a <= b < 1");
    if (!(d0 > 0.0)) throw UsageError("d0 must be > 0");
    if (schedule_n_iter == 0) throw UsageError("schedule n_iter must be >= 1");
    if (!(no_object_weight > 0.0)) throw UsageError("no_object_weight must be > 0");
}

std::pair<double, double> threshold_at(std::size_t iteration, const LossConfig& cfg) {
    const double stage = std::floor(static_cast<double>(iteration) / static_cast<double>(cfg.schedule_n_iter));
    const double rising = std::min(cfg.schedule_b, cfg.schedule_a + (cfg.schedule_b - cfg.schedule_a) / 18.0 * stage);
    const double d1 = cfg.delta1_mode == ThresholdMode::Increasing ? rising : cfg.delta1_fixed;
    const double d2 = cfg.delta2_mode == ThresholdMode::Increasing ? rising : cfg.delta2_fixed;
    return {d1, d2};
}

double pair_coefficient(std::size_t n, PairNorm norm) {
    const double nn = static_cast<double>(n);
    if (n < 2) return 0.0;
    return norm == PairNorm::Printed ? 2.0 / (nn * (nn + 1.0)) : 2.0 / (nn * (nn - 1.0));
}

std::vector<std::size_t> confident_set(const Tensor& probs, double delta) {
    std::vector<std::size_t> out;
    const auto n = probs.dim(0), k = probs.dim(1);
    for (std::size_t i = 0; i < n; ++i)
        if (probs.data()[i * k + kSoundingClass] > delta) out.push_back(i);
    return out;
}

Tensor binarize(const Tensor& masks) {
    std::vector<double> b(masks.numel());
    auto m = masks.data();
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = m[i] > 0.5 ? 1.0 : 0.0;
    return Tensor(masks.shape(), std::move(b));
}

// -- AQDL ----------------------------------------------------------------------

std::vector<std::uint8_t> distance_gate(const Tensor& projected, double d0) {
    const auto n = projected.dim(0), d = projected.dim(1);
    auto r = projected.data();
    std::vector<std::uint8_t> gate(n * n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = r[i * d + c] - r[j * d + c];
                s += diff * diff;
            }
            gate[i * n + j] = gate[j * n + i] = s < d0 ? 1 : 0;
        }
    return gate;
}

Tensor aqdl_kernel(const Tensor& projected, std::span<const std::uint8_t> gate, double coef) {
    if (projected.ndim() != 2) throw DimensionError("aqdl: projected queries must be 2-D, got " + shape_str(projected.shape()));
    const auto n = projected.dim(0), d = projected.dim(1);
    if (gate.size() != n * n) throw DimensionError("aqdl: gate must be n×n");
    auto r = projected.data();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (!gate[i * n + j]) continue;
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = r[i * d + c] - r[j * d + c];
                s += diff * diff;
            }
            total += 1.0 / std::max(s, kMinSqDist);
        }
    std::vector<std::uint8_t> g(gate.begin(), gate.end());
    return make_op("aqdl", {}, {coef * total}, {projected}, [g, n, d, coef](const OpContext& c) {
        auto r = c.in_data[0];
        auto& grad = c.in_grad[0];
        const double up = c.out_grad[0] * coef;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                if (!g[i * n + j]) continue;
                double s = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    const double diff = r[i * d + k] - r[j * d + k];
                    s += diff * diff;
                }
                if (s < kMinSqDist) continue;  // clamped: flat
                const double w = -up * 2.0 / (s * s);
                for (std::size_t k = 0; k < d; ++k) {
                    const double diff = r[i * d + k] - r[j * d + k];
                    grad[i * d + k] += w * diff;
                    grad[j * d + k] -= w * diff;
                }
            }
    });
}

Tensor aqdl(const Tensor& queries, const Tensor& h, std::span<const std::size_t> s1,
            std::span<const std::uint8_t> gate, PairNorm norm) {
    if (s1.size() < 2) return zero_loss();
    Tensor projected = matmul(index_rows(queries, s1), h);
    return aqdl_kernel(projected, gate, pair_coefficient(s1.size(), norm));
}

Tensor aqdl(const Tensor& queries, const Tensor& h, std::span<const std::size_t> s1, double d0, PairNorm norm) {
    if (s1.size() < 2) return zero_loss();
    Tensor projected = matmul(index_rows(queries, s1), h);
    return aqdl_kernel(projected, distance_gate(projected, d0), pair_coefficient(s1.size(), norm));
}

// -- AQML ----------------------------------------------------------------------

Tensor aqml(const Tensor& masks, std::span<const std::size_t> s2, const Tensor& bin_s2, PairNorm norm) {
    const auto n = s2.size();
    if (n < 2) return zero_loss();
    const auto hw = masks.dim(1);
    if (bin_s2.numel() != n * hw) throw DimensionError("aqml: binarized masks do not match the selection");
    // Σ_{i<j} [B_i·m_j + m_i·B_j] = Σ_i (Σ_k B_k − B_i)·m_i
    auto b = bin_s2.data();
    std::vector<double> col(hw, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < hw; ++p) col[p] += b[i * hw + p];
    std::vector<double> weight(n * hw);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < hw; ++p) weight[i * hw + p] = col[p] - b[i * hw + p];
    Tensor w({n, hw}, std::move(weight));
    const double factor = pair_coefficient(n, norm) / (2.0 * static_cast<double>(hw));
    return scale(sum(mul(w, index_rows(masks, s2))), factor);
}

Tensor aqml(const Tensor& masks, std::span<const std::size_t> s2, PairNorm norm) {
    if (s2.size() < 2) return zero_loss();
    return aqml(masks, s2, binarize(index_rows(masks.detach(), s2)), norm);
}

// -- supervised terms -----------------------------------------------------------

Tensor focal_loss(const Tensor& log_probs, std::span<const std::size_t> targets, double gamma, double alpha) {
    Tensor log_pt = select_per_row(log_probs, targets);
    Tensor one_minus = add_scalar(scale(exp(log_pt), -1.0), 1.0);
    Tensor modulated = gamma == 0.0 ? log_pt : mul(pow(clamp_min(one_minus, 0.0), gamma), log_pt);
    return scale(mean(modulated), -alpha);
}

Tensor focal_loss(const Tensor& log_probs, std::span<const std::size_t> targets, double gamma, double alpha,
                  double no_object_weight) {
    if (no_object_weight == 1.0) return focal_loss(log_probs, targets, gamma, alpha);
    std::vector<double> w(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) w[i] = targets[i] == kNoObjectClass ? no_object_weight : 1.0;
    return focal_loss(log_probs, targets, gamma, alpha, w);
}

Tensor focal_loss(const Tensor& log_probs, std::span<const std::size_t> targets, double gamma, double alpha,
                  std::span<const double> weights) {
    if (weights.size() != targets.size()) throw DimensionError("focal_loss: weights size does not match targets");
    double w_sum = 0.0;
    for (double w : weights) w_sum += w;
    Tensor log_pt = select_per_row(log_probs, targets);
    Tensor one_minus = add_scalar(scale(exp(log_pt), -1.0), 1.0);
    Tensor modulated = gamma == 0.0 ? log_pt : mul(pow(clamp_min(one_minus, 0.0), gamma), log_pt);
    Tensor wt(log_pt.shape(), std::vector<double>(weights.begin(), weights.end()));
    return scale(sum(mul(modulated, wt)), -alpha / w_sum);
}

Tensor dice_loss(const Tensor& mask, const BinaryMask& target, double eps) {
    if (mask.numel() != target.bits.size())
        throw DimensionError("dice_loss: mask " + shape_str(mask.shape()) + " vs target " +
                             std::to_string(target.height) + "x" + std::to_string(target.width));
    std::vector<double> y(target.bits.begin(), target.bits.end());
    const double y_sum = static_cast<double>(target.count());
    Tensor yt(mask.shape(), std::move(y));
    Tensor num = add_scalar(scale(sum(mul(mask, yt)), 2.0), eps);
    Tensor den = add_scalar(sum(mask), y_sum + eps);
    return add_scalar(scale(div(num, den), -1.0), 1.0);
}

// -- matching -----------------------------------------------------------------

std::vector<std::size_t> hungarian(const std::vector<double>& cost, std::size_t rows, std::size_t cols) {
    if (rows > cols) throw DimensionError("hungarian: more targets than queries");
    if (cost.size() != rows * cols) throw DimensionError("hungarian: cost size mismatch");
    if (rows == 0) return {};
    for (double c : cost)
        if (!std::isfinite(c)) throw std::domain_error("hungarian: non-finite matching cost");
    // Potentials method, 1-based with a virtual column 0.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
    std::vector<std::size_t> p(cols + 1, 0), way(cols + 1, 0);
    for (std::size_t i = 1; i <= rows; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(cols + 1, inf);
        std::vector<char> used(cols + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= cols; ++j) {
                if (used[j]) continue;
                const double cur = cost[(i0 - 1) * cols + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= cols; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> out(rows);
    for (std::size_t j = 1; j <= cols; ++j)
        if (p[j] != 0) out[p[j] - 1] = j - 1;
    return out;
}

std::vector<double> matching_cost(const PredictionSet& z, std::span<const BinaryMask> targets, const LossConfig& cfg,
                                  std::span<const std::size_t> classes) {
    if (!classes.empty() && classes.size() != targets.size())
        throw DimensionError("matching_cost: classes size does not match targets");
    const auto n = z.size();
    const auto hw = z.masks.dim(1);
    auto m = z.masks.data();
    auto lp = z.log_probs.data();
    std::vector<double> cost(targets.size() * n);
    for (std::size_t t = 0; t < targets.size(); ++t) {
        const auto& y = targets[t];
        if (y.bits.size() != hw) throw DimensionError("matching_cost: target size does not match masks");
        const double y_sum = static_cast<double>(y.count());
        const std::size_t cls = classes.empty() ? kSoundingClass : classes[t];
        for (std::size_t i = 0; i < n; ++i) {
            double inter = 0.0, m_sum = 0.0;
            for (std::size_t p = 0; p < hw; ++p) {
                inter += m[i * hw + p] * y.bits[p];
                m_sum += m[i * hw + p];
            }
            const double dice = 1.0 - (2.0 * inter + cfg.dice_eps) / (m_sum + y_sum + cfg.dice_eps);
            const double focal = focal_term(lp[i * kNumCategories + cls], cfg.focal_gamma, cfg.focal_alpha);
            cost[t * n + i] = cfg.lambda_class * focal + cfg.lambda_dice * dice;
        }
    }
    return cost;
}

std::vector<std::size_t> match(const PredictionSet& z, std::span<const BinaryMask> targets, const LossConfig& cfg,
                               std::span<const std::size_t> classes) {
    return hungarian(matching_cost(z, targets, cfg, classes), targets.size(), z.size());
}

TargetSet build_targets(std::span<const BinaryMask> sounding, std::size_t pixels, const LossConfig& cfg) {
    TargetSet out;
    out.masks.assign(sounding.begin(), sounding.end());
    out.classes.assign(sounding.size(), kSoundingClass);
    if (!cfg.background_target) return out;
    BinaryMask bg = sounding.empty() ? BinaryMask(1, pixels) : BinaryMask(sounding[0].height, sounding[0].width);
    if (bg.bits.size() != pixels) throw DimensionError("build_targets: target size does not match masks");
    for (std::size_t p = 0; p < pixels; ++p) {
        bool covered = false;
        for (const auto& m : sounding) covered = covered || m.bits[p];
        bg.bits[p] = covered ? 0 : 1;
    }
    if (bg.count() == 0) return out;
    out.masks.push_back(std::move(bg));
    out.classes.push_back(kNoObjectClass);
    return out;
}

// -- combined objective ------------------------------------------------------

LossSelections select(const PredictionSet& z, const Tensor& h, std::span<const BinaryMask> targets,
                      const LossConfig& cfg, std::size_t iteration) {
    LossSelections sel;
    std::tie(sel.delta1, sel.delta2) = threshold_at(iteration, cfg);
    sel.s1 = confident_set(z.probs, sel.delta1);
    sel.s2 = confident_set(z.probs, sel.delta2);
    if (sel.s1.size() >= 2) {
        Tensor projected = matmul(index_rows(z.queries.detach(), sel.s1), h.detach());
        sel.gate = distance_gate(projected, cfg.d0);
    }
    if (sel.s2.size() >= 2) sel.bin_s2 = binarize(index_rows(z.masks.detach(), sel.s2));
    const TargetSet ts = build_targets(targets, z.masks.dim(1), cfg);
    sel.matched = match(z, ts.masks, cfg, ts.classes);
    return sel;
}

LossTerms total_loss(const PredictionSet& z, const Tensor& h, std::span<const BinaryMask> targets,
                     const LossConfig& cfg, const LossSelections& sel) {
    LossTerms out;
    out.aqdl = aqdl(z.queries, h, sel.s1, sel.gate, cfg.pair_norm);
    out.aqml = sel.s2.size() >= 2 ? aqml(z.masks, sel.s2, sel.bin_s2, cfg.pair_norm) : zero_loss();

    const TargetSet ts = build_targets(targets, z.masks.dim(1), cfg);
    if (sel.matched.size() != ts.masks.size()) throw DimensionError("total_loss: selections do not match the targets");
    std::vector<std::size_t> class_targets(z.size(), kNoObjectClass);
    std::vector<double> weights(z.size(), cfg.no_object_weight);
    for (std::size_t t = 0; t < sel.matched.size(); ++t) {
        class_targets[sel.matched[t]] = ts.classes[t];
        weights[sel.matched[t]] = 1.0;
    }
    out.cls = cfg.no_object_weight == 1.0
                  ? focal_loss(z.log_probs, class_targets, cfg.focal_gamma, cfg.focal_alpha)
                  : focal_loss(z.log_probs, class_targets, cfg.focal_gamma, cfg.focal_alpha, weights);

    if (sel.matched.empty()) {
        out.dice = zero_loss();
    } else {
        Tensor acc;
        for (std::size_t t = 0; t < sel.matched.size(); ++t) {
            const std::size_t q = sel.matched[t];
            Tensor d = dice_loss(index_rows(z.masks, std::span<const std::size_t>(&q, 1)), ts.masks[t], cfg.dice_eps);
            acc = acc.defined() ? add(acc, d) : d;
        }
        out.dice = scale(acc, 1.0 / static_cast<double>(sel.matched.size()));
    }

    const std::vector<Tensor> weighted{scale(out.aqdl, cfg.lambda_aqdl), scale(out.aqml, cfg.lambda_aqml),
                                       scale(out.cls, cfg.lambda_class), scale(out.dice, cfg.lambda_dice)};
    out.total = add(add(weighted[0], weighted[1]), add(weighted[2], weighted[3]));
    return out;
}

LossTerms total_loss(const PredictionSet& z, const Tensor& h, std::span<const BinaryMask> targets,
                     const LossConfig& cfg, std::size_t iteration) {
    return total_loss(z, h, targets, cfg, select(z, h, targets, cfg, iteration));
}

}  // namespace transavs
