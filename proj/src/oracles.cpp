#include "transavs/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace transavs::oracle {

namespace {

double pair_coef(std::size_t n, PairNorm norm) {
    const double dn = static_cast<double>(n);
    return norm == PairNorm::Printed ? 2.0 / (dn * (dn + 1.0)) : 2.0 / (dn * (dn - 1.0));
}

}  // namespace

std::vector<double> matmul(std::span<const double> a, std::span<const double> b, std::size_t m, std::size_t k,
                           std::size_t n) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
            c[i * n + j] = s;
        }
    return c;
}

std::vector<double> attention(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                              std::size_t n, std::size_t m, std::size_t d) {
    std::vector<double> out(n * d, 0.0);
    std::vector<double> w(m);
    const double inv = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t i = 0; i < n; ++i) {
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) s += q[i * d + c] * k[j * d + c];
            w[j] = s * inv;
            top = std::max(top, w[j]);
        }
        double z = 0.0;
        for (auto& x : w) z += (x = std::exp(x - top));
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t c = 0; c < d; ++c) out[i * d + c] += w[j] / z * v[j * d + c];
    }
    return out;
}

double aqdl(std::span<const double> queries, std::span<const double> h, std::size_t d,
            std::span<const std::size_t> s1, double d0, PairNorm norm) {
    const std::size_t n = s1.size();
    if (n < 2) return 0.0;
    std::vector<std::vector<double>> r(n, std::vector<double>(d, 0.0));
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t c = 0; c < d; ++c)
            for (std::size_t p = 0; p < d; ++p) r[a][c] += queries[s1[a] * d + p] * h[p * d + c];
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double dist = 0.0;
            for (std::size_t c = 0; c < d; ++c) dist += (r[i][c] - r[j][c]) * (r[i][c] - r[j][c]);
            if (dist < d0) total += 1.0 / std::max(dist, 1e-12);
        }
    return pair_coef(n, norm) * total;
}

double aqml(std::span<const double> masks, std::size_t pixels, std::span<const std::size_t> s2, PairNorm norm) {
    const std::size_t n = s2.size();
    if (n < 2) return 0.0;
    auto bin = [](double x) { return x > 0.5 ? 1.0 : 0.0; };
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double inter = 0.0;
            for (std::size_t p = 0; p < pixels; ++p) {
                const double mi = masks[s2[i] * pixels + p];
                const double mj = masks[s2[j] * pixels + p];
                inter += bin(mi) * mj + mi * bin(mj);
            }
            total += inter / (2.0 * static_cast<double>(pixels));
        }
    return pair_coef(n, norm) * total;
}

double jaccard(const BinaryMask& pred, const BinaryMask& truth) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t y = 0; y < truth.height; ++y)
        for (std::size_t x = 0; x < truth.width; ++x) {
            const bool a = pred(y, x) != 0, b = truth(y, x) != 0;
            inter += a && b;
            uni += a || b;
        }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double fscore(const BinaryMask& pred, const BinaryMask& truth, double beta2) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t y = 0; y < truth.height; ++y)
        for (std::size_t x = 0; x < truth.width; ++x) {
            const bool a = pred(y, x) != 0, b = truth(y, x) != 0;
            tp += a && b;
            fp += a && !b;
            fn += !a && b;
        }
    if (tp == 0) return (fp == 0 && fn == 0) ? 1.0 : 0.0;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    return (1.0 + beta2) * precision * recall / (beta2 * precision + recall);
}

BinaryMask fuse(std::span<const double> probs, std::span<const double> masks, std::size_t n, std::size_t k,
                std::size_t height, std::size_t width) {
    BinaryMask out(height, width);
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
            std::size_t winner_class = 0;
            double best = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                std::size_t c = 0;
                for (std::size_t j = 1; j < k; ++j)
                    if (probs[i * k + j] > probs[i * k + c]) c = j;
                const double score = probs[i * k + c] * masks[i * height * width + y * width + x];
                if (score > best) {
                    best = score;
                    winner_class = c;
                }
            }
            out(y, x) = winner_class == kSoundingClass ? 1 : 0;
        }
    return out;
}

double best_assignment_cost(const std::vector<double>& cost, std::size_t rows, std::size_t cols) {
    // Enumerate ordered selections of `rows` distinct columns via permutations
    // of all columns, reading the first `rows` entries.
    std::vector<std::size_t> perm(cols);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (std::size_t r = 0; r < rows; ++r) total += cost[r * cols + perm[r]];
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

double threshold(std::size_t iteration, double a, double b, std::size_t n_iter) {
    const double stepped = a + (b - a) / 18.0 * std::floor(static_cast<double>(iteration) / static_cast<double>(n_iter));
    return std::min(b, stepped);
}

}  // namespace transavs::oracle
