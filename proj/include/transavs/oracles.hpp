#pragma once

// Brute-force reference implementations. These use plain loops over raw
// buffers and share no code with the library versions they check.

#include "transavs/image.hpp"
#include "transavs/losses.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace transavs::oracle {

/// Row-major [m, k] · [k, n].
std::vector<double> matmul(std::span<const double> a, std::span<const double> b, std::size_t m, std::size_t k,
                           std::size_t n);

/// softmax(q kᵀ / √d) v with q [n, d], k and v [m, d].
std::vector<double> attention(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                              std::size_t n, std::size_t m, std::size_t d);

/// Double loop over i < j in s1 with r = q·h; gated by ‖r_i − r_j‖² < d0.
double aqdl(std::span<const double> queries, std::span<const double> h, std::size_t d,
            std::span<const std::size_t> s1, double d0, PairNorm norm);

/// Double loop over i < j in s2 of (1/2P) Σ_p [Bin(m_i)·m_j + m_i·Bin(m_j)].
double aqml(std::span<const double> masks, std::size_t pixels, std::span<const std::size_t> s2, PairNorm norm);

double jaccard(const BinaryMask& pred, const BinaryMask& truth);
double fscore(const BinaryMask& pred, const BinaryMask& truth, double beta2);

/// Per-pixel evaluation of the winner rule over probs [n, K], masks [n, P].
BinaryMask fuse(std::span<const double> probs, std::span<const double> masks, std::size_t n, std::size_t k,
                std::size_t height, std::size_t width);

/// Minimum total cost over every injective row → column assignment.
double best_assignment_cost(const std::vector<double>& cost, std::size_t rows, std::size_t cols);

double threshold(std::size_t iteration, double a, double b, std::size_t n_iter);

}  // namespace transavs::oracle
