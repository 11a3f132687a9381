#pragma once

// Binary PPM (P6) / PGM (P5) I/O and the binary mask type.

#include "transavs/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace transavs {

struct BinaryMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> bits;  // row-major, 0 or 1

    BinaryMask() = default;
    BinaryMask(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {}

    std::uint8_t operator()(std::size_t y, std::size_t x) const { return bits[y * width + x]; }
    std::uint8_t& operator()(std::size_t y, std::size_t x) { return bits[y * width + x]; }
    std::size_t count() const;
    bool operator==(const BinaryMask&) const = default;
};

/// Writes a [3, H, W] tensor with values in [0, 1] as P6 (maxval 255).
void write_ppm(const std::filesystem::path& path, const Tensor& rgb);
/// Reads a P6 file into a [3, H, W] tensor with values k/255.
Tensor read_ppm(const std::filesystem::path& path);

/// Foreground written as 255, background as 0.
void write_pgm(const std::filesystem::path& path, const BinaryMask& mask);
/// Pixels above 127 become foreground.
BinaryMask read_pgm(const std::filesystem::path& path);
/// Probabilities in [0, 1] scaled to 0..255.
void write_pgm_gray(const std::filesystem::path& path, std::span<const double> values, std::size_t height,
                    std::size_t width);

}  // namespace transavs
