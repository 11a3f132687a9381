#include "transavs/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace transavs {

namespace {

std::uint8_t to_byte(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

void write_netpbm(const std::filesystem::path& path, std::string_view magic, std::size_t h, std::size_t w,
                  const std::vector<std::uint8_t>& bytes) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os << magic << '\n' << w << ' ' << h << '\n' << 255 << '\n';
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed: " + path.string());
}

// Header tokens separated by whitespace, '#' comments allowed; exactly one
// whitespace byte precedes the raster.
std::vector<std::uint8_t> read_netpbm(const std::filesystem::path& path, std::string_view magic,
                                      std::size_t channels, std::size_t& h, std::size_t& w) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    auto token = [&]() {
        std::string t;
        int c = 0;
        while ((c = is.get()) != EOF) {
            if (c == '#') {
                while ((c = is.get()) != EOF && c != '\n') {
                }
                continue;
            }
            if (std::isspace(c)) {
                if (!t.empty()) break;
                continue;
            }
            t.push_back(static_cast<char>(c));
        }
        return t;
    };
    if (token() != magic) throw IoError(path.string() + ": expected " + std::string(magic) + " netpbm file");
    try {
        w = std::stoul(token());
        h = std::stoul(token());
        if (std::stoul(token()) != 255) throw IoError(path.string() + ": only maxval 255 is supported");
    } catch (const std::logic_error&) {
        throw IoError(path.string() + ": malformed header");
    }
    std::vector<std::uint8_t> bytes(h * w * channels);
    is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(is.gcount()) != bytes.size()) throw IoError(path.string() + ": truncated raster");
    return bytes;
}

}  // namespace

std::size_t BinaryMask::count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }

void write_ppm(const std::filesystem::path& path, const Tensor& rgb) {
    if (rgb.ndim() != 3 || rgb.dim(0) != 3) throw DimensionError("write_ppm: expected [3, H, W], got " + shape_str(rgb.shape()));
    const auto h = rgb.dim(1), w = rgb.dim(2);
    auto d = rgb.data();
    std::vector<std::uint8_t> bytes(h * w * 3);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) bytes[(y * w + x) * 3 + c] = to_byte(d[(c * h + y) * w + x]);
    write_netpbm(path, "P6", h, w, bytes);
}

Tensor read_ppm(const std::filesystem::path& path) {
    std::size_t h = 0, w = 0;
    auto bytes = read_netpbm(path, "P6", 3, h, w);
    std::vector<double> d(3 * h * w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) d[(c * h + y) * w + x] = bytes[(y * w + x) * 3 + c] / 255.0;
    return Tensor({3, h, w}, std::move(d));
}

void write_pgm(const std::filesystem::path& path, const BinaryMask& mask) {
    std::vector<std::uint8_t> bytes(mask.bits.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.bits[i] ? 255 : 0;
    write_netpbm(path, "P5", mask.height, mask.width, bytes);
}

BinaryMask read_pgm(const std::filesystem::path& path) {
    std::size_t h = 0, w = 0;
    auto bytes = read_netpbm(path, "P5", 1, h, w);
    BinaryMask m(h, w);
    for (std::size_t i = 0; i < bytes.size(); ++i) m.bits[i] = bytes[i] > 127 ? 1 : 0;
    return m;
}

void write_pgm_gray(const std::filesystem::path& path, std::span<const double> values, std::size_t height,
                    std::size_t width) {
    if (values.size() != height * width) throw DimensionError("write_pgm_gray: value count does not match size");
    std::vector<std::uint8_t> bytes(values.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(values[i]);
    write_netpbm(path, "P5", height, width, bytes);
}

}  // namespace transavs
