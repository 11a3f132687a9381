#include "transavs/synth.hpp"

#include "transavs/tavs_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace transavs::synth {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t seed, Mode mode, std::uint64_t stream) {
    return splitmix(splitmix(seed ^ (mode == Mode::S4 ? 0x5334ull : 0x4D5333ull)) + stream);
}

// Base colors, one per class; jittered per clip.
constexpr std::array<std::array<double, 3>, kNumClasses> kBaseColor{{
    {0.90, 0.20, 0.20},  // disc: red
    {0.20, 0.85, 0.25},  // square: green
    {0.25, 0.35, 0.95},  // triangle: blue
    {0.95, 0.90, 0.20},  // ring: yellow
    {0.90, 0.25, 0.90},  // bar: magenta
    {0.20, 0.90, 0.90},  // cross: cyan
}};

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

Source make_source(std::uint64_t seed, Mode mode, std::size_t index, int object_class, bool sounding,
                   std::size_t height, std::size_t width) {
    std::mt19937_64 rng(mix(seed, mode, 1000 + index));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double unit = static_cast<double>(std::min(height, width)) / 64.0;
    Source s;
    s.object_class = object_class;
    s.is_sounding = sounding;
    s.radius = unit * (7.0 + 4.0 * u01(rng));
    const double margin = s.radius + 1.0;
    auto coord = [&](std::size_t extent) { return margin + (static_cast<double>(extent) - 2.0 * margin) * u01(rng); };
    s.start_x = coord(width);
    s.start_y = coord(height);
    const double end_x = coord(width), end_y = coord(height);
    // Cap the per-step motion so objects drift rather than jump.
    const double steps = static_cast<double>(kClipSteps - 1);
    const double max_step = 3.0 * unit;
    s.step_x = std::clamp((end_x - s.start_x) / steps, -max_step, max_step);
    s.step_y = std::clamp((end_y - s.start_y) / steps, -max_step, max_step);
    for (std::size_t c = 0; c < 3; ++c)
        s.color[c] = quantize(kBaseColor[static_cast<std::size_t>(object_class)][c] + 0.16 * (u01(rng) - 0.5));
    for (auto& a : s.loudness) a = 0.6 + 0.4 * u01(rng);
    return s;
}

bool is_pow2_at_least_32(std::size_t v) { return v >= 32 && std::has_single_bit(v); }

}  // namespace

Mode parse_mode(const std::string& text) {
    if (text == "S4" || text == "s4") return Mode::S4;
    if (text == "MS3" || text == "ms3") return Mode::MS3;
    throw UsageError("invalid mode '" + text + "' (expected S4 or MS3)");
}

std::string mode_name(Mode mode) { return mode == Mode::S4 ? "S4" : "MS3"; }

std::string shape_name(int object_class) {
    static const std::array<const char*, kNumClasses> names{"disc", "square", "triangle", "ring", "bar", "cross"};
    if (object_class < 0 || object_class >= static_cast<int>(kNumClasses)) return "unknown";
    return names[static_cast<std::size_t>(object_class)];
}

std::vector<SourceState> SceneClip::sources_at(std::size_t t) const {
    std::vector<SourceState> out;
    out.reserve(sources.size());
    for (const auto& s : sources) out.push_back({s.object_class, s.center_x(t), s.center_y(t), s.radius, s.is_sounding});
    return out;
}

std::vector<Source> generate_sources(std::uint64_t seed, Mode mode, std::size_t height, std::size_t width) {
    if (!is_pow2_at_least_32(height) || !is_pow2_at_least_32(width))
        throw UsageError("frame size must be powers of two >= 32, got " + std::to_string(height) + "x" +
                         std::to_string(width));
    std::mt19937_64 rng(mix(seed, mode, 0));
    std::vector<int> classes(kNumClasses);
    for (std::size_t i = 0; i < kNumClasses; ++i) classes[i] = static_cast<int>(i);
    std::shuffle(classes.begin(), classes.end(), rng);

    std::size_t n_sounding = 1, n_silent = 0;
    if (mode == Mode::S4) {
        n_silent = std::uniform_int_distribution<std::size_t>(0, 2)(rng);
    } else {
        n_sounding = std::uniform_int_distribution<std::size_t>(2, 3)(rng);
        n_silent = std::uniform_int_distribution<std::size_t>(0, 1)(rng);
    }
    // Distinct classes; silent objects are drawn first so sounding objects stay
    // fully visible and the mask is exactly what the frame shows.
    std::vector<Source> out;
    std::size_t index = 0;
    for (std::size_t i = 0; i < n_silent; ++i, ++index)
        out.push_back(make_source(seed, mode, index, classes[n_sounding + i], false, height, width));
    for (std::size_t i = 0; i < n_sounding; ++i, ++index)
        out.push_back(make_source(seed, mode, index, classes[i], true, height, width));
    return out;
}

bool shape_contains(const Source& src, std::size_t t, std::size_t x, std::size_t y) {
    const double dx = static_cast<double>(x) + 0.5 - src.center_x(t);
    const double dy = static_cast<double>(y) + 0.5 - src.center_y(t);
    const double r = src.radius;
    const double ax = std::abs(dx), ay = std::abs(dy);
    switch (static_cast<ShapeKind>(src.object_class)) {
    case ShapeKind::Disc:
        return dx * dx + dy * dy <= r * r;
    case ShapeKind::Square:
        return ax <= 0.85 * r && ay <= 0.85 * r;
    case ShapeKind::Triangle:
        return dy >= -r && dy <= r && ax <= 0.5 * (dy + r);
    case ShapeKind::Ring: {
        const double d2 = dx * dx + dy * dy;
        return d2 <= r * r && d2 >= 0.3 * r * r;
    }
    case ShapeKind::Bar:
        return ax <= r && ay <= 0.4 * r;
    case ShapeKind::Cross:
        return (ax <= 0.3 * r && ay <= r) || (ay <= 0.3 * r && ax <= r);
    }
    return false;
}

Tensor source_spectrogram(const Source& src) {
    std::vector<double> v(kClipSteps * kFreqBins * kTimeBins, 0.0);
    if (src.is_sounding) {
        // Two harmonic bands per class plus a class-specific temporal rhythm.
        const auto c = static_cast<std::size_t>(src.object_class);
        const std::size_t f0 = 1 + 2 * c;
        const std::size_t f1 = 14 + 3 * c;
        const double rate = static_cast<double>(1 + c % 3);
        const double phase = static_cast<double>(c) * std::numbers::pi / 6.0;
        for (std::size_t t = 0; t < kClipSteps; ++t)
            for (std::size_t tb = 0; tb < kTimeBins; ++tb) {
                const double rhythm =
                    0.6 + 0.4 * std::cos(2.0 * std::numbers::pi * rate * static_cast<double>(tb) / kTimeBins + phase);
                const double a = src.loudness[t] * rhythm;
                v[(t * kFreqBins + f0) * kTimeBins + tb] += a;
                v[(t * kFreqBins + f0 + 1) * kTimeBins + tb] += 0.5 * a;
                v[(t * kFreqBins + f1) * kTimeBins + tb] += 0.7 * a;
            }
    }
    return Tensor({kClipSteps, kFreqBins, kTimeBins}, std::move(v));
}

SceneClip generate_clip(std::uint64_t seed, Mode mode, std::size_t height, std::size_t width) {
    SceneClip clip;
    clip.height = height;
    clip.width = width;
    clip.sources = generate_sources(seed, mode, height, width);

    std::mt19937_64 rng(mix(seed, mode, 1));
    std::uniform_real_distribution<double> noise(0.0, 1.0);
    for (std::size_t t = 0; t < kClipSteps; ++t) {
        std::vector<double> px(3 * height * width);
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < width; ++x) {
                const double base = 0.08 + 0.14 * noise(rng);
                for (std::size_t c = 0; c < 3; ++c) px[(c * height + y) * width + x] = quantize(base + 0.03 * noise(rng));
            }
        BinaryMask mask(height, width);
        for (const auto& s : clip.sources)
            for (std::size_t y = 0; y < height; ++y)
                for (std::size_t x = 0; x < width; ++x) {
                    if (!shape_contains(s, t, x, y)) continue;
                    for (std::size_t c = 0; c < 3; ++c) px[(c * height + y) * width + x] = s.color[c];
                    if (s.is_sounding) mask(y, x) = 1;
                }
        clip.frames.emplace_back(Shape{3, height, width}, std::move(px));
        clip.gt_masks.push_back(std::move(mask));
    }

    std::vector<double> mix_spec(kClipSteps * kFreqBins * kTimeBins, 0.0);
    for (const auto& s : clip.sources) {
        if (!s.is_sounding) continue;
        const Tensor solo_spec = source_spectrogram(s);
        auto solo = solo_spec.data();
        for (std::size_t i = 0; i < mix_spec.size(); ++i) mix_spec[i] += solo[i];
    }
    clip.spectrogram = Tensor({kClipSteps, kFreqBins, kTimeBins}, std::move(mix_spec));
    return clip;
}

// -- on-disk dataset ------------------------------------------------------------

std::vector<ManifestEntry> DatasetManifest::split(const std::string& name) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
        if (e.split == name) out.push_back(e);
    return out;
}

void write_clip(const fs::path& dir, const SceneClip& clip) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    for (std::size_t t = 0; t < clip.steps(); ++t) {
        write_ppm(dir / ("frame_" + std::to_string(t) + ".ppm"), clip.frames[t]);
        write_pgm(dir / ("mask_" + std::to_string(t) + ".pgm"), clip.gt_masks[t]);
    }
    write_tavs(dir / "spec.tavs", {{"spectrogram", clip.spectrogram}});
    json meta = json::array();
    for (const auto& s : clip.sources) {
        meta.push_back({{"class", shape_name(s.object_class)},
                        {"class_id", s.object_class},
                        {"sounding", s.is_sounding},
                        {"radius", s.radius},
                        {"start", {s.start_x, s.start_y}},
                        {"step", {s.step_x, s.step_y}}});
    }
    std::ofstream os(dir / "sources.json");
    if (!os) throw IoError("cannot write " + (dir / "sources.json").string());
    os << meta.dump(1) << '\n';
}

SceneClip load_clip(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("clip directory not found: " + dir.string());
    SceneClip clip;
    for (std::size_t t = 0; t < kClipSteps; ++t) {
        clip.frames.push_back(read_ppm(dir / ("frame_" + std::to_string(t) + ".ppm")));
        clip.gt_masks.push_back(read_pgm(dir / ("mask_" + std::to_string(t) + ".pgm")));
    }
    clip.height = clip.frames[0].dim(1);
    clip.width = clip.frames[0].dim(2);
    clip.spectrogram = find_tensor(read_tavs(dir / "spec.tavs"), "spectrogram");
    return clip;
}

DatasetManifest write_dataset(const fs::path& out_dir, const DatasetSpec& spec) {
    if (spec.n_train < 1 || spec.n_valid < 1 || spec.n_test < 1) throw UsageError("split counts must be >= 1");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create directory " + out_dir.string() + ": " + ec.message());

    DatasetManifest manifest;
    manifest.path = out_dir / "manifest.jsonl";
    const std::array<std::pair<const char*, std::size_t>, 3> splits{
        {{"train", spec.n_train}, {"valid", spec.n_valid}, {"test", spec.n_test}}};
    std::uint64_t seed = spec.seed0;
    const std::string tag = spec.mode == Mode::S4 ? "s4" : "ms3";
    for (const auto& [name, count] : splits) {
        for (std::size_t i = 0; i < count; ++i, ++seed) {
            char id[64];
            std::snprintf(id, sizeof id, "%s_%s_%06zu", tag.c_str(), name, i);
            ManifestEntry e{id, spec.mode, name, std::string(name) + "/" + id, seed};
            write_clip(out_dir / e.dir, generate_clip(seed, spec.mode, spec.height, spec.width));
            manifest.entries.push_back(std::move(e));
        }
    }
    std::ofstream os(manifest.path, std::ios::trunc);
    if (!os) throw IoError("cannot write manifest " + manifest.path.string());
    for (const auto& e : manifest.entries) {
        json j{{"id", e.id}, {"mode", mode_name(e.mode)}, {"split", e.split}, {"dir", e.dir}, {"seed", e.seed}};
        os << j.dump() << '\n';
    }
    if (!os) throw IoError("write failed: " + manifest.path.string());
    return manifest;
}

DatasetManifest read_manifest(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open manifest: " + path.string());
    DatasetManifest m;
    m.path = path;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            auto j = json::parse(line);
            m.entries.push_back({j.at("id").get<std::string>(), parse_mode(j.at("mode").get<std::string>()),
                                 j.at("split").get<std::string>(), j.at("dir").get<std::string>(),
                                 j.at("seed").get<std::uint64_t>()});
        } catch (const json::exception& e) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return m;
}

}  // namespace transavs::synth
