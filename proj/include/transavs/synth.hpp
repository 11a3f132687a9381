#pragma once

// Synthetic audio-visual scenes with exact ground truth.
//
// Each clip has T = 5 one-second steps. Every step has an RGB frame, a
// spectrogram slice and a binary mask of the sounding objects. Objects are
// hard-edged shapes of six classes moving linearly across the clip; each class
// has a characteristic color and a characteristic tone pattern. Sounding
// objects add their tones into the shared spectrogram, silent objects add
// nothing.

#include "transavs/image.hpp"
#include "transavs/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace transavs::synth {

inline constexpr std::size_t kClipSteps = 5;
inline constexpr std::size_t kFreqBins = 32;
inline constexpr std::size_t kTimeBins = 8;
inline constexpr std::size_t kNumClasses = 6;

enum class Mode { S4, MS3 };

Mode parse_mode(const std::string& text);  // throws UsageError
std::string mode_name(Mode mode);

enum class ShapeKind : int { Disc = 0, Square, Triangle, Ring, Bar, Cross };
std::string shape_name(int object_class);

struct Source {
    int object_class = 0;
    bool is_sounding = false;
    double start_x = 0.0, start_y = 0.0;  // center at step 0, pixels
    double step_x = 0.0, step_y = 0.0;    // displacement per step
    double radius = 0.0;
    std::array<double, 3> color{};
    std::array<double, kClipSteps> loudness{};  // per-step tone amplitude

    double center_x(std::size_t t) const { return start_x + step_x * static_cast<double>(t); }
    double center_y(std::size_t t) const { return start_y + step_y * static_cast<double>(t); }
};

/// Per-step view of one source.
struct SourceState {
    int object_class = 0;
    double center_x = 0.0, center_y = 0.0, radius = 0.0;
    bool is_sounding = false;
};

struct SceneClip {
    std::size_t height = 0, width = 0;
    std::vector<Tensor> frames;       // T × [3, H, W], values k/255
    Tensor spectrogram;               // [T, kFreqBins, kTimeBins]
    std::vector<BinaryMask> gt_masks;  // T × H×W
    std::vector<Source> sources;      // drawing order: silent first, then sounding

    std::size_t steps() const { return frames.size(); }
    std::vector<SourceState> sources_at(std::size_t t) const;
};

/// Scene layout for (seed, mode, size). Throws UsageError unless H and W are
/// powers of two ≥ 32.
std::vector<Source> generate_sources(std::uint64_t seed, Mode mode, std::size_t height, std::size_t width);

/// True iff pixel (x, y) lies inside the source's shape at step t.
bool shape_contains(const Source& src, std::size_t t, std::size_t x, std::size_t y);

/// Spectrogram contribution [T, F, Tb] of one source played alone.
Tensor source_spectrogram(const Source& src);

SceneClip generate_clip(std::uint64_t seed, Mode mode, std::size_t height, std::size_t width);

// -- on-disk dataset ------------------------------------------------------------

struct ManifestEntry {
    std::string id;
    Mode mode = Mode::S4;
    std::string split;
    std::string dir;  // relative to the manifest's directory
    std::uint64_t seed = 0;
};

struct DatasetManifest {
    std::filesystem::path path;
    std::vector<ManifestEntry> entries;

    std::filesystem::path clip_dir(const ManifestEntry& e) const { return path.parent_path() / e.dir; }
    std::vector<ManifestEntry> split(const std::string& name) const;
};

struct DatasetSpec {
    Mode mode = Mode::S4;
    std::size_t n_train = 1, n_valid = 1, n_test = 1;
    std::uint64_t seed0 = 0;
    std::size_t height = 64, width = 64;
};

/// Serializes every clip under `out_dir/<split>/<id>/` and writes
/// `out_dir/manifest.jsonl`. Train/valid/test use consecutive, disjoint seed
/// ranges starting at seed0.
DatasetManifest write_dataset(const std::filesystem::path& out_dir, const DatasetSpec& spec);

void write_clip(const std::filesystem::path& dir, const SceneClip& clip);
/// Loads frames, masks and spectrogram; sources are not restored.
SceneClip load_clip(const std::filesystem::path& dir);

DatasetManifest read_manifest(const std::filesystem::path& path);

}  // namespace transavs::synth
