#include "doctest.h"

#include "transavs/errors.hpp"
#include "transavs/synth.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace transavs;
using namespace transavs::synth;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("transavs_test_synth_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool same_clip(const SceneClip& a, const SceneClip& b) {
    if (a.steps() != b.steps() || a.gt_masks != b.gt_masks) return false;
    for (std::size_t t = 0; t < a.steps(); ++t)
        for (std::size_t i = 0; i < a.frames[t].numel(); ++i)
            if (a.frames[t][i] != b.frames[t][i]) return false;
    for (std::size_t i = 0; i < a.spectrogram.numel(); ++i)
        if (a.spectrogram[i] != b.spectrogram[i]) return false;
    return true;
}

}  // namespace

TEST_CASE("S4: exactly one sounding source, T = 5, shapes") {
    const SceneClip c = generate_clip(7, Mode::S4, 64, 64);
    CHECK(c.steps() == kClipSteps);
    CHECK(c.gt_masks.size() == kClipSteps);
    CHECK(c.spectrogram.shape() == Shape{kClipSteps, kFreqBins, kTimeBins});
    for (std::size_t t = 0; t < c.steps(); ++t) {
        CHECK(c.frames[t].shape() == Shape{3, 64, 64});
        std::size_t sounding = 0;
        for (const auto& s : c.sources_at(t)) sounding += s.is_sounding;
        CHECK(sounding == 1);
    }
}

TEST_CASE("S4 and MS3 source counts over many seeds") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto s4 = generate_sources(seed, Mode::S4, 64, 64);
        const auto ms3 = generate_sources(seed, Mode::MS3, 64, 64);
        std::size_t n4 = 0, n3 = 0;
        std::set<int> classes4, classes3;
        for (const auto& s : s4) n4 += s.is_sounding, classes4.insert(s.object_class);
        for (const auto& s : ms3) n3 += s.is_sounding, classes3.insert(s.object_class);
        CHECK(n4 == 1);
        CHECK(s4.size() <= 3);
        CHECK(classes4.size() == s4.size());
        CHECK(n3 >= 2);
        CHECK(n3 <= 3);
        CHECK(classes3.size() == ms3.size());
    }
}

TEST_CASE("generation is deterministic") {
    CHECK(same_clip(generate_clip(7, Mode::S4, 64, 64), generate_clip(7, Mode::S4, 64, 64)));
    CHECK(same_clip(generate_clip(11, Mode::MS3, 32, 64), generate_clip(11, Mode::MS3, 32, 64)));
    CHECK_FALSE(same_clip(generate_clip(7, Mode::S4, 64, 64), generate_clip(8, Mode::S4, 64, 64)));
}

TEST_CASE("mask equals the union of sounding shapes") {
    for (std::uint64_t seed : {3u, 11u, 19u}) {
        const SceneClip c = generate_clip(seed, Mode::MS3, 64, 64);
        for (std::size_t t = 0; t < c.steps(); ++t)
            for (std::size_t y = 0; y < 64; ++y)
                for (std::size_t x = 0; x < 64; ++x) {
                    bool inside = false;
                    for (const auto& s : c.sources) inside = inside || (s.is_sounding && shape_contains(s, t, x, y));
                    CHECK(c.gt_masks[t](y, x) == (inside ? 1 : 0));
                }
    }
}

TEST_CASE("spectrogram is the exact sum of solo tracks") {
    const SceneClip c = generate_clip(11, Mode::MS3, 64, 64);
    std::vector<double> acc(c.spectrogram.numel(), 0.0);
    for (const auto& s : c.sources) {
        const Tensor solo = source_spectrogram(s);
        if (!s.is_sounding)
            for (double v : solo.data()) CHECK(v == 0.0);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += solo[i];
    }
    for (std::size_t i = 0; i < acc.size(); ++i) CHECK(c.spectrogram[i] == acc[i]);
}

TEST_CASE("tone patterns differ between classes") {
    Source a, b;
    a.is_sounding = b.is_sounding = true;
    a.loudness.fill(1.0);
    b.loudness.fill(1.0);
    for (int i = 0; i < static_cast<int>(kNumClasses); ++i)
        for (int j = i + 1; j < static_cast<int>(kNumClasses); ++j) {
            a.object_class = i;
            b.object_class = j;
            const Tensor sa = source_spectrogram(a), sb = source_spectrogram(b);
            bool differ = false;
            for (std::size_t k = 0; k < sa.numel(); ++k) differ = differ || sa[k] != sb[k];
            CHECK(differ);
        }
}

TEST_CASE("invalid arguments") {
    CHECK_THROWS_AS(generate_clip(0, Mode::S4, 48, 64), UsageError);
    CHECK_THROWS_AS(generate_clip(0, Mode::S4, 16, 16), UsageError);
    CHECK_THROWS_AS(parse_mode("S5"), UsageError);
    CHECK(parse_mode("MS3") == Mode::MS3);
}

TEST_CASE("write_dataset: counts, layout, round trip and byte-identical regeneration") {
    const auto dir = scratch("dataset");
    DatasetSpec spec;
    spec.mode = Mode::S4;
    spec.n_train = 10;
    spec.n_valid = 2;
    spec.n_test = 2;
    spec.seed0 = 0;
    const DatasetManifest m = write_dataset(dir, spec);
    CHECK(m.entries.size() == 14);
    CHECK(m.split("train").size() == 10);

    std::ifstream mf(dir / "manifest.jsonl");
    std::size_t lines = 0;
    for (std::string l; std::getline(mf, l);) lines += !l.empty();
    CHECK(lines == 14);

    std::set<std::uint64_t> seeds;
    for (const auto& e : m.entries) {
        seeds.insert(e.seed);
        CHECK(fs::is_directory(m.clip_dir(e)));
        CHECK(fs::exists(m.clip_dir(e) / "sources.json"));
    }
    CHECK(seeds.size() == 14);

    const DatasetManifest back = read_manifest(dir / "manifest.jsonl");
    REQUIRE(back.entries.size() == 14);
    const auto& e = back.entries[3];
    CHECK(same_clip(load_clip(back.clip_dir(e)), generate_clip(e.seed, e.mode, 64, 64)));

    const auto dir2 = scratch("dataset_again");
    write_dataset(dir2, spec);
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), dir);
        CHECK(slurp(entry.path()) == slurp(dir2 / rel));
    }
}

TEST_CASE("dataset errors") {
    DatasetSpec spec;
    spec.n_valid = 0;
    CHECK_THROWS_AS(write_dataset(scratch("bad"), spec), UsageError);
    CHECK_THROWS_AS(read_manifest("/nonexistent/manifest.jsonl"), IoError);
    CHECK_THROWS_AS(load_clip("/nonexistent/clip"), IoError);
}
