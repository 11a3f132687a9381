#pragma once

#include "transavs/inference.hpp"
#include "transavs/model.hpp"
#include "transavs/synth.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace transavs {

/// Fused binary mask per frame of a clip.
std::vector<BinaryMask> infer_clip(const TransAVS& model, const synth::SceneClip& clip);

/// Scores every annotated frame of the listed clips.
EvalRecord evaluate_clips(const TransAVS& model, const std::vector<synth::SceneClip>& clips,
                          const std::vector<std::string>& ids, double beta2 = 0.3);

/// Loads the split from the manifest and scores it. When `out_dir` is set,
/// writes metrics.csv, summary.txt and predicted masks under out_dir/pred/.
EvalRecord evaluate_split(const TransAVS& model, const synth::DatasetManifest& manifest, const std::string& split,
                          const std::filesystem::path& out_dir = {}, double beta2 = 0.3);

}  // namespace transavs
