#include "transavs/evaluate.hpp"

namespace transavs {

std::vector<BinaryMask> infer_clip(const TransAVS& model, const synth::SceneClip& clip) {
    ClipPrediction pred = model.forward(clip);
    std::vector<BinaryMask> out;
    out.reserve(pred.frames.size());
    for (const auto& z : pred.frames) out.push_back(fuse_predictions(z.probs, z.masks, z.height, z.width));
    return out;
}

EvalRecord evaluate_clips(const TransAVS& model, const std::vector<synth::SceneClip>& clips,
                          const std::vector<std::string>& ids, double beta2) {
    EvalRecord rec;
    for (std::size_t c = 0; c < clips.size(); ++c) {
        auto masks = infer_clip(model, clips[c]);
        for (std::size_t t = 0; t < masks.size(); ++t)
            rec.add(c < ids.size() ? ids[c] : std::to_string(c), t, masks[t], clips[c].gt_masks[t], beta2);
    }
    rec.finalize();
    return rec;
}

EvalRecord evaluate_split(const TransAVS& model, const synth::DatasetManifest& manifest, const std::string& split,
                          const std::filesystem::path& out_dir, double beta2) {
    const auto entries = manifest.split(split);
    if (entries.empty()) throw IoError("manifest " + manifest.path.string() + " has no clips in split '" + split + "'");
    EvalRecord rec;
    for (const auto& e : entries) {
        const synth::SceneClip clip = synth::load_clip(manifest.clip_dir(e));
        auto masks = infer_clip(model, clip);
        for (std::size_t t = 0; t < masks.size(); ++t) {
            rec.add(e.id, t, masks[t], clip.gt_masks[t], beta2);
            if (!out_dir.empty()) {
                const auto dir = out_dir / "pred" / e.id;
                std::filesystem::create_directories(dir);
                write_pgm(dir / ("mask_" + std::to_string(t) + ".pgm"), masks[t]);
            }
        }
    }
    rec.finalize();
    if (!out_dir.empty()) write_eval_outputs(out_dir, rec);
    return rec;
}

}  // namespace transavs
