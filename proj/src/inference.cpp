#include "transavs/inference.hpp"

#include <cstdio>
#include <fstream>

namespace transavs {

namespace {

void require_same_size(const BinaryMask& a, const BinaryMask& b, const char* op) {
    if (a.height != b.height || a.width != b.width)
        throw DimensionError(std::string(op) + ": mask sizes differ (" + std::to_string(a.height) + "x" +
                             std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                             std::to_string(b.width) + ")");
}

struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0;
};

Counts count(const BinaryMask& pred, const BinaryMask& truth) {
    Counts c;
    for (std::size_t i = 0; i < pred.bits.size(); ++i) {
        const bool p = pred.bits[i] != 0, t = truth.bits[i] != 0;
        c.tp += p && t;
        c.fp += p && !t;
        c.fn += !p && t;
    }
    return c;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

BinaryMask fuse_predictions(const Tensor& probs, const Tensor& masks, std::size_t height, std::size_t width) {
    if (probs.ndim() != 2 || masks.ndim() != 2 || probs.dim(0) != masks.dim(0) || masks.dim(1) != height * width)
        throw DimensionError("fuse_predictions: probs " + shape_str(probs.shape()) + " / masks " +
                             shape_str(masks.shape()) + " do not describe one prediction set");
    const auto n = probs.dim(0), k = probs.dim(1), hw = height * width;
    auto p = probs.data();
    auto m = masks.data();
    std::vector<double> conf(n);
    std::vector<std::size_t> cls(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c)
            if (p[i * k + c] > p[i * k + best]) best = c;
        cls[i] = best;
        conf[i] = p[i * k + best];
    }
    BinaryMask out(height, width);
    for (std::size_t px = 0; px < hw; ++px) {
        std::size_t winner = 0;
        double best = conf[0] * m[px];
        for (std::size_t i = 1; i < n; ++i) {
            const double s = conf[i] * m[i * hw + px];
            if (s > best) {
                best = s;
                winner = i;
            }
        }
        out.bits[px] = cls[winner] == 0 ? 1 : 0;
    }
    return out;
}

double jaccard(const BinaryMask& pred, const BinaryMask& truth) {
    require_same_size(pred, truth, "jaccard");
    const auto c = count(pred, truth);
    const auto uni = c.tp + c.fp + c.fn;
    if (uni == 0) return 1.0;
    return static_cast<double>(c.tp) / static_cast<double>(uni);
}

double fscore(const BinaryMask& pred, const BinaryMask& truth, double beta2) {
    require_same_size(pred, truth, "fscore");
    const auto c = count(pred, truth);
    if (c.tp + c.fp + c.fn == 0) return 1.0;
    if (c.tp == 0) return 0.0;
    const double precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    const double recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    return (1.0 + beta2) * precision * recall / (beta2 * precision + recall);
}

void EvalRecord::add(std::string clip, std::size_t frame, const BinaryMask& pred, const BinaryMask& truth,
                     double beta2) {
    frames.push_back({std::move(clip), frame, jaccard(pred, truth), fscore(pred, truth, beta2)});
}

void EvalRecord::finalize() {
    double sj = 0.0, sf = 0.0;
    for (const auto& r : frames) {
        sj += r.j;
        sf += r.f;
    }
    const double n = frames.empty() ? 1.0 : static_cast<double>(frames.size());
    mean_j = sj / n;
    mean_f = sf / n;
}

void write_eval_outputs(const std::filesystem::path& dir, const EvalRecord& record) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ofstream csv(dir / "metrics.csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write " + (dir / "metrics.csv").string());
    csv << "clip,frame,J,F\n";
    for (const auto& r : record.frames) csv << r.clip << ',' << r.frame << ',' << fmt(r.j) << ',' << fmt(r.f) << '\n';
    std::ofstream summary(dir / "summary.txt", std::ios::trunc);
    if (!summary) throw IoError("cannot write " + (dir / "summary.txt").string());
    summary << "MJ=" << fmt(record.mean_j) << "\nMF=" << fmt(record.mean_f) << "\nframes=" << record.frames.size()
            << '\n';
}

}  // namespace transavs
