#include "transavs/trainer.hpp"

#include "transavs/config.hpp"
#include "transavs/errors.hpp"
#include "transavs/evaluate.hpp"

#include <malloc.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

namespace transavs {

void TrainConfig::validate() const {
    if (!(base_lr > 0.0)) throw UsageError("base_lr must be > 0");
    if (!(encoder_lr_multiplier >= 0.0)) throw UsageError("encoder_lr_multiplier must be >= 0");
    if (!(weight_decay >= 0.0)) throw UsageError("weight_decay must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw UsageError("beta1, beta2 must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw UsageError("adam_eps must be > 0");
    if (!(grad_clip_norm >= 0.0)) throw UsageError("grad_clip_norm must be >= 0");
    if (!(lr_poly_power >= 0.0)) throw UsageError("lr_poly_power must be >= 0");
    if (batch_size < 1) throw UsageError("batch_size must be >= 1");
    if (checkpoint_every < 1) throw UsageError("checkpoint_every must be >= 1");
    if (model.queries < 1 || model.d < 1) throw UsageError("model.queries and model.d must be >= 1");
    if (model.steps != synth::kClipSteps) throw UsageError("model steps must equal the clip length");
    loss.validate();
}

// -- optimizer ------------------------------------------------------------

AdamW::AdamW(std::vector<ParamRef> params, const TrainConfig& cfg)
    : params_(std::move(params)), beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.adam_eps),
      weight_decay_(cfg.weight_decay) {
    slots_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const std::size_t n = params_[i].tensor->numel();
        slots_[i].m.assign(n, 0.0);
        slots_[i].v.assign(n, 0.0);
        slots_[i].lr = params_[i].group == ParamGroup::Backbone ? cfg.base_lr * cfg.encoder_lr_multiplier : cfg.base_lr;
    }
}

void AdamW::step(const std::vector<std::vector<double>>& grads, double lr_scale) {
    if (grads.size() != params_.size())
        throw DimensionError("AdamW::step: " + std::to_string(grads.size()) + " gradients for " +
                             std::to_string(params_.size()) + " parameters");
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double bc1 = 1.0 - std::pow(beta1_, t);
    const double bc2 = 1.0 - std::pow(beta2_, t);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto p = params_[i].tensor->mutable_data();
        const auto& g = grads[i];
        if (g.size() != p.size()) throw DimensionError("AdamW::step: gradient size mismatch for " + params_[i].name);
        Slot& s = slots_[i];
        const double lr = s.lr * lr_scale;
        for (std::size_t k = 0; k < p.size(); ++k) {
            p[k] -= lr * weight_decay_ * p[k];
            s.m[k] = beta1_ * s.m[k] + (1.0 - beta1_) * g[k];
            s.v[k] = beta2_ * s.v[k] + (1.0 - beta2_) * g[k] * g[k];
            const double mhat = s.m[k] / bc1;
            const double vhat = s.v[k] / bc2;
            p[k] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void AdamW::save_state(std::vector<NamedTensor>& out) const {
    out.push_back({"opt.step", Tensor::scalar(static_cast<double>(steps_))});
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const Shape& shape = params_[i].tensor->shape();
        out.push_back({"opt.m." + params_[i].name, Tensor(shape, slots_[i].m)});
        out.push_back({"opt.v." + params_[i].name, Tensor(shape, slots_[i].v)});
    }
}

void AdamW::load_state(const std::vector<NamedTensor>& in) {
    steps_ = static_cast<std::size_t>(find_tensor(in, "opt.step").item());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        for (auto [prefix, dst] : {std::pair{"opt.m.", &slots_[i].m}, std::pair{"opt.v.", &slots_[i].v}}) {
            const Tensor& t = find_tensor(in, prefix + params_[i].name);
            if (t.numel() != dst->size()) throw IoError("checkpoint: optimizer state size mismatch for " + params_[i].name);
            dst->assign(t.data().begin(), t.data().end());
        }
    }
}

// -- loss and gradients -------------------------------------------------------

namespace {

bool all_finite(const Tensor& t) {
    for (double v : t.data())
        if (!std::isfinite(v)) return false;
    return true;
}

std::string non_finite_report(std::size_t iteration, const StepMetrics& m) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "non-finite loss at iteration " << iteration << ": total=" << m.loss << " aqdl=" << m.aqdl
        << " aqml=" << m.aqml << " class=" << m.cls << " dice=" << m.dice;
    return msg.str();
}

}  // namespace

ClipLoss clip_loss(const TransAVS& model, const synth::SceneClip& clip, const TrainConfig& cfg,
                   std::size_t iteration) {
    const std::size_t frames = cfg.s4_first_frame_only ? 1 : clip.steps();
    ClipPrediction pred = model.forward(clip, frames);
    ClipLoss out;
    std::tie(out.parts.delta1, out.parts.delta2) = threshold_at(iteration, cfg.loss);
    Tensor acc;
    for (std::size_t t = 0; t < pred.frames.size(); ++t) {
        if (!all_finite(pred.frames[t].probs) || !all_finite(pred.frames[t].masks))
            throw NonFiniteLoss(non_finite_report(iteration, out.parts) + " (non-finite predictions in frame " +
                                std::to_string(t) + ")");
        std::vector<BinaryMask> targets;
        if (clip.gt_masks[t].count() > 0) targets.push_back(clip.gt_masks[t]);
        LossTerms terms = total_loss(pred.frames[t], model.projection, targets, cfg.loss, iteration);
        acc = acc.defined() ? add(acc, terms.total) : terms.total;
        out.parts.aqdl += terms.aqdl.item();
        out.parts.aqml += terms.aqml.item();
        out.parts.cls += terms.cls.item();
        out.parts.dice += terms.dice.item();
    }
    const double inv = 1.0 / static_cast<double>(pred.frames.size());
    out.total = scale(acc, inv);
    out.parts.loss = out.total.item();
    out.parts.aqdl *= inv;
    out.parts.aqml *= inv;
    out.parts.cls *= inv;
    out.parts.dice *= inv;
    if (!std::isfinite(out.parts.loss)) throw NonFiniteLoss(non_finite_report(iteration, out.parts));
    return out;
}

namespace {

struct SampleResult {
    std::vector<std::vector<double>> grads;
    StepMetrics parts;
    std::exception_ptr error;
};

void run_sample(const TransAVS& model, const synth::SceneClip& clip, const TrainConfig& cfg, std::size_t iteration,
                SampleResult& out) {
    try {
        TransAVS replica = model.clone();
        ClipLoss l = clip_loss(replica, clip, cfg, iteration);
        l.total.backward();
        out.parts = l.parts;
        for (const Tensor* p : replica.parameter_tensors()) {
            if (p->has_grad())
                out.grads.emplace_back(p->grad().begin(), p->grad().end());
            else
                out.grads.emplace_back(p->numel(), 0.0);
        }
    } catch (...) {
        out.error = std::current_exception();
    }
}

}  // namespace

std::vector<std::vector<double>> batch_gradients(const TransAVS& model, std::span<const synth::SceneClip* const> batch,
                                                 const TrainConfig& cfg, std::size_t iteration,
                                                 StepMetrics& metrics) {
    if (batch.empty()) throw DimensionError("batch_gradients: empty batch");
    std::vector<SampleResult> results(batch.size());
    const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.threads, batch.size()));
    if (workers == 1) {
        for (std::size_t b = 0; b < batch.size(); ++b) run_sample(model, *batch[b], cfg, iteration, results[b]);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t b = w; b < batch.size(); b += workers)
                    run_sample(model, *batch[b], cfg, iteration, results[b]);
            });
        for (auto& th : pool) th.join();
    }
    for (auto& r : results)
        if (r.error) std::rethrow_exception(r.error);

    const double inv = 1.0 / static_cast<double>(batch.size());
    std::vector<std::vector<double>> grads = std::move(results[0].grads);
    for (std::size_t b = 1; b < results.size(); ++b)
        for (std::size_t i = 0; i < grads.size(); ++i)
            for (std::size_t k = 0; k < grads[i].size(); ++k) grads[i][k] += results[b].grads[i][k];
    for (auto& g : grads)
        for (auto& x : g) x *= inv;

    metrics = StepMetrics{};
    metrics.delta1 = results[0].parts.delta1;
    metrics.delta2 = results[0].parts.delta2;
    for (const auto& r : results) {
        metrics.loss += r.parts.loss;
        metrics.aqdl += r.parts.aqdl;
        metrics.aqml += r.parts.aqml;
        metrics.cls += r.parts.cls;
        metrics.dice += r.parts.dice;
    }
    metrics.loss *= inv;
    metrics.aqdl *= inv;
    metrics.aqml *= inv;
    metrics.cls *= inv;
    metrics.dice *= inv;
    return grads;
}

double lr_factor(std::size_t iteration, const TrainConfig& cfg) {
    if (cfg.lr_poly_power == 0.0 || cfg.max_iterations == 0) return 1.0;
    const double frac = std::min(1.0, static_cast<double>(iteration) / static_cast<double>(cfg.max_iterations));
    return std::pow(1.0 - frac, cfg.lr_poly_power);
}

StepMetrics train_step(TransAVS& model, AdamW& opt, std::span<const synth::SceneClip* const> batch,
                       const TrainConfig& cfg, std::size_t iteration) {
    StepMetrics m;
    auto grads = batch_gradients(model, batch, cfg, iteration, m);
    for (std::size_t i = 0; i < grads.size(); ++i)
        for (double g : grads[i])
            if (!std::isfinite(g))
                throw NonFiniteLoss("non-finite gradient for " + opt.params()[i].name + " at iteration " +
                                    std::to_string(iteration));
    double sq = 0.0;
    for (const auto& g : grads)
        for (double x : g) sq += x * x;
    m.grad_norm = std::sqrt(sq);
    if (cfg.grad_clip_norm > 0.0 && m.grad_norm > cfg.grad_clip_norm) {
        const double s = cfg.grad_clip_norm / m.grad_norm;
        for (auto& g : grads)
            for (double& x : g) x *= s;
    }
    opt.step(grads, lr_factor(iteration, cfg));
    m.iteration = iteration + 1;
    return m;
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t iteration, std::size_t batch_size,
                                       std::size_t n_train) {
    if (n_train == 0) throw UsageError("training split is empty");
    std::vector<std::size_t> out;
    out.reserve(batch_size);
    std::size_t cached_epoch = static_cast<std::size_t>(-1);
    std::vector<std::size_t> perm(n_train);
    for (std::size_t b = 0; b < batch_size; ++b) {
        const std::size_t slot = iteration * batch_size + b;
        const std::size_t epoch = slot / n_train;
        if (epoch != cached_epoch) {
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                              static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32), 0x5eedu};
            std::mt19937_64 rng(seq);
            // Fisher-Yates with explicit draws so the order is library-independent.
            for (std::size_t i = n_train - 1; i > 0; --i) std::swap(perm[i], perm[rng() % (i + 1)]);
            cached_epoch = epoch;
        }
        out.push_back(perm[slot % n_train]);
    }
    return out;
}

// -- checkpoints ----------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const TransAVS& model, const AdamW& opt) {
    std::vector<NamedTensor> state = model.state();
    opt.save_state(state);
    state.push_back({"train.iteration", Tensor::scalar(static_cast<double>(opt.steps()))});
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    write_tavs(path, state);
}

std::size_t load_checkpoint(const std::filesystem::path& path, TransAVS& model, AdamW& opt) {
    const auto state = read_tavs(path);
    TransAVS loaded = TransAVS::from_state(state);
    auto dst = model.parameters();
    auto src = loaded.parameters();
    if (dst.size() != src.size()) throw IoError("checkpoint " + path.string() + " does not match the model layout");
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (dst[i].tensor->shape() != src[i].tensor->shape())
            throw IoError("checkpoint " + path.string() + ": shape mismatch for " + dst[i].name);
        auto out = dst[i].tensor->mutable_data();
        auto in = src[i].tensor->data();
        std::copy(in.begin(), in.end(), out.begin());
    }
    opt.load_state(state);
    return static_cast<std::size_t>(find_tensor(state, "train.iteration").item());
}

TransAVS load_model(const std::filesystem::path& path) { return TransAVS::from_state(read_tavs(path)); }

std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, std::size_t iteration) {
    char name[32];
    std::snprintf(name, sizeof name, "iter_%06zu.tavs", iteration);
    return run_dir / "checkpoints" / name;
}

// -- fit --------------------------------------------------------------------------

namespace {

constexpr const char* kLossHeader = "iter,loss,aqdl,aqml,class,dice,delta1,delta2";

std::string loss_row(const StepMetrics& m) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", m.iteration, m.loss, m.aqdl,
                  m.aqml, m.cls, m.dice, m.delta1, m.delta2);
    return buf;
}

// Keeps the header and rows with iter <= last; used when resuming.
void truncate_loss_log(const std::filesystem::path& path, std::size_t last) {
    std::vector<std::string> keep{kLossHeader};
    std::ifstream in(path);
    std::string line;
    bool first = true;
    while (in && std::getline(in, line)) {
        if (first) {
            first = false;
            continue;
        }
        if (line.empty()) continue;
        const std::size_t iter = std::stoull(line.substr(0, line.find(',')));
        if (iter <= last) keep.push_back(line);
    }
    in.close();
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : keep) out << l << '\n';
}

}  // namespace

FitResult fit(const TrainConfig& cfg, const std::filesystem::path& resume,
              const std::vector<synth::SceneClip>* preloaded_train) {
    cfg.validate();
    const std::filesystem::path run_dir = cfg.out_dir;
    std::filesystem::create_directories(run_dir / "checkpoints");

    std::optional<synth::DatasetManifest> manifest;
    if (!cfg.data.empty()) manifest = synth::read_manifest(cfg.data);

    std::vector<synth::SceneClip> owned;
    const std::vector<synth::SceneClip>* train = preloaded_train;
    if (!train) {
        if (!manifest) throw UsageError("config key 'data' is required");
        for (const auto& e : manifest->split("train")) owned.push_back(synth::load_clip(manifest->clip_dir(e)));
        train = &owned;
    }
    if (train->empty()) throw IoError("no training clips in " + cfg.data);

    TransAVS model = TransAVS::init(cfg.model, cfg.seed);
    AdamW opt(model.parameters(), cfg);
    std::size_t start = 0;
    const auto log_path = run_dir / "loss.csv";
    if (!resume.empty()) {
        start = load_checkpoint(resume, model, opt);
        truncate_loss_log(log_path, start);
    } else {
        std::ofstream(log_path, std::ios::trunc) << kLossHeader << '\n';
    }
    {
        std::ofstream conf(run_dir / "config.txt", std::ios::trunc);
        conf << format_config(cfg);
        if (!conf) throw IoError("cannot write " + (run_dir / "config.txt").string());
    }

    FitResult result;
    if (start == 0) save_checkpoint(checkpoint_path(run_dir, 0), model, opt);
    std::ofstream log(log_path, std::ios::app);
    if (!log) throw IoError("cannot open " + log_path.string());
    std::vector<const synth::SceneClip*> batch(cfg.batch_size);
    for (std::size_t it = start; it < cfg.max_iterations; ++it) {
        const auto idx = batch_indices(cfg.seed, it, cfg.batch_size, train->size());
        for (std::size_t b = 0; b < idx.size(); ++b) batch[b] = &(*train)[idx[b]];
        const StepMetrics m = train_step(model, opt, batch, cfg, it);
        log << loss_row(m) << '\n';
        log.flush();
        if (m.iteration % cfg.checkpoint_every == 0 || m.iteration == cfg.max_iterations)
            save_checkpoint(checkpoint_path(run_dir, m.iteration), model, opt);
    }
    result.iterations = std::max(start, cfg.max_iterations);
    result.final_checkpoint = checkpoint_path(run_dir, opt.steps());
    if (!std::filesystem::exists(result.final_checkpoint)) save_checkpoint(result.final_checkpoint, model, opt);

    if (manifest && cfg.eval_split != "none" && !manifest->split(cfg.eval_split).empty()) {
        const EvalRecord rec = evaluate_split(model, *manifest, cfg.eval_split, run_dir);
        result.mean_j = rec.mean_j;
        result.mean_f = rec.mean_f;
    }
    return result;
}

void tune_allocator() {
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, std::numeric_limits<int>::max());
}

}  // namespace transavs
