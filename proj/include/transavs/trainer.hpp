#pragma once

#include "transavs/losses.hpp"
#include "transavs/model.hpp"
#include "transavs/synth.hpp"
#include "transavs/tavs_io.hpp"

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace transavs {

struct TrainConfig {
    ModelConfig model;
    LossConfig loss;
    double base_lr = 1e-4;
    double encoder_lr_multiplier = 0.1;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip_norm = 0.0;  // global L2 clip before the update; 0 disables
    double lr_poly_power = 0.0;   // lr × (1 − it/max_iterations)^power; 0 keeps lr constant
    std::size_t batch_size = 4;
    std::size_t max_iterations = 2000;
    std::size_t checkpoint_every = 500;
    std::uint64_t seed = 0;
    bool s4_first_frame_only = false;
    std::string data;                  // manifest path
    std::string out_dir = "run";
    std::string eval_split = "valid";  // evaluated after training; "none" skips
    std::size_t threads = 1;

    void validate() const;  // throws UsageError
};

/// Learning-rate factor applied at an iteration.
double lr_factor(std::size_t iteration, const TrainConfig& cfg);

/// Decoupled-weight-decay Adam. Each parameter's step is scaled by its group
/// learning rate; backbone parameters use base_lr × encoder_lr_multiplier.
class AdamW {
  public:
    AdamW(std::vector<ParamRef> params, const TrainConfig& cfg);

    /// p ← p − lr·wd·p, then p ← p − lr·m̂ / (√v̂ + ε).
    void step(const std::vector<std::vector<double>>& grads, double lr_scale = 1.0);

    std::size_t steps() const { return steps_; }
    double effective_lr(std::size_t index) const { return slots_.at(index).lr; }
    const std::vector<double>& first_moment(std::size_t index) const { return slots_.at(index).m; }
    const std::vector<double>& second_moment(std::size_t index) const { return slots_.at(index).v; }
    const std::vector<ParamRef>& params() const { return params_; }

    void save_state(std::vector<NamedTensor>& out) const;
    void load_state(const std::vector<NamedTensor>& in);

  private:
    struct Slot {
        std::vector<double> m, v;
        double lr = 0.0;
    };
    std::vector<ParamRef> params_;
    std::vector<Slot> slots_;
    double beta1_, beta2_, eps_, weight_decay_;
    std::size_t steps_ = 0;
};

struct StepMetrics {
    std::size_t iteration = 0;  // updates completed after this step
    double loss = 0.0, aqdl = 0.0, aqml = 0.0, cls = 0.0, dice = 0.0;
    double delta1 = 0.0, delta2 = 0.0;
    double grad_norm = 0.0;  // before clipping
};

class NonFiniteLoss : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Loss of one clip averaged over its supervised frames, plus the scalar
/// components for logging.
struct ClipLoss {
    Tensor total;
    StepMetrics parts;
};
ClipLoss clip_loss(const TransAVS& model, const synth::SceneClip& clip, const TrainConfig& cfg,
                   std::size_t iteration);

/// Mean gradient of the batch loss, one buffer per parameter in
/// TransAVS::parameters() order. Samples are reduced in batch order so the
/// result does not depend on the worker count.
std::vector<std::vector<double>> batch_gradients(const TransAVS& model, std::span<const synth::SceneClip* const> batch,
                                                 const TrainConfig& cfg, std::size_t iteration,
                                                 StepMetrics& metrics);

/// forward → loss at δ(iteration) → backward → AdamW update. `iteration` is
/// the number of updates completed before this step.
StepMetrics train_step(TransAVS& model, AdamW& opt, std::span<const synth::SceneClip* const> batch,
                       const TrainConfig& cfg, std::size_t iteration);

/// Indices of the training clips used at `iteration`: epoch-wise shuffles
/// derived from (seed, epoch), so any iteration can be reproduced without
/// replaying earlier ones.
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t iteration, std::size_t batch_size,
                                       std::size_t n_train);

void save_checkpoint(const std::filesystem::path& path, const TransAVS& model, const AdamW& opt);
/// Restores parameters and optimizer state; returns the completed iteration.
std::size_t load_checkpoint(const std::filesystem::path& path, TransAVS& model, AdamW& opt);
TransAVS load_model(const std::filesystem::path& path);

std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, std::size_t iteration);

struct FitResult {
    std::filesystem::path final_checkpoint;
    std::size_t iterations = 0;
    double mean_j = -1.0, mean_f = -1.0;  // held-out metrics when eval_split is set
};

/// Trains from scratch, or continues from `resume` with an identical
/// continuation. Writes config.txt, loss.csv, checkpoints/iter_XXXXXX.tavs
/// and, when eval_split is set, metrics.csv and summary.txt.
FitResult fit(const TrainConfig& cfg, const std::filesystem::path& resume = {},
              const std::vector<synth::SceneClip>* preloaded_train = nullptr);

/// Keeps freed gradient buffers in the heap instead of returning them to the
/// OS each step. Call once at program start.
void tune_allocator();

}  // namespace transavs
