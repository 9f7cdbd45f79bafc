#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sumix/data.hpp"
#include "sumix/sumix.hpp"

namespace sumix {

struct TrainConfig {
    EncoderConfig encoder;  // num_classes and input dims are taken from the dataset
    long unc_dim = 16;      // uncertainty head width m
    MixConfig mix;
    LossMode mode = LossMode::full_su;
    double zeta = 0.5;

    long epochs = 50;
    long batch_size = 100;
    double base_lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::uint64_t seed = 0;
    long eval_interval = 10;        // epochs between held-out evals; 0 disables
    bool augment = true;
    // Checkpoint and return after this many epochs of the current
    // invocation (0 = run to completion). Invocation-scoped, like the
    // paths below: not part of the run definition a checkpoint stores.
    long halt_after = 0;
    std::string checkpoint_path;    // empty: no checkpoints written
    std::string metrics_path;       // empty: metrics kept in memory only

    void validate() const;
};

// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v.
// All gradients are checked finite before any parameter moves.
class SGD {
public:
    SGD(std::vector<NamedParam*> params, double momentum, double weight_decay);

    void zero_grad();
    void step(double lr);  // throws NumericalError on non-finite gradients

    // velocity slots by parameter name, for checkpoints
    std::vector<std::pair<std::string, Tensor*>> velocities();

private:
    struct Slot {
        NamedParam* param;
        Tensor velocity;
    };
    std::vector<Slot> slots_;
    double momentum_, weight_decay_;
};

// Single cosine decay, no restarts: 0.5*base*(1 + cos(pi*step/total)).
double cosine_lr(long step, long total_steps, double base_lr);

struct TrainResult {
    std::vector<std::string> metrics;   // emitted stream lines, in order
    std::vector<double> eval_accuracy;  // one entry per periodic eval
    double final_train_accuracy = 0.0;
    double final_eval_accuracy = 0.0;
    double mean_abs_lam_shift = 0.0;    // mean |lam_tilde_a - lam| over recomputing steps
    long steps = 0;

    std::unique_ptr<Encoder> model;
    std::unique_ptr<UncertaintyHead> head;
};

// Full loop: per step draw batch -> augment -> mix -> sumix loss ->
// backward -> sgd. Deterministic per seed; all per-(epoch,batch)
// randomness is derived, so resuming from an epoch-boundary checkpoint
// continues bit-identically. A diverged loss (non-finite or absurdly
// large) or a non-finite gradient saves the last state (when a
// checkpoint path is set) and raises NumericalError. eval_set may be
// empty to skip evaluation.
TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& eval_set,
                  const std::string& resume_from = "");

// Serialize / restore the full training state (parameters, normalization
// buffers, optimizer velocities, config echo, epoch bookkeeping).
void save_train_checkpoint(const std::string& path, const TrainConfig& config, Encoder& model,
                           UncertaintyHead& head, SGD& sgd, long epochs_done, long steps_done,
                           const std::vector<double>& norm_mean,
                           const std::vector<double>& norm_stdev);

struct LoadedCheckpoint {
    TrainConfig config;
    long epochs_done = 0;
    long steps_done = 0;
    std::vector<double> norm_mean, norm_stdev;
    std::unique_ptr<Encoder> model;
    std::unique_ptr<UncertaintyHead> head;
};

// Rebuild model and head from a checkpoint (velocities are restored by
// train() when resuming).
LoadedCheckpoint load_train_checkpoint(const std::string& path);

}  // namespace sumix
