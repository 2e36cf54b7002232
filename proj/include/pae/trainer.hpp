#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pae/backbone.hpp"
#include "pae/config.hpp"
#include "pae/dataset.hpp"
#include "pae/koopman.hpp"
#include "pae/tensor.hpp"

namespace pae {

// Tuning-loop settings; field names match the flat config keys one-to-one.
struct TrainConfig {
    std::size_t img_h = 32, img_w = 32, patch = 4;
    std::size_t d = 32, heads = 4, layers = 4, classes = 8;
    std::size_t prompt_t = 4, k_dim = 16;
    double alpha = 0.5, beta = 0.2;
    double lr = 0.25, momentum = 0.9;
    std::size_t epochs = 100, batch = 64;
    std::uint64_t seed = 0;
    long long w = 8, r = 4;
    bool mpa_on = true, kp_on = true, stab_on = true;
    bool layerwise_k = false, copy_init = false;

    ArchConfig arch() const;
    void validate() const;
    // Rejects unknown keys; absent keys keep their defaults.
    static TrainConfig from_config(const Config& c);
    Config to_config() const;
};

struct StepRecord {
    std::size_t step = 0, epoch = 0;
    double lr = 0.0;
    double loss_task = 0.0, loss_kp = 0.0, loss_stab = 0.0, loss_total = 0.0;
    std::vector<double> prompt_grad_norms;  // Frobenius, one per layer
};

struct TrainTrace {
    std::vector<StepRecord> steps;
    std::vector<double> val_accuracy;  // percent, one per finished epoch
    double mpa_seconds = 0.0, train_seconds = 0.0;
    bool diverged = false;
    std::size_t divergence_step = 0;
};

struct LossBreakdown {
    double task = 0.0, kp = 0.0, stab = 0.0, total = 0.0;
};

// Everything the tuning loop updates; the backbone stays outside and frozen.
struct TunedModel {
    PromptStack prompts;  // L matrices, T×d
    Tensor head_w, head_b;
    KoopmanSystem system;
    std::vector<Tensor> layer_ops;  // L−1 operators when layer-wise, else empty
};

struct StepGradients {
    LossBreakdown loss;
    std::vector<Tensor> prompts;
    Tensor head_w, head_b;
    Tensor u, kop, a;  // zero when the owning term is inactive
    std::vector<Tensor> layer_ops;
};

struct TrainResult {
    TunedModel model;
    TrainTrace trace;
    double final_val_accuracy = 0.0;  // percent
    std::size_t best_epoch = 0;       // epochs_to_best of the val curve
};

// Task term plus weighted dynamics terms; every component is reported
// unweighted, total applies the weights.
LossBreakdown total_loss(const FrozenBackbone& bb, const TunedModel& m, const Dataset& batch,
                         double alpha, double beta);

// One optimizer step's worth of gradients (mean task term over the batch plus
// weighted dynamics terms); pass alpha/beta of 0 to disable a term entirely.
StepGradients compute_gradients(const FrozenBackbone& bb, const TunedModel& m,
                                const Dataset& batch, double alpha, double beta);

// Prompts via MPA or seeded random init, fresh head, identity-started system.
TunedModel init_model(const TrainConfig& cfg, const FrozenBackbone& bb, const Dataset& train,
                      double* mpa_seconds = nullptr);

TrainResult run_training(const TrainConfig& cfg, const FrozenBackbone& bb, const Dataset& train,
                         const Dataset& val);

// Top-1 accuracy in percent under deep prompting.
double accuracy(const FrozenBackbone& bb, const TunedModel& m, const Dataset& ds);

// First 1-based epoch whose accuracy is within 0.1 points of the best.
std::size_t epochs_to_best(const std::vector<double>& val_curve);
double speedup(const std::vector<double>& baseline, const std::vector<double>& treated);

// Mean over non-overlapping windows of the residual std after linear detrend.
double oscillation_score(const std::vector<double>& grad_norms, std::size_t window = 20);

void write_trace_csv(const std::string& path, const TrainTrace& trace, std::size_t layers);
void write_val_csv(const std::string& path, const std::vector<double>& val_curve);

void save_model(const std::string& dir, const TunedModel& m);
TunedModel load_model(const std::string& dir);

}  // namespace pae
