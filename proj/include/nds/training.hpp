#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nds/models.hpp"
#include "nds/parallel.hpp"
#include "nds/window.hpp"

namespace nds::train {

/// Cuts every trajectory into overlapping (history + horizon)-step slices at
/// the given stride. Trajectories shorter than one window are skipped.
std::vector<Window> make_windows(const sys::Dataset& ds, int history = 32, int horizon = 16,
                                 int stride = 16);

/// Squared-error rollout loss: sum over the horizon of the squared distance
/// between predicted and target states (a sum, not a mean).
double rollout_loss(std::span<const double> predicted, std::span<const double> target, int n,
                    int horizon);

// ---- optimizer -------------------------------------------------------------------

struct AdamConfig {
    double lr = 3e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m, v;
    long step = 0;
    void init(std::size_t size) {
        m.assign(size, 0.0);
        v.assign(size, 0.0);
        step = 0;
    }
};

/// Standard bias-corrected Adam update. A non-finite gradient rejects the
/// step (parameters and state untouched) and returns false.
bool adam_step(ad::ParamVector& params, const std::vector<double>& grad, AdamState& state,
               const AdamConfig& cfg);

// ---- batched gradients --------------------------------------------------------------

struct BatchResult {
    double mean_loss = 0.0;
    std::vector<double> grad;  // mean over successful windows
    int failures = 0;
};

/// Mean loss and gradient over a batch of windows. Per-window work runs under
/// the policy (serial or OpenMP); the reduction is serial in window order, so
/// results are bitwise identical for any worker count.
BatchResult batch_gradient(const model::NdsModel& model, const std::vector<Window>& windows,
                           std::span<const std::size_t> batch, const ExecPolicy& policy);

// ---- training loop ----------------------------------------------------------------

struct TrainConfig {
    double lr = 3e-3;
    int batch_size = 32;
    int max_epochs = 12;
    int patience = 3;
    std::uint64_t seed = 0;
    ExecPolicy policy;
    bool record_param_metric = true;
};

struct EpochStats {
    double train_loss = 0.0;
    double val_loss = 0.0;
    double param_l2 = 0.0;
    bool has_param_l2 = false;
    int rejected_steps = 0;
};

struct TrainHistory {
    double initial_val_loss = 0.0;
    double initial_param_l2 = 0.0;
    bool has_initial_param_l2 = false;
    std::vector<EpochStats> epochs;
    int best_epoch = 0;  // 0 = untrained
    double best_val_loss = 0.0;
};

/// Adam + early stopping (halt after `patience` epochs without validation
/// improvement); returns with the best-validation weights restored.
TrainHistory train(model::NdsModel& model, const std::vector<Window>& train_windows,
                   const std::vector<Window>& val_windows, const TrainConfig& cfg);

// ---- evaluation -----------------------------------------------------------------------

struct EvalResult {
    double rollout_l2 = 0.0;  // mean over windows of the per-window loss sum
    double param_l2 = 0.0;    // mean squared parameter distance, when exposed
    bool has_param_l2 = false;
    std::size_t windows = 0;
};

EvalResult evaluate(const model::NdsModel& model, const std::vector<Window>& windows,
                    const ExecPolicy& policy);

// ---- reports ----------------------------------------------------------------------------

struct FitReport {
    std::string method;
    std::string system;
    int n_train = 0;
    double fraction = 1.0;
    std::uint64_t seed = 0;
    double corruption_r = 0.0;
    double corruption_j = 0.0;
    double test_l2 = 0.0;
    double param_l2 = 0.0;
    bool has_param_l2 = false;
    int epochs = 0;
    double wall_time_s = 0.0;
};

void write_metrics_csv(const std::string& path, const std::vector<FitReport>& reports,
                       bool append);
std::vector<FitReport> read_metrics_csv(const std::string& path);

void write_loss_curve_csv(const std::string& path, const TrainHistory& history);

/// Standard experiment configurations by method name: full_nds, partial_nds,
/// nds0, fc_node, fc.
model::NdsConfig method_config(const std::string& method);
bool is_network_method(const std::string& method);

/// Deterministic per-seed trajectory subset: the first ceil(fraction * N) of
/// a seed-shuffled ordering. fraction 1 keeps every trajectory exactly once.
std::vector<std::size_t> subset_indices(std::size_t total, double fraction, std::uint64_t seed);

}  // namespace nds::train
