#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nds/mlp.hpp"
#include "nds/ode.hpp"
#include "nds/systems.hpp"
#include "nds/window.hpp"

namespace nds::model {

/// Model family members:
///  - Full:     known equations with encoder-estimated parameters plus a
///              learned residual on every component.
///  - Partial:  Full with the unknown component equations zeroed out.
///  - Nds0:     physics only; the residual head is absent.
///  - Node:     no physics; the learned residual is the whole vector field.
///  - FcDirect: one feedforward pass from the flattened window to the 16
///              predicted states, no integration.
enum class Mode { Full, Partial, Nds0, Node, FcDirect };

Mode mode_from_name(const std::string& name);
const char* mode_name(Mode mode);

struct NdsConfig {
    Mode mode = Mode::Full;
    int history_len = 32;
    int horizon = 16;
    int d_h = 16;  // history embedding width (0 drops the embedding)
    int d_c = 16;  // context embedding width
    std::vector<int> encoder_hidden{64, 64};
    std::vector<int> context_hidden{64, 64};
    std::vector<int> residual_hidden{64, 64};
    std::vector<int> fc_hidden{128, 128, 128, 128};
    ad::Act encoder_act = ad::Act::Softplus;
    ad::Act ode_act = ad::Act::Softplus;
    ad::Act fc_act = ad::Act::Relu;
    ode::SolveConfig solver = ode::SolveConfig::rk4(8, 0.5);
};

/// Fixed input standardization, computed from the training split once and
/// frozen into the model artifact. Inverse scales are stored so both lanes
/// multiply rather than divide.
struct Standardization {
    std::vector<double> state_mean, state_inv_std;
    std::vector<double> ctrl_mean, ctrl_inv_std;
};

struct NdsModel {
    sys::SystemSpec spec;
    NdsConfig cfg;
    ad::ParamVector params;
    Standardization stdz;

    bool has_history = false;
    bool has_residual = false;
    bool has_fc = false;
    ad::MlpSlices h_enc;  // history encoder: (x_{1:T'}, u_{1:T}) -> (phi_raw, b_h)
    ad::MlpSlices c_enc;  // context encoder: (x_t, u_t) -> b_c
    ad::MlpSlices d_res;  // residual head:   (b_h, b_c) -> r
    ad::MlpSlices fc;     // direct sequence regressor

    std::vector<double> param_lo, param_width;  // squash constants

    bool exposes_params() const { return has_history; }
    bool is_ode_model() const { return cfg.mode != Mode::FcDirect; }
};

/// Builds layout, draws initial weights (seeded), standardization = identity.
NdsModel make_model(const sys::SystemSpec& spec, const NdsConfig& cfg, std::uint64_t seed);

/// Mean/std per state and control component, pooled over all samples.
Standardization compute_standardization(const std::vector<sys::Trajectory>& trajectories,
                                        int state_dim, int control_dim);

// ---- tape lane (training) -----------------------------------------------------

struct Encoded {
    ad::NodeId phi = -1;  // squashed into param ranges
    ad::NodeId b_h = -1;  // -1 when the model has no history embedding
};

/// Runs the history encoder on a window. phi lies strictly inside the
/// family's parameter ranges for any weights (range-scaled sigmoid squash).
Encoded encode_history_tape(ad::Tape& tape, const NdsModel& model, const train::Window& window);

/// dxdt node for the model at (x, u, t) given the per-window encodings.
ad::NodeId nds_rhs_tape(ad::Tape& tape, const NdsModel& model, const Encoded& enc, ad::NodeId x,
                        const double* u, double t);

struct RolloutOptions {
    /// Bypasses the encoder and pins the physics parameters (oracle probes).
    std::optional<std::vector<double>> fixed_params;
};

struct TapeRollout {
    std::vector<ad::NodeId> states;  // horizon nodes, each n wide
    ad::NodeId loss = -1;            // sum over steps of squared error vs targets
    Encoded enc;
};

/// Differentiable rollout from the last observed state to the window's target
/// times; loss is the squared-error sum over the horizon.
TapeRollout rollout_tape(ad::Tape& tape, const NdsModel& model, const train::Window& window,
                         const RolloutOptions& opts = {});

// ---- value lane (inference; mirrors the tape arithmetic bitwise) ---------------

struct ValueScratch {
    ad::MlpScratch enc_scratch, ctx_scratch, res_scratch, fc_scratch;
    std::vector<double> raw, std_x, std_u, ctx_in, b_c, res_in, residual, prior, input;
};

struct EncodedValue {
    std::vector<double> phi;
    std::vector<double> b_h;
};

EncodedValue encode_history_value(const NdsModel& model, const double* hist_states,
                                  const double* controls, ValueScratch& scratch);

/// RHS evaluation for inference-only rollouts.
void nds_rhs_value(const NdsModel& model, const EncodedValue& enc, double t, const double* x,
                   const double* u, double* dxdt, ValueScratch& scratch);

/// Integrates the model from x0 at t0 to the given times (RK4, same substep
/// schedule as the tape lane). Controls resolved by zero-order hold.
void rollout_value(const NdsModel& model, const EncodedValue& enc, const double* x0, double t0,
                   const std::vector<double>& times, const ode::ControlSignal* control,
                   std::vector<double>& out_states, ValueScratch& scratch);

/// Full window prediction in the value lane (encode + rollout, or FC pass).
std::vector<double> predict_window(const NdsModel& model, const train::Window& window,
                                   ValueScratch& scratch);

/// Encoder output for reporting: squashed parameter estimate.
std::vector<double> estimate_params(const NdsModel& model, const train::Window& window,
                                    ValueScratch& scratch);

// ---- direct feedforward baseline ------------------------------------------------

/// Input layout: standardized history states, standardized controls over the
/// full span, then time offsets. Output: flattened horizon x n prediction.
std::vector<double> build_fc_input(const NdsModel& model, const double* hist_states,
                                   const double* controls, const double* times);

ad::NodeId fc_direct_tape(ad::Tape& tape, const NdsModel& model, const train::Window& window);

std::vector<double> fc_direct_value(const NdsModel& model, const double* hist_states,
                                    const double* controls, const double* times,
                                    ValueScratch& scratch);

// ---- artifact io -----------------------------------------------------------------

void save_model(const std::string& path, const NdsModel& model);
NdsModel load_model(const std::string& path);

}  // namespace nds::model
