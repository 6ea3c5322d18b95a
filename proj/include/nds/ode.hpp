#pragma once

#include <functional>
#include <span>
#include <vector>

#include "nds/control_signal.hpp"
#include "nds/tape.hpp"

namespace nds::ode {

/// Right-hand side f(t, x, u) -> dxdt. u may be null when the system has no
/// control input.
using Rhs = std::function<void(double t, const double* x, const double* u, double* dxdt)>;

struct OdeProblem {
    Rhs rhs;
    std::vector<double> x0;
    double t0 = 0.0;
    const ControlSignal* control = nullptr;  // may be null
};

enum class Method { Rk4Fixed, Dopri5Adaptive };

struct SolveConfig {
    Method method = Method::Rk4Fixed;
    /// Substeps per nominal output interval (fixed-step lane). Under jittered
    /// grids the substep count per interval scales with its length so the
    /// effective step never exceeds nominal_dt / substeps_per_output.
    int substeps_per_output = 8;
    double nominal_dt = 0.5;
    double rtol = 1e-3;
    double atol = 1e-3;

    static SolveConfig rk4(int substeps = 8, double nominal = 0.5) {
        SolveConfig c;
        c.method = Method::Rk4Fixed;
        c.substeps_per_output = substeps;
        c.nominal_dt = nominal;
        return c;
    }
    static SolveConfig dopri(double rtol, double atol) {
        SolveConfig c;
        c.method = Method::Dopri5Adaptive;
        c.rtol = rtol;
        c.atol = atol;
        return c;
    }
    /// Generation-grade accuracy: ground truth is solver-noise-free relative
    /// to the training tolerance.
    static SolveConfig generation() { return dopri(1e-9, 1e-9); }
};

/// Number of RK4 substeps used to cross an interval of length h.
int substeps_for_interval(double h, const SolveConfig& cfg);

/// One classical 4-stage Runge-Kutta step. u is held constant across the step.
void rk4_step(const Rhs& rhs, const double* x, const double* u, double t, double h, int n,
              double* out);

/// Integrates problem.rhs from (t0, x0) and returns the state at each
/// requested time. times must be strictly increasing with times[0] >= t0.
/// Throws on divergence (non-finite state, reporting the failure time) and,
/// for the adaptive method, on step underflow below 1e-8 s.
std::vector<std::vector<double>> integrate(const OdeProblem& problem,
                                           const std::vector<double>& times,
                                           const SolveConfig& cfg);

// ---- differentiable fixed-step lane ----------------------------------------

/// Builds dxdt as tape nodes from the current state node; control and time are
/// plain data resolved by the callback.
using TapeRhs = std::function<ad::NodeId(ad::Tape&, ad::NodeId x, double t)>;

/// RK4 step recorded on the tape. Mirrors rk4_step arithmetic exactly so the
/// two lanes agree bitwise.
ad::NodeId rk4_step_tape(ad::Tape& tape, const TapeRhs& rhs, ad::NodeId x, double t, double h);

/// Fixed-step RK4 to each output time, recorded on the tape; gradients w.r.t.
/// any weight used inside rhs flow through every substep.
std::vector<ad::NodeId> integrate_rk4_tape(ad::Tape& tape, const TapeRhs& rhs, ad::NodeId x0,
                                           double t0, const std::vector<double>& times,
                                           const SolveConfig& cfg);

/// Value-lane twin of integrate_rk4_tape (same substep schedule, same
/// arithmetic), for inference without gradient bookkeeping.
void integrate_rk4_value(const Rhs& rhs, std::span<const double> x0, double t0,
                         const std::vector<double>& times, const ControlSignal* control,
                         const SolveConfig& cfg, std::vector<double>& out_states);

}  // namespace nds::ode
