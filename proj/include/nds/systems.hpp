#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "nds/ode.hpp"
#include "nds/parallel.hpp"
#include "nds/rng.hpp"
#include "nds/tape.hpp"
#include "nds/trajectory.hpp"

namespace nds::sys {

inline constexpr double kGravity = 9.8;  // m/s^2

// Tokamak surrogate constants: deuterium ion density, ion mass, major radius.
inline constexpr double kIonDensity = 5e19;      // m^-3
inline constexpr double kIonMass = 3.3436e-27;   // kg
inline constexpr double kMajorRadius = 1.67;     // m
inline constexpr double kTorqueDenom = kIonDensity * kIonMass * kMajorRadius;

/// A parameterized ODE family: right-hand side, sampling ranges, control
/// generator, and the component mask used by Partial-mode models.
struct SystemSpec {
    std::string name;
    int state_dim = 0;
    int control_dim = 0;
    int param_dim = 0;
    std::vector<std::pair<double, double>> param_ranges;  // squash + fit bounds
    std::vector<std::pair<double, double>> ic_ranges;
    /// Which component equations count as "known" in Partial mode.
    std::vector<bool> partial_known_mask;
    double dt_output = 0.5;

    /// dxdt = f(phi, t, x, u). Deterministic for fixed inputs.
    std::function<void(const double* phi, double t, const double* x, const double* u,
                       double* dxdt)>
        rhs;

    /// Draws the hidden parameter vector. Usually uniform over param_ranges;
    /// the ballistic family samples (m, c_d) and derives terminal velocity.
    std::function<std::vector<double>(Rng&)> sample_params;

    /// Produces the control sequence for the given sample times (may be empty
    /// when control_dim == 0).
    std::function<std::vector<double>(Rng&, const std::vector<double>& times)> control_generator;

    /// Records the prior-knowledge derivative g_phi(x, u, t) on the tape.
    /// Components where mask[i] is false contribute an exact zero. mask may be
    /// null (all known). Arithmetic mirrors rhs exactly.
    std::function<ad::NodeId(ad::Tape&, ad::NodeId phi, ad::NodeId x, const double* u, double t,
                             const std::vector<bool>* mask)>
        prior_tape;

    /// Value-lane twin of prior_tape (used by inference-only rollouts).
    std::function<void(const double* phi, double t, const double* x, const double* u,
                       const std::vector<bool>* mask, double* dxdt)>
        prior_value;

    ode::Rhs bind_rhs(const double* phi) const {
        return [this, phi](double t, const double* x, const double* u, double* dxdt) {
            rhs(phi, t, x, u, dxdt);
        };
    }
};

SystemSpec lorenz_spec();
SystemSpec ballistic_spec();
SystemSpec cartpole_spec();
SystemSpec fusion_spec();

/// Lookup by name: lorenz | ballistic | cartpole | fusion.
const SystemSpec& system_by_name(const std::string& name);

// ---- individual right-hand sides (exposed for direct tests) -----------------

void lorenz_rhs(const double* phi, const double* x, double* dxdt);
void ballistic_rhs(const double* phi, const double* x, double* dxdt);
void cartpole_rhs(const double* phi, const double* x, double force, double* dxdt);
void fusion_rhs(const double* phi, const double* x, const double* u, double* dxdt);

// ---- sampling and generation -------------------------------------------------

struct Instance {
    std::vector<double> params;
    std::vector<double> x0;
    std::vector<double> controls;  // T x m
};

/// Draws (phi, x0, controls) for one trajectory. phi stays fixed across the
/// trajectory. Draw order is fixed: params, then ICs, then controls.
Instance sample_instance(const SystemSpec& spec, Rng& rng, const std::vector<double>& times);

/// Integrates the family at generation accuracy (DOPRI5, rtol=atol=1e-9) to
/// the given times.
Trajectory generate_trajectory(const SystemSpec& spec, const std::vector<double>& params,
                               const std::vector<double>& x0, const std::vector<double>& controls,
                               const std::vector<double>& times);

struct GenerateOptions {
    int trajectory_len = 48;
    double jitter = 0.0;  // seconds; sample times are perturbed before integration
};

/// Generates `count` trajectories with ids [first_id, first_id+count). Each
/// trajectory owns the RNG stream derived from (seed, id), so results are
/// reproducible and independent of scheduling.
std::vector<Trajectory> generate_batch(const SystemSpec& spec, std::uint64_t seed,
                                       std::uint64_t first_id, int count,
                                       const GenerateOptions& opts, const ExecPolicy& policy);

// ---- corruption ---------------------------------------------------------------

enum class NoiseConvention {
    StdDev,   // noise sigma_i = r * c_i (default reading of the corruption rule)
    Variance  // noise sigma_i = sqrt(r * c_i)
};

struct CorruptionConfig {
    double relative_noise = 0.0;  // r >= 0
    double jitter = 0.0;          // j >= 0 seconds
    NoiseConvention convention = NoiseConvention::StdDev;
    std::vector<double> rms_scales;  // c_i, one per state component
};

/// Per-component RMS over exactly `count` clean trajectories of the family,
/// pooled across samples.
std::vector<double> compute_rms_scales(const SystemSpec& spec, std::uint64_t seed, int count,
                                       int trajectory_len);

/// Pooled per-component RMS of an existing batch.
std::vector<double> rms_scales_from(const std::vector<Trajectory>& batch, int state_dim);

/// Adds N(0, sigma_i) noise to every state sample, sigma_i from the
/// convention above. r = 0 leaves the batch untouched. Unbiased by
/// construction.
void add_noise(std::vector<Trajectory>& batch, double r, const CorruptionConfig& cfg, Rng& rng);

/// Perturbs sample times i >= 1 by U(-j, j); the initial time stays pinned at
/// the trajectory start where x0 is defined. Throws if the perturbed grid is
/// not strictly increasing.
std::vector<double> jitter_times(const std::vector<double>& times, double j, Rng& rng);

/// Uniform output grid {0, dt, ..., (len-1) dt}.
std::vector<double> uniform_times(double dt, int len);

}  // namespace nds::sys
