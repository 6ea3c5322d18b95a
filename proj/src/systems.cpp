#include "nds/systems.hpp"

#include <cmath>
#include <stdexcept>

namespace nds::sys {

namespace {

ad::NodeId masked(ad::Tape& tape, const std::vector<bool>* mask, int i,
                  const std::function<ad::NodeId()>& build) {
    if (mask && !(*mask)[static_cast<std::size_t>(i)]) return tape.constant1(0.0);
    return build();
}

}  // namespace

// ---- Lorenz ------------------------------------------------------------------

void lorenz_rhs(const double* phi, const double* x, double* dxdt) {
    const double rho = phi[0], sigma = phi[1], beta = phi[2];
    dxdt[0] = sigma * (x[1] - x[0]);
    dxdt[1] = x[0] * (rho - x[2]) - x[1];
    dxdt[2] = x[0] * x[1] - beta * x[2];
}

SystemSpec lorenz_spec() {
    SystemSpec s;
    s.name = "lorenz";
    s.state_dim = 3;
    s.control_dim = 0;
    s.param_dim = 3;
    s.param_ranges = {{15.0, 35.0}, {9.0, 12.0}, {1.0, 3.0}};  // rho, sigma, beta
    s.ic_ranges = {{0.0, 5.0}, {0.0, 5.0}, {0.0, 5.0}};
    s.partial_known_mask = {true, true, false};  // xdot, ydot known; zdot dropped
    s.dt_output = 0.5;
    s.rhs = [](const double* phi, double, const double* x, const double*, double* dxdt) {
        lorenz_rhs(phi, x, dxdt);
    };
    s.prior_value = [](const double* phi, double, const double* x, const double*,
                       const std::vector<bool>* mask, double* dxdt) {
        const double rho = phi[0], sigma = phi[1], beta = phi[2];
        dxdt[0] = (!mask || (*mask)[0]) ? sigma * (x[1] - x[0]) : 0.0;
        dxdt[1] = (!mask || (*mask)[1]) ? x[0] * (rho - x[2]) - x[1] : 0.0;
        dxdt[2] = (!mask || (*mask)[2]) ? x[0] * x[1] - beta * x[2] : 0.0;
    };
    s.prior_tape = [](ad::Tape& tape, ad::NodeId phi, ad::NodeId x, const double*, double,
                      const std::vector<bool>* mask) {
        const ad::NodeId rho = tape.slice(phi, 0, 1);
        const ad::NodeId sigma = tape.slice(phi, 1, 1);
        const ad::NodeId beta = tape.slice(phi, 2, 1);
        const ad::NodeId xx = tape.slice(x, 0, 1);
        const ad::NodeId yy = tape.slice(x, 1, 1);
        const ad::NodeId zz = tape.slice(x, 2, 1);
        const ad::NodeId d0 =
            masked(tape, mask, 0, [&] { return tape.mul(sigma, tape.sub(yy, xx)); });
        const ad::NodeId d1 = masked(tape, mask, 1, [&] {
            return tape.sub(tape.mul(xx, tape.sub(rho, zz)), yy);
        });
        const ad::NodeId d2 = masked(tape, mask, 2, [&] {
            return tape.sub(tape.mul(xx, yy), tape.mul(beta, zz));
        });
        return tape.concat(tape.concat(d0, d1), d2);
    };
    s.sample_params = [](Rng& rng) {
        std::vector<double> phi(3);
        phi[0] = rng.uniform(15.0, 35.0);
        phi[1] = rng.uniform(9.0, 12.0);
        phi[2] = rng.uniform(1.0, 3.0);
        return phi;
    };
    s.control_generator = [](Rng&, const std::vector<double>&) { return std::vector<double>{}; };
    return s;
}

// ---- Ballistic -----------------------------------------------------------------

void ballistic_rhs(const double* phi, const double* x, double* dxdt) {
    const double vt = phi[0];
    if (!(vt > 0.0)) throw std::invalid_argument("ballistic: terminal velocity must be positive");
    dxdt[0] = x[1];
    dxdt[1] = -kGravity * (x[1] / vt);
    dxdt[2] = x[3];
    dxdt[3] = -kGravity * (1.0 + x[3] / vt);
}

SystemSpec ballistic_spec() {
    SystemSpec s;
    s.name = "ballistic";
    s.state_dim = 4;  // (x, xdot, y, ydot)
    s.control_dim = 0;
    s.param_dim = 1;  // terminal velocity v_t = m g / c_d
    s.param_ranges = {{1.0 * kGravity / 3.0, 100.0 * kGravity / 0.4}};
    s.ic_ranges = {{-100.0, 100.0}, {0.0, 100.0}, {0.0, 200.0}, {0.0, 100.0}};
    s.partial_known_mask = {true, true, false, false};  // horizontal equations kept
    s.dt_output = 0.5;
    s.rhs = [](const double* phi, double, const double* x, const double*, double* dxdt) {
        ballistic_rhs(phi, x, dxdt);
    };
    s.prior_value = [](const double* phi, double, const double* x, const double*,
                       const std::vector<bool>* mask, double* dxdt) {
        const double vt = phi[0];
        if (!(vt > 0.0))
            throw std::invalid_argument("ballistic: terminal velocity must be positive");
        dxdt[0] = (!mask || (*mask)[0]) ? x[1] : 0.0;
        dxdt[1] = (!mask || (*mask)[1]) ? -kGravity * (x[1] / vt) : 0.0;
        dxdt[2] = (!mask || (*mask)[2]) ? x[3] : 0.0;
        dxdt[3] = (!mask || (*mask)[3]) ? -kGravity * (1.0 + x[3] / vt) : 0.0;
    };
    s.prior_tape = [](ad::Tape& tape, ad::NodeId phi, ad::NodeId x, const double*, double,
                      const std::vector<bool>* mask) {
        const ad::NodeId vt = tape.slice(phi, 0, 1);
        const ad::NodeId vx = tape.slice(x, 1, 1);
        const ad::NodeId vy = tape.slice(x, 3, 1);
        const ad::NodeId d0 = masked(tape, mask, 0, [&] { return vx; });
        const ad::NodeId d1 =
            masked(tape, mask, 1, [&] { return tape.scale(tape.div(vx, vt), -kGravity); });
        const ad::NodeId d2 = masked(tape, mask, 2, [&] { return vy; });
        const ad::NodeId d3 = masked(tape, mask, 3, [&] {
            return tape.scale(tape.add(tape.constant1(1.0), tape.div(vy, vt)), -kGravity);
        });
        return tape.concat(tape.concat(tape.concat(d0, d1), d2), d3);
    };
    s.sample_params = [](Rng& rng) {
        const double m = rng.uniform(1.0, 100.0);
        const double cd = rng.uniform(0.4, 3.0);
        return std::vector<double>{m * kGravity / cd};
    };
    s.control_generator = [](Rng&, const std::vector<double>&) { return std::vector<double>{}; };
    return s;
}

// ---- Cartpole -------------------------------------------------------------------

void cartpole_rhs(const double* phi, const double* x, double force, double* dxdt) {
    const double l = phi[0], mc = phi[1], mp = phi[2];
    if (!(l > 0.0) || !(mc > 0.0) || !(mp > 0.0))
        throw std::invalid_argument("cartpole: length and masses must be positive");
    const double theta = x[2], theta_dot = x[3];
    const double total = mc + mp;
    const double st = std::sin(theta);
    const double ct = std::cos(theta);
    const double td2 = theta_dot * theta_dot;

    // theta_acc first, then x_acc uses it
    const double t1 = (mp * l) * (td2 * st);
    const double inner = (-force - t1) / total;
    const double theta_acc =
        (kGravity * st + ct * inner) / (l * (4.0 / 3.0 - (mp * (ct * ct)) / total));
    const double x_acc = (force + (mp * l) * (td2 * st - theta_acc * ct)) / total;

    dxdt[0] = x[1];
    dxdt[1] = x_acc;
    dxdt[2] = theta_dot;
    dxdt[3] = theta_acc;
}

SystemSpec cartpole_spec() {
    SystemSpec s;
    s.name = "cartpole";
    s.state_dim = 4;  // (x, xdot, theta, theta_dot)
    s.control_dim = 1;
    s.param_dim = 3;  // (l, m_c, m_p)
    s.param_ranges = {{0.6, 1.2}, {0.5, 2.0}, {0.03, 0.2}};
    s.ic_ranges = {{-2.0, 2.0}, {-1.0, 1.0}, {-0.2, 0.2}, {-0.1, 0.1}};  // training draws
    s.partial_known_mask = {false, false, true, true};  // pole equations kept
    s.dt_output = 0.02;
    s.rhs = [](const double* phi, double, const double* x, const double* u, double* dxdt) {
        cartpole_rhs(phi, x, u ? u[0] : 0.0, dxdt);
    };
    s.prior_value = [](const double* phi, double, const double* x, const double* u,
                       const std::vector<bool>* mask, double* dxdt) {
        double full[4];
        cartpole_rhs(phi, x, u ? u[0] : 0.0, full);
        for (int i = 0; i < 4; ++i) dxdt[i] = (!mask || (*mask)[static_cast<std::size_t>(i)]) ? full[i] : 0.0;
    };
    s.prior_tape = [](ad::Tape& tape, ad::NodeId phi, ad::NodeId x, const double* u, double,
                      const std::vector<bool>* mask) {
        const double force = u ? u[0] : 0.0;
        const ad::NodeId l = tape.slice(phi, 0, 1);
        const ad::NodeId mc = tape.slice(phi, 1, 1);
        const ad::NodeId mp = tape.slice(phi, 2, 1);
        const ad::NodeId xdot = tape.slice(x, 1, 1);
        const ad::NodeId theta = tape.slice(x, 2, 1);
        const ad::NodeId theta_dot = tape.slice(x, 3, 1);

        const ad::NodeId total = tape.add(mc, mp);
        const ad::NodeId st = tape.sin(theta);
        const ad::NodeId ct = tape.cos(theta);
        const ad::NodeId td2 = tape.square(theta_dot);

        const ad::NodeId t1 = tape.mul(tape.mul(mp, l), tape.mul(td2, st));
        const ad::NodeId inner = tape.div(tape.sub(tape.constant1(-force), t1), total);
        const ad::NodeId theta_acc = tape.div(
            tape.add(tape.scale(st, kGravity), tape.mul(ct, inner)),
            tape.mul(l, tape.sub(tape.constant1(4.0 / 3.0),
                                 tape.div(tape.mul(mp, tape.square(ct)), total))));
        const ad::NodeId x_acc = tape.div(
            tape.add(tape.constant1(force),
                     tape.mul(tape.mul(mp, l),
                              tape.sub(tape.mul(td2, st), tape.mul(theta_acc, ct)))),
            total);

        const ad::NodeId d0 = masked(tape, mask, 0, [&] { return xdot; });
        const ad::NodeId d1 = masked(tape, mask, 1, [&] { return x_acc; });
        const ad::NodeId d2 = masked(tape, mask, 2, [&] { return theta_dot; });
        const ad::NodeId d3 = masked(tape, mask, 3, [&] { return theta_acc; });
        return tape.concat(tape.concat(tape.concat(d0, d1), d2), d3);
    };
    s.sample_params = [](Rng& rng) {
        std::vector<double> phi(3);
        phi[0] = rng.uniform(0.6, 1.2);
        phi[1] = rng.uniform(0.5, 2.0);
        phi[2] = rng.uniform(0.03, 0.2);
        return phi;
    };
    s.control_generator = [](Rng& rng, const std::vector<double>& times) {
        std::vector<double> u(times.size());
        for (auto& v : u) v = rng.coin() ? 10.0 : -10.0;
        return u;
    };
    return s;
}

// ---- Fusion surrogate -------------------------------------------------------------

void fusion_rhs(const double* phi, const double* x, const double* u, double* dxdt) {
    const double tau_e = phi[0], tau_m = phi[1];
    if (!(tau_e > 0.0) || !(tau_m > 0.0))
        throw std::invalid_argument("fusion: confinement times must be positive");
    const double power = u ? u[0] : 0.0;
    const double torque = u ? u[1] : 0.0;
    dxdt[0] = power - x[0] / tau_e;
    dxdt[1] = torque / kTorqueDenom - x[1] / tau_m;
}

namespace {

// Clipped, lightly smoothed random walk in [0, peak].
std::vector<double> control_walk(Rng& rng, std::size_t len, double peak) {
    std::vector<double> w(len);
    double v = rng.uniform(0.25, 0.75) * peak;
    for (std::size_t i = 0; i < len; ++i) {
        w[i] = v;
        v += rng.normal(0.0, 0.05 * peak);
        v = std::min(peak, std::max(0.0, v));
    }
    std::vector<double> sm(len);
    for (std::size_t i = 0; i < len; ++i) {
        const double a = w[i > 0 ? i - 1 : 0];
        const double b = w[i];
        const double c = w[i + 1 < len ? i + 1 : len - 1];
        sm[i] = (a + b + c) / 3.0;
    }
    return sm;
}

}  // namespace

SystemSpec fusion_spec() {
    SystemSpec s;
    s.name = "fusion";
    s.state_dim = 2;   // (E, omega)
    s.control_dim = 2; // (P, Tq)
    s.param_dim = 2;   // (tau_e, tau_m)
    s.param_ranges = {{0.05, 0.3}, {0.05, 0.3}};  // brackets the nominal 0.1 s
    s.ic_ranges = {{0.0, 1.5e6}, {0.0, 2e5}};
    s.partial_known_mask = {true, false};
    s.dt_output = 0.5;
    s.rhs = [](const double* phi, double, const double* x, const double* u, double* dxdt) {
        fusion_rhs(phi, x, u, dxdt);
    };
    s.prior_value = [](const double* phi, double, const double* x, const double* u,
                       const std::vector<bool>* mask, double* dxdt) {
        const double tau_e = phi[0], tau_m = phi[1];
        if (!(tau_e > 0.0) || !(tau_m > 0.0))
            throw std::invalid_argument("fusion: confinement times must be positive");
        const double power = u ? u[0] : 0.0;
        const double torque = u ? u[1] : 0.0;
        dxdt[0] = (!mask || (*mask)[0]) ? power - x[0] / tau_e : 0.0;
        dxdt[1] = (!mask || (*mask)[1]) ? torque / kTorqueDenom - x[1] / tau_m : 0.0;
    };
    s.prior_tape = [](ad::Tape& tape, ad::NodeId phi, ad::NodeId x, const double* u, double,
                      const std::vector<bool>* mask) {
        const double power = u ? u[0] : 0.0;
        const double torque = u ? u[1] : 0.0;
        const ad::NodeId tau_e = tape.slice(phi, 0, 1);
        const ad::NodeId tau_m = tape.slice(phi, 1, 1);
        const ad::NodeId energy = tape.slice(x, 0, 1);
        const ad::NodeId omega = tape.slice(x, 1, 1);
        const ad::NodeId d0 = masked(tape, mask, 0, [&] {
            return tape.sub(tape.constant1(power), tape.div(energy, tau_e));
        });
        const ad::NodeId d1 = masked(tape, mask, 1, [&] {
            return tape.sub(tape.constant1(torque / kTorqueDenom), tape.div(omega, tau_m));
        });
        return tape.concat(d0, d1);
    };
    s.sample_params = [](Rng& rng) {
        std::vector<double> phi(2);
        phi[0] = rng.uniform(0.05, 0.3);
        phi[1] = rng.uniform(0.05, 0.3);
        return phi;
    };
    s.control_generator = [](Rng& rng, const std::vector<double>& times) {
        const std::size_t len = times.size();
        const std::vector<double> p = control_walk(rng, len, 5e6);
        const std::vector<double> tq = control_walk(rng, len, 5.0);
        std::vector<double> u(len * 2);
        for (std::size_t i = 0; i < len; ++i) {
            u[2 * i] = p[i];
            u[2 * i + 1] = tq[i];
        }
        return u;
    };
    return s;
}

const SystemSpec& system_by_name(const std::string& name) {
    static const SystemSpec lorenz = lorenz_spec();
    static const SystemSpec ballistic = ballistic_spec();
    static const SystemSpec cartpole = cartpole_spec();
    static const SystemSpec fusion = fusion_spec();
    if (name == "lorenz") return lorenz;
    if (name == "ballistic") return ballistic;
    if (name == "cartpole") return cartpole;
    if (name == "fusion") return fusion;
    throw std::invalid_argument("unknown system: " + name);
}

// ---- sampling / generation ----------------------------------------------------

std::vector<double> uniform_times(double dt, int len) {
    std::vector<double> t(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) t[static_cast<std::size_t>(i)] = dt * static_cast<double>(i);
    return t;
}

Instance sample_instance(const SystemSpec& spec, Rng& rng, const std::vector<double>& times) {
    Instance inst;
    inst.params = spec.sample_params(rng);
    inst.x0.resize(static_cast<std::size_t>(spec.state_dim));
    for (int i = 0; i < spec.state_dim; ++i) {
        const auto& [lo, hi] = spec.ic_ranges[static_cast<std::size_t>(i)];
        inst.x0[static_cast<std::size_t>(i)] = rng.uniform(lo, hi);
    }
    inst.controls = spec.control_generator(rng, times);
    return inst;
}

Trajectory generate_trajectory(const SystemSpec& spec, const std::vector<double>& params,
                               const std::vector<double>& x0, const std::vector<double>& controls,
                               const std::vector<double>& times) {
    ode::ControlSignal signal;
    if (spec.control_dim > 0)
        signal = ode::ControlSignal(times, controls, spec.control_dim);

    ode::OdeProblem problem;
    problem.rhs = spec.bind_rhs(params.data());
    problem.x0 = x0;
    problem.t0 = times.front();
    problem.control = spec.control_dim > 0 ? &signal : nullptr;

    const auto states = ode::integrate(problem, times, ode::SolveConfig::generation());

    Trajectory traj;
    traj.times = times;
    traj.params = params;
    traj.controls = controls;
    traj.states.resize(times.size() * static_cast<std::size_t>(spec.state_dim));
    for (std::size_t k = 0; k < states.size(); ++k)
        for (int i = 0; i < spec.state_dim; ++i)
            traj.states[k * static_cast<std::size_t>(spec.state_dim) + static_cast<std::size_t>(i)] =
                states[k][static_cast<std::size_t>(i)];
    return traj;
}

std::vector<double> jitter_times(const std::vector<double>& times, double j, Rng& rng) {
    if (j < 0.0) throw std::invalid_argument("jitter_times: j must be nonnegative");
    std::vector<double> out = times;
    if (j == 0.0) return out;
    for (std::size_t i = 1; i < out.size(); ++i) out[i] = times[i] + rng.uniform(-j, j);
    for (std::size_t i = 1; i < out.size(); ++i)
        if (!(out[i] > out[i - 1]))
            throw std::runtime_error("jitter_times: perturbed grid not strictly increasing");
    return out;
}

std::vector<Trajectory> generate_batch(const SystemSpec& spec, std::uint64_t seed,
                                       std::uint64_t first_id, int count,
                                       const GenerateOptions& opts, const ExecPolicy& policy) {
    std::vector<Trajectory> out(static_cast<std::size_t>(count));
    parallel_for(static_cast<std::size_t>(count), policy, [&](std::size_t k) {
        const std::uint64_t id = first_id + k;
        Rng rng(seed, id);
        std::vector<double> times = uniform_times(spec.dt_output, opts.trajectory_len);
        Instance inst = sample_instance(spec, rng, times);
        if (opts.jitter > 0.0) times = jitter_times(times, opts.jitter, rng);
        Trajectory traj = generate_trajectory(spec, inst.params, inst.x0, inst.controls, times);
        traj.id = id;
        traj.seed = derive_stream(seed, id);
        out[k] = std::move(traj);
    });
    return out;
}

// ---- corruption ------------------------------------------------------------------

std::vector<double> rms_scales_from(const std::vector<Trajectory>& batch, int state_dim) {
    std::vector<double> acc(static_cast<std::size_t>(state_dim), 0.0);
    std::size_t samples = 0;
    for (const auto& traj : batch) {
        const std::size_t len = traj.times.size();
        for (std::size_t k = 0; k < len; ++k)
            for (int i = 0; i < state_dim; ++i) {
                const double v = traj.states[k * static_cast<std::size_t>(state_dim) +
                                             static_cast<std::size_t>(i)];
                acc[static_cast<std::size_t>(i)] += v * v;
            }
        samples += len;
    }
    if (samples == 0) throw std::invalid_argument("rms_scales_from: empty batch");
    for (auto& v : acc) v = std::sqrt(v / static_cast<double>(samples));
    return acc;
}

std::vector<double> compute_rms_scales(const SystemSpec& spec, std::uint64_t seed, int count,
                                       int trajectory_len) {
    GenerateOptions opts;
    opts.trajectory_len = trajectory_len;
    const std::uint64_t rms_stream_base = 0x524d530000000000ULL;  // disjoint from dataset ids
    const auto batch = generate_batch(spec, seed, rms_stream_base, count, opts, ExecPolicy{});
    return rms_scales_from(batch, spec.state_dim);
}

void add_noise(std::vector<Trajectory>& batch, double r, const CorruptionConfig& cfg, Rng& rng) {
    if (r < 0.0) throw std::invalid_argument("add_noise: r must be nonnegative");
    if (r == 0.0) return;
    if (batch.empty()) return;
    const int n = static_cast<int>(cfg.rms_scales.size());
    if (n == 0) throw std::invalid_argument("add_noise: rms scales not computed");
    std::vector<double> sigma(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double c = cfg.rms_scales[static_cast<std::size_t>(i)];
        sigma[static_cast<std::size_t>(i)] =
            cfg.convention == NoiseConvention::StdDev ? r * c : std::sqrt(r * c);
    }
    for (auto& traj : batch) {
        const std::size_t len = traj.times.size();
        for (std::size_t k = 0; k < len; ++k)
            for (int i = 0; i < n; ++i) {
                const double s = sigma[static_cast<std::size_t>(i)];
                if (s > 0.0)
                    traj.states[k * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)] +=
                        rng.normal(0.0, s);
            }
    }
}

}  // namespace nds::sys
