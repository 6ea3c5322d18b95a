#include "nds/ode.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>

namespace nds::ode {

namespace {

void require_times(const std::vector<double>& times, double t0) {
    if (times.empty()) throw std::invalid_argument("integrate: empty time grid");
    if (times.front() < t0) throw std::invalid_argument("integrate: times[0] before t0");
    for (std::size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1]))
            throw std::invalid_argument("integrate: times not strictly increasing");
}

void check_state_finite(const double* x, int n, double t, const char* where) {
    for (int i = 0; i < n; ++i)
        if (!std::isfinite(x[i]))
            throw std::runtime_error(std::string(where) + ": divergence, non-finite state at t=" +
                                     std::to_string(t));
}

}  // namespace

int substeps_for_interval(double h, const SolveConfig& cfg) {
    const double target = cfg.nominal_dt / static_cast<double>(cfg.substeps_per_output);
    int n = static_cast<int>(std::ceil(h / target - 1e-9));
    return n < 1 ? 1 : n;
}

namespace {

struct Rk4Scratch {
    std::vector<double> k1, k2, k3, k4, xs;
    void size_for(int n) {
        if (static_cast<int>(k1.size()) == n) return;
        for (auto* v : {&k1, &k2, &k3, &k4, &xs}) v->assign(static_cast<std::size_t>(n), 0.0);
    }
};

void rk4_step_scratch(const Rhs& rhs, const double* x, const double* u, double t, double h, int n,
                      double* out, Rk4Scratch& s) {
    s.size_for(n);
    const double ch = 0.5 * h;
    const double c6 = h / 6.0;
    const double c3 = h / 3.0;

    rhs(t, x, u, s.k1.data());
    for (int i = 0; i < n; ++i) s.xs[i] = x[i] + ch * s.k1[i];
    rhs(t + ch, s.xs.data(), u, s.k2.data());
    for (int i = 0; i < n; ++i) s.xs[i] = x[i] + ch * s.k2[i];
    rhs(t + ch, s.xs.data(), u, s.k3.data());
    for (int i = 0; i < n; ++i) s.xs[i] = x[i] + h * s.k3[i];
    rhs(t + h, s.xs.data(), u, s.k4.data());

    for (int i = 0; i < n; ++i) out[i] = x[i] + c6 * s.k1[i];
    for (int i = 0; i < n; ++i) out[i] = out[i] + c3 * s.k2[i];
    for (int i = 0; i < n; ++i) out[i] = out[i] + c3 * s.k3[i];
    for (int i = 0; i < n; ++i) out[i] = out[i] + c6 * s.k4[i];
}

}  // namespace

void rk4_step(const Rhs& rhs, const double* x, const double* u, double t, double h, int n,
              double* out) {
    if (!(h > 0.0)) throw std::invalid_argument("rk4_step: h must be positive");
    Rk4Scratch s;
    rk4_step_scratch(rhs, x, u, t, h, n, out, s);
    check_state_finite(out, n, t + h, "rk4_step");
}

void integrate_rk4_value(const Rhs& rhs, std::span<const double> x0, double t0,
                         const std::vector<double>& times, const ControlSignal* control,
                         const SolveConfig& cfg, std::vector<double>& out_states) {
    require_times(times, t0);
    const int n = static_cast<int>(x0.size());
    out_states.resize(times.size() * static_cast<std::size_t>(n));

    std::vector<double> x(x0.begin(), x0.end());
    std::vector<double> xn(static_cast<std::size_t>(n));
    Rk4Scratch scratch;
    double t = t0;
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double target = times[k];
        if (target > t) {
            const double span = target - t;
            const int nsub = substeps_for_interval(span, cfg);
            const double h = span / static_cast<double>(nsub);
            for (int s = 0; s < nsub; ++s) {
                const double ts = t + static_cast<double>(s) * h;
                const double* u = control ? control->at(ts) : nullptr;
                rk4_step_scratch(rhs, x.data(), u, ts, h, n, xn.data(), scratch);
                check_state_finite(xn.data(), n, ts + h, "rk4");
                x.swap(xn);
            }
            t = target;
        }
        std::memcpy(out_states.data() + k * static_cast<std::size_t>(n), x.data(),
                    sizeof(double) * static_cast<std::size_t>(n));
    }
}

namespace {

// Dormand-Prince 5(4) coefficients.
constexpr double kA21 = 1.0 / 5;
constexpr double kA31 = 3.0 / 40, kA32 = 9.0 / 40;
constexpr double kA41 = 44.0 / 45, kA42 = -56.0 / 15, kA43 = 32.0 / 9;
constexpr double kA51 = 19372.0 / 6561, kA52 = -25360.0 / 2187, kA53 = 64448.0 / 6561,
                 kA54 = -212.0 / 729;
constexpr double kA61 = 9017.0 / 3168, kA62 = -355.0 / 33, kA63 = 46732.0 / 5247,
                 kA64 = 49.0 / 176, kA65 = -5103.0 / 18656;
constexpr double kB1 = 35.0 / 384, kB3 = 500.0 / 1113, kB4 = 125.0 / 192, kB5 = -2187.0 / 6784,
                 kB6 = 11.0 / 84;
constexpr double kE1 = 35.0 / 384 - 5179.0 / 57600, kE3 = 500.0 / 1113 - 7571.0 / 16695,
                 kE4 = 125.0 / 192 - 393.0 / 640, kE5 = -2187.0 / 6784 + 92097.0 / 339200,
                 kE6 = 11.0 / 84 - 187.0 / 2100, kE7 = -1.0 / 40;

constexpr double kMinStep = 1e-8;

struct Dopri5 {
    const Rhs& rhs;
    const ControlSignal* control;
    int n;
    std::vector<double> k1, k2, k3, k4, k5, k6, k7, xs, y5;

    explicit Dopri5(const Rhs& f, const ControlSignal* c, int dim)
        : rhs(f), control(c), n(dim) {
        for (auto* v : {&k1, &k2, &k3, &k4, &k5, &k6, &k7, &xs, &y5})
            v->assign(static_cast<std::size_t>(dim), 0.0);
    }

    // Attempts one step of size h from (t, x). Returns the scaled error norm;
    // y5 holds the candidate state. Non-finite results return +inf.
    double attempt(double t, const double* x, double h, double rtol, double atol) {
        const double* u = control ? control->at(t) : nullptr;
        rhs(t, x, u, k1.data());
        for (int i = 0; i < n; ++i) xs[i] = x[i] + h * kA21 * k1[i];
        rhs(t + h / 5.0, xs.data(), u, k2.data());
        for (int i = 0; i < n; ++i) xs[i] = x[i] + h * (kA31 * k1[i] + kA32 * k2[i]);
        rhs(t + 3.0 * h / 10.0, xs.data(), u, k3.data());
        for (int i = 0; i < n; ++i)
            xs[i] = x[i] + h * (kA41 * k1[i] + kA42 * k2[i] + kA43 * k3[i]);
        rhs(t + 4.0 * h / 5.0, xs.data(), u, k4.data());
        for (int i = 0; i < n; ++i)
            xs[i] = x[i] + h * (kA51 * k1[i] + kA52 * k2[i] + kA53 * k3[i] + kA54 * k4[i]);
        rhs(t + 8.0 * h / 9.0, xs.data(), u, k5.data());
        for (int i = 0; i < n; ++i)
            xs[i] = x[i] +
                    h * (kA61 * k1[i] + kA62 * k2[i] + kA63 * k3[i] + kA64 * k4[i] + kA65 * k5[i]);
        rhs(t + h, xs.data(), u, k6.data());
        for (int i = 0; i < n; ++i)
            y5[i] = x[i] +
                    h * (kB1 * k1[i] + kB3 * k3[i] + kB4 * k4[i] + kB5 * k5[i] + kB6 * k6[i]);
        rhs(t + h, y5.data(), u, k7.data());

        double err = 0.0;
        for (int i = 0; i < n; ++i) {
            if (!std::isfinite(y5[i])) return std::numeric_limits<double>::infinity();
            const double e =
                h * (kE1 * k1[i] + kE3 * k3[i] + kE4 * k4[i] + kE5 * k5[i] + kE6 * k6[i] +
                     kE7 * k7[i]);
            const double sk = atol + rtol * std::max(std::abs(x[i]), std::abs(y5[i]));
            const double q = e / sk;
            err += q * q;
        }
        err = std::sqrt(err / static_cast<double>(n));
        return std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
    }
};

}  // namespace

std::vector<std::vector<double>> integrate(const OdeProblem& problem,
                                           const std::vector<double>& times,
                                           const SolveConfig& cfg) {
    require_times(times, problem.t0);
    if (cfg.method == Method::Rk4Fixed) {
        if (cfg.substeps_per_output < 1)
            throw std::invalid_argument("integrate: substeps_per_output must be >= 1");
        std::vector<double> flat;
        integrate_rk4_value(problem.rhs, problem.x0, problem.t0, times, problem.control, cfg,
                            flat);
        const int n = static_cast<int>(problem.x0.size());
        std::vector<std::vector<double>> out(times.size());
        for (std::size_t k = 0; k < times.size(); ++k)
            out[k].assign(flat.begin() + static_cast<long>(k) * n,
                          flat.begin() + static_cast<long>(k + 1) * n);
        return out;
    }

    if (!(cfg.rtol > 0.0) || !(cfg.atol > 0.0))
        throw std::invalid_argument("integrate: rtol and atol must be positive");

    const int n = static_cast<int>(problem.x0.size());
    Dopri5 stepper(problem.rhs, problem.control, n);
    std::vector<double> x = problem.x0;
    double t = problem.t0;
    double h = 0.0;  // chosen lazily per segment

    std::vector<std::vector<double>> out;
    out.reserve(times.size());
    for (double target : times) {
        while (target - t > 1e-13 * std::max(1.0, std::abs(target))) {
            if (h <= 0.0) h = (target - t) / 64.0;
            h = std::min(h, target - t);
            if (h < kMinStep)
                throw std::runtime_error("dopri5: step size underflow (stiffness) at t=" +
                                         std::to_string(t));
            const double err = stepper.attempt(t, x.data(), h, cfg.rtol, cfg.atol);
            if (err <= 1.0) {
                t += h;
                x = stepper.y5;
                check_state_finite(x.data(), n, t, "dopri5");
                const double fac =
                    err == 0.0 ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(err, -0.2)));
                h *= fac;
            } else {
                const double fac = std::isfinite(err)
                                       ? std::min(1.0, std::max(0.2, 0.9 * std::pow(err, -0.2)))
                                       : 0.2;
                h *= fac;
                if (h < kMinStep)
                    throw std::runtime_error("dopri5: step size underflow (stiffness) at t=" +
                                             std::to_string(t));
            }
        }
        out.push_back(x);
    }
    return out;
}

ad::NodeId rk4_step_tape(ad::Tape& tape, const TapeRhs& rhs, ad::NodeId x, double t, double h) {
    const double ch = 0.5 * h;
    const double c6 = h / 6.0;
    const double c3 = h / 3.0;

    const ad::NodeId k1 = rhs(tape, x, t);
    const ad::NodeId x2 = tape.add_scaled(x, k1, ch);
    const ad::NodeId k2 = rhs(tape, x2, t + ch);
    const ad::NodeId x3 = tape.add_scaled(x, k2, ch);
    const ad::NodeId k3 = rhs(tape, x3, t + ch);
    const ad::NodeId x4 = tape.add_scaled(x, k3, h);
    const ad::NodeId k4 = rhs(tape, x4, t + h);

    ad::NodeId y = tape.add_scaled(x, k1, c6);
    y = tape.add_scaled(y, k2, c3);
    y = tape.add_scaled(y, k3, c3);
    y = tape.add_scaled(y, k4, c6);
    return y;
}

std::vector<ad::NodeId> integrate_rk4_tape(ad::Tape& tape, const TapeRhs& rhs, ad::NodeId x0,
                                           double t0, const std::vector<double>& times,
                                           const SolveConfig& cfg) {
    require_times(times, t0);
    std::vector<ad::NodeId> out;
    out.reserve(times.size());
    ad::NodeId x = x0;
    double t = t0;
    for (double target : times) {
        if (target > t) {
            const double span = target - t;
            const int nsub = substeps_for_interval(span, cfg);
            const double h = span / static_cast<double>(nsub);
            for (int s = 0; s < nsub; ++s) {
                const double ts = t + static_cast<double>(s) * h;
                x = rk4_step_tape(tape, rhs, x, ts, h);
            }
            t = target;
        }
        out.push_back(x);
    }
    return out;
}

}  // namespace nds::ode
