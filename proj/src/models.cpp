#include "nds/models.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace nds::model {

using json = nlohmann::ordered_json;

namespace {

constexpr double kTimeScale = 0.1;  // fc time-offset feature scale

void standardize_states(const NdsModel& model, const double* x, double* out, int count) {
    const auto& mu = model.stdz.state_mean;
    const auto& inv = model.stdz.state_inv_std;
    const int n = model.spec.state_dim;
    for (int k = 0; k < count; ++k)
        for (int i = 0; i < n; ++i)
            out[k * n + i] = (x[k * n + i] - mu[static_cast<std::size_t>(i)]) *
                             inv[static_cast<std::size_t>(i)];
}

void standardize_controls(const NdsModel& model, const double* u, double* out, int count) {
    const auto& mu = model.stdz.ctrl_mean;
    const auto& inv = model.stdz.ctrl_inv_std;
    const int m = model.spec.control_dim;
    for (int k = 0; k < count; ++k)
        for (int j = 0; j < m; ++j)
            out[k * m + j] = (u[k * m + j] - mu[static_cast<std::size_t>(j)]) *
                             inv[static_cast<std::size_t>(j)];
}

std::vector<double> build_encoder_input(const NdsModel& model, const double* hist_states,
                                        const double* controls) {
    const int n = model.spec.state_dim;
    const int m = model.spec.control_dim;
    const int hist = model.cfg.history_len;
    const int span = model.cfg.history_len + model.cfg.horizon;
    std::vector<double> input(static_cast<std::size_t>(hist * n + span * m));
    standardize_states(model, hist_states, input.data(), hist);
    if (m > 0) standardize_controls(model, controls, input.data() + hist * n, span);
    return input;
}

void check_window(const NdsModel& model, const train::Window& window) {
    if (window.n != model.spec.state_dim || window.m != model.spec.control_dim)
        throw std::invalid_argument("window dims do not match model system");
    if (window.history_len() != model.cfg.history_len)
        throw std::invalid_argument("window history length " +
                                    std::to_string(window.history_len()) + " != model " +
                                    std::to_string(model.cfg.history_len));
    if (window.horizon() != model.cfg.horizon)
        throw std::invalid_argument("window horizon mismatch");
    const std::size_t span = static_cast<std::size_t>(model.cfg.history_len + model.cfg.horizon);
    if (window.times.size() != span) throw std::invalid_argument("window times length mismatch");
    if (window.controls.size() != span * static_cast<std::size_t>(window.m))
        throw std::invalid_argument("window controls length mismatch");
}

}  // namespace

Mode mode_from_name(const std::string& name) {
    if (name == "full") return Mode::Full;
    if (name == "partial") return Mode::Partial;
    if (name == "nds0") return Mode::Nds0;
    if (name == "node") return Mode::Node;
    if (name == "fc") return Mode::FcDirect;
    throw std::invalid_argument("unknown model mode: " + name);
}

const char* mode_name(Mode mode) {
    switch (mode) {
        case Mode::Full: return "full";
        case Mode::Partial: return "partial";
        case Mode::Nds0: return "nds0";
        case Mode::Node: return "node";
        case Mode::FcDirect: return "fc";
    }
    return "?";
}

NdsModel make_model(const sys::SystemSpec& spec, const NdsConfig& cfg, std::uint64_t seed) {
    if (cfg.mode == Mode::Partial) {
        bool any_unknown = false;
        for (bool k : spec.partial_known_mask) any_unknown |= !k;
        if (!any_unknown)
            throw std::invalid_argument("Partial mode requires at least one unknown component");
    }
    if (cfg.history_len <= 0 || cfg.horizon <= 0)
        throw std::invalid_argument("history_len and horizon must be positive");

    NdsModel model;
    model.spec = spec;
    model.cfg = cfg;

    const int n = spec.state_dim;
    const int m = spec.control_dim;
    const int span = cfg.history_len + cfg.horizon;

    if (cfg.mode == Mode::FcDirect) {
        model.has_fc = true;
        ad::MlpSpec fc_spec{"fc", cfg.history_len * n + span * m + span, cfg.fc_hidden,
                            cfg.horizon * n, cfg.fc_act};
        model.fc = ad::register_mlp(model.params.layout, fc_spec);
    } else {
        model.has_history = cfg.mode != Mode::Node || cfg.d_h > 0;
        model.has_residual = cfg.mode != Mode::Nds0;
        if (model.has_history) {
            ad::MlpSpec enc_spec{"h_enc", cfg.history_len * n + span * m, cfg.encoder_hidden,
                                 spec.param_dim + cfg.d_h, cfg.encoder_act};
            model.h_enc = ad::register_mlp(model.params.layout, enc_spec);
        }
        if (model.has_residual) {
            ad::MlpSpec ctx_spec{"c_enc", n + m, cfg.context_hidden, cfg.d_c, cfg.ode_act};
            model.c_enc = ad::register_mlp(model.params.layout, ctx_spec);
            const int res_in = (model.has_history ? cfg.d_h : 0) + cfg.d_c;
            ad::MlpSpec res_spec{"d_res", res_in, cfg.residual_hidden, n, cfg.ode_act};
            model.d_res = ad::register_mlp(model.params.layout, res_spec);
        }
    }
    model.params.layout.verify();
    model.params.allocate();

    Rng rng(seed, 0x6d6f64656cULL);  // "model"
    if (model.has_history) ad::init_mlp(model.h_enc, model.params, rng);
    if (model.has_residual) {
        ad::init_mlp(model.c_enc, model.params, rng);
        ad::init_mlp(model.d_res, model.params, rng);
    }
    if (model.has_fc) ad::init_mlp(model.fc, model.params, rng);

    model.param_lo.resize(static_cast<std::size_t>(spec.param_dim));
    model.param_width.resize(static_cast<std::size_t>(spec.param_dim));
    for (int i = 0; i < spec.param_dim; ++i) {
        const auto& [lo, hi] = spec.param_ranges[static_cast<std::size_t>(i)];
        model.param_lo[static_cast<std::size_t>(i)] = lo;
        model.param_width[static_cast<std::size_t>(i)] = hi - lo;
    }

    model.stdz.state_mean.assign(static_cast<std::size_t>(n), 0.0);
    model.stdz.state_inv_std.assign(static_cast<std::size_t>(n), 1.0);
    model.stdz.ctrl_mean.assign(static_cast<std::size_t>(m), 0.0);
    model.stdz.ctrl_inv_std.assign(static_cast<std::size_t>(m), 1.0);
    return model;
}

Standardization compute_standardization(const std::vector<sys::Trajectory>& trajectories,
                                        int state_dim, int control_dim) {
    Standardization s;
    s.state_mean.assign(static_cast<std::size_t>(state_dim), 0.0);
    s.state_inv_std.assign(static_cast<std::size_t>(state_dim), 1.0);
    s.ctrl_mean.assign(static_cast<std::size_t>(control_dim), 0.0);
    s.ctrl_inv_std.assign(static_cast<std::size_t>(control_dim), 1.0);

    std::size_t count = 0;
    std::vector<double> sum(static_cast<std::size_t>(state_dim), 0.0);
    std::vector<double> sq(static_cast<std::size_t>(state_dim), 0.0);
    std::size_t ccount = 0;
    std::vector<double> csum(static_cast<std::size_t>(control_dim), 0.0);
    std::vector<double> csq(static_cast<std::size_t>(control_dim), 0.0);
    for (const auto& traj : trajectories) {
        const std::size_t len = traj.times.size();
        for (std::size_t k = 0; k < len; ++k) {
            for (int i = 0; i < state_dim; ++i) {
                const double v =
                    traj.states[k * static_cast<std::size_t>(state_dim) + static_cast<std::size_t>(i)];
                sum[static_cast<std::size_t>(i)] += v;
                sq[static_cast<std::size_t>(i)] += v * v;
            }
            for (int j = 0; j < control_dim; ++j) {
                const double v = traj.controls[k * static_cast<std::size_t>(control_dim) +
                                               static_cast<std::size_t>(j)];
                csum[static_cast<std::size_t>(j)] += v;
                csq[static_cast<std::size_t>(j)] += v * v;
            }
        }
        count += len;
        ccount += len;
    }
    if (count == 0) throw std::invalid_argument("compute_standardization: no samples");
    for (int i = 0; i < state_dim; ++i) {
        const double mean = sum[static_cast<std::size_t>(i)] / static_cast<double>(count);
        const double var =
            std::max(0.0, sq[static_cast<std::size_t>(i)] / static_cast<double>(count) - mean * mean);
        const double sd = std::sqrt(var);
        s.state_mean[static_cast<std::size_t>(i)] = mean;
        s.state_inv_std[static_cast<std::size_t>(i)] = sd < 1e-8 ? 1.0 : 1.0 / sd;
    }
    for (int j = 0; j < control_dim; ++j) {
        const double mean = csum[static_cast<std::size_t>(j)] / static_cast<double>(ccount);
        const double var =
            std::max(0.0, csq[static_cast<std::size_t>(j)] / static_cast<double>(ccount) - mean * mean);
        const double sd = std::sqrt(var);
        s.ctrl_mean[static_cast<std::size_t>(j)] = mean;
        s.ctrl_inv_std[static_cast<std::size_t>(j)] = sd < 1e-8 ? 1.0 : 1.0 / sd;
    }
    return s;
}

// ---- tape lane ------------------------------------------------------------------

Encoded encode_history_tape(ad::Tape& tape, const NdsModel& model, const train::Window& window) {
    if (!model.has_history)
        throw std::logic_error("encode_history: model has no history encoder");
    check_window(model, window);

    const auto input = build_encoder_input(model, window.hist_states.data(),
                                           window.controls.data());
    const ad::NodeId raw = ad::mlp_apply(tape, model.h_enc, tape.input(input));

    Encoded enc;
    const int d_p = model.spec.param_dim;
    const ad::NodeId raw_phi = tape.slice(raw, 0, d_p);
    enc.phi = tape.add(tape.constant(model.param_lo),
                       tape.mul(tape.constant(model.param_width), tape.sigmoid(raw_phi)));
    if (model.cfg.d_h > 0) enc.b_h = tape.slice(raw, d_p, model.cfg.d_h);
    return enc;
}

ad::NodeId nds_rhs_tape(ad::Tape& tape, const NdsModel& model, const Encoded& enc, ad::NodeId x,
                        const double* u, double t) {
    const Mode mode = model.cfg.mode;
    ad::NodeId prior = -1;
    if (mode != Mode::Node) {
        const std::vector<bool>* mask =
            mode == Mode::Partial ? &model.spec.partial_known_mask : nullptr;
        prior = model.spec.prior_tape(tape, enc.phi, x, u, t, mask);
    }

    ad::NodeId residual = -1;
    if (model.has_residual) {
        const ad::NodeId std_x = tape.mul(tape.sub(x, tape.constant(model.stdz.state_mean)),
                                          tape.constant(model.stdz.state_inv_std));
        ad::NodeId ctx_in = std_x;
        const int m = model.spec.control_dim;
        if (m > 0) {
            std::vector<double> su(static_cast<std::size_t>(m));
            standardize_controls(model, u, su.data(), 1);
            ctx_in = tape.concat(std_x, tape.input(su));
        }
        const ad::NodeId b_c = ad::mlp_apply(tape, model.c_enc, ctx_in);
        const ad::NodeId res_in = enc.b_h >= 0 ? tape.concat(enc.b_h, b_c) : b_c;
        residual = ad::mlp_apply(tape, model.d_res, res_in);
    }

    if (prior >= 0 && residual >= 0) return tape.add(prior, residual);
    if (prior >= 0) return prior;
    if (residual >= 0) return residual;
    throw std::logic_error("nds_rhs: model has neither prior nor residual");
}

TapeRollout rollout_tape(ad::Tape& tape, const NdsModel& model, const train::Window& window,
                         const RolloutOptions& opts) {
    if (model.cfg.mode == Mode::FcDirect)
        throw std::logic_error("rollout_tape: FcDirect has no ODE rollout");
    check_window(model, window);

    TapeRollout out;
    if (opts.fixed_params) {
        if (static_cast<int>(opts.fixed_params->size()) != model.spec.param_dim)
            throw std::invalid_argument("fixed_params dimension mismatch");
        if (model.has_residual && model.cfg.d_h > 0 && model.has_history)
            out.enc = encode_history_tape(tape, model, window);  // keep b_h, pin phi
        out.enc.phi = tape.constant(*opts.fixed_params);
    } else if (model.has_history) {
        out.enc = encode_history_tape(tape, model, window);
    }

    const int m = model.spec.control_dim;
    ode::ControlSignal signal;
    if (m > 0) signal = ode::ControlSignal(window.times, window.controls, m);

    const ode::TapeRhs rhs = [&](ad::Tape& tp, ad::NodeId x, double t) {
        const double* u = m > 0 ? signal.at(t) : nullptr;
        return nds_rhs_tape(tp, model, out.enc, x, u, t);
    };

    const ad::NodeId x0 = tape.input(
        std::span<const double>(window.last_state(), static_cast<std::size_t>(window.n)));
    out.states = ode::integrate_rk4_tape(tape, rhs, x0, window.start_time(),
                                         window.target_times(), model.cfg.solver);

    ad::NodeId total = -1;
    const int n = window.n;
    for (int k = 0; k < model.cfg.horizon; ++k) {
        const ad::NodeId target = tape.constant(std::span<const double>(
            window.target_states.data() + static_cast<std::size_t>(k) * n,
            static_cast<std::size_t>(n)));
        const ad::NodeId step =
            tape.sum(tape.square(tape.sub(out.states[static_cast<std::size_t>(k)], target)));
        total = total < 0 ? step : tape.add(total, step);
    }
    out.loss = total;
    return out;
}

// ---- value lane -------------------------------------------------------------------

EncodedValue encode_history_value(const NdsModel& model, const double* hist_states,
                                  const double* controls, ValueScratch& scratch) {
    if (!model.has_history)
        throw std::logic_error("encode_history: model has no history encoder");
    scratch.input = build_encoder_input(model, hist_states, controls);
    ad::mlp_apply_value(model.h_enc, model.params, scratch.input.data(),
                        static_cast<int>(scratch.input.size()), scratch.raw, scratch.enc_scratch);

    EncodedValue enc;
    const int d_p = model.spec.param_dim;
    enc.phi.resize(static_cast<std::size_t>(d_p));
    for (int i = 0; i < d_p; ++i)
        enc.phi[static_cast<std::size_t>(i)] =
            model.param_lo[static_cast<std::size_t>(i)] +
            model.param_width[static_cast<std::size_t>(i)] *
                kern::sigmoid(scratch.raw[static_cast<std::size_t>(i)]);
    if (model.cfg.d_h > 0)
        enc.b_h.assign(scratch.raw.begin() + d_p, scratch.raw.begin() + d_p + model.cfg.d_h);
    return enc;
}

void nds_rhs_value(const NdsModel& model, const EncodedValue& enc, double t, const double* x,
                   const double* u, double* dxdt, ValueScratch& scratch) {
    const Mode mode = model.cfg.mode;
    const int n = model.spec.state_dim;
    const int m = model.spec.control_dim;

    const bool has_prior = mode != Mode::Node;
    if (has_prior) {
        const std::vector<bool>* mask =
            mode == Mode::Partial ? &model.spec.partial_known_mask : nullptr;
        scratch.prior.resize(static_cast<std::size_t>(n));
        model.spec.prior_value(enc.phi.data(), t, x, u, mask, scratch.prior.data());
    }

    if (model.has_residual) {
        scratch.ctx_in.resize(static_cast<std::size_t>(n + m));
        standardize_states(model, x, scratch.ctx_in.data(), 1);
        if (m > 0) standardize_controls(model, u, scratch.ctx_in.data() + n, 1);
        ad::mlp_apply_value(model.c_enc, model.params, scratch.ctx_in.data(), n + m, scratch.b_c,
                            scratch.ctx_scratch);
        scratch.res_in.clear();
        scratch.res_in.insert(scratch.res_in.end(), enc.b_h.begin(), enc.b_h.end());
        scratch.res_in.insert(scratch.res_in.end(), scratch.b_c.begin(), scratch.b_c.end());
        ad::mlp_apply_value(model.d_res, model.params, scratch.res_in.data(),
                            static_cast<int>(scratch.res_in.size()), scratch.residual,
                            scratch.res_scratch);
        if (has_prior) {
            for (int i = 0; i < n; ++i)
                dxdt[i] = scratch.prior[static_cast<std::size_t>(i)] +
                          scratch.residual[static_cast<std::size_t>(i)];
        } else {
            for (int i = 0; i < n; ++i) dxdt[i] = scratch.residual[static_cast<std::size_t>(i)];
        }
        return;
    }
    for (int i = 0; i < n; ++i) dxdt[i] = scratch.prior[static_cast<std::size_t>(i)];
}

void rollout_value(const NdsModel& model, const EncodedValue& enc, const double* x0, double t0,
                   const std::vector<double>& times, const ode::ControlSignal* control,
                   std::vector<double>& out_states, ValueScratch& scratch) {
    const ode::Rhs rhs = [&](double t, const double* x, const double* u, double* dxdt) {
        nds_rhs_value(model, enc, t, x, u, dxdt, scratch);
    };
    ode::integrate_rk4_value(rhs, std::span<const double>(x0, static_cast<std::size_t>(
                                                                  model.spec.state_dim)),
                             t0, times, control, model.cfg.solver, out_states);
}

std::vector<double> predict_window(const NdsModel& model, const train::Window& window,
                                   ValueScratch& scratch) {
    check_window(model, window);
    if (model.cfg.mode == Mode::FcDirect)
        return fc_direct_value(model, window.hist_states.data(), window.controls.data(),
                               window.times.data(), scratch);

    EncodedValue enc;
    if (model.has_history)
        enc = encode_history_value(model, window.hist_states.data(), window.controls.data(),
                                   scratch);

    const int m = model.spec.control_dim;
    ode::ControlSignal signal;
    if (m > 0) signal = ode::ControlSignal(window.times, window.controls, m);

    std::vector<double> out;
    rollout_value(model, enc, window.last_state(), window.start_time(), window.target_times(),
                  m > 0 ? &signal : nullptr, out, scratch);
    return out;
}

std::vector<double> estimate_params(const NdsModel& model, const train::Window& window,
                                    ValueScratch& scratch) {
    check_window(model, window);
    return encode_history_value(model, window.hist_states.data(), window.controls.data(), scratch)
        .phi;
}

// ---- direct feedforward baseline ----------------------------------------------------

std::vector<double> build_fc_input(const NdsModel& model, const double* hist_states,
                                   const double* controls, const double* times) {
    const int n = model.spec.state_dim;
    const int m = model.spec.control_dim;
    const int hist = model.cfg.history_len;
    const int span = model.cfg.history_len + model.cfg.horizon;
    std::vector<double> input(static_cast<std::size_t>(hist * n + span * m + span));
    standardize_states(model, hist_states, input.data(), hist);
    if (m > 0) standardize_controls(model, controls, input.data() + hist * n, span);
    double* tf = input.data() + hist * n + span * m;
    for (int k = 0; k < span; ++k) tf[k] = (times[k] - times[0]) * kTimeScale;
    return input;
}

ad::NodeId fc_direct_tape(ad::Tape& tape, const NdsModel& model, const train::Window& window) {
    if (!model.has_fc) throw std::logic_error("fc_direct: model is not FcDirect");
    check_window(model, window);
    const auto input = build_fc_input(model, window.hist_states.data(), window.controls.data(),
                                      window.times.data());
    return ad::mlp_apply(tape, model.fc, tape.input(input));
}

std::vector<double> fc_direct_value(const NdsModel& model, const double* hist_states,
                                    const double* controls, const double* times,
                                    ValueScratch& scratch) {
    if (!model.has_fc) throw std::logic_error("fc_direct: model is not FcDirect");
    scratch.input = build_fc_input(model, hist_states, controls, times);
    std::vector<double> out;
    ad::mlp_apply_value(model.fc, model.params, scratch.input.data(),
                        static_cast<int>(scratch.input.size()), out, scratch.fc_scratch);
    return out;
}

// ---- artifact io ----------------------------------------------------------------------

namespace {

json act_json(ad::Act a) { return ad::act_name(a); }

json config_json(const NdsConfig& cfg) {
    json j;
    j["mode"] = mode_name(cfg.mode);
    j["history_len"] = cfg.history_len;
    j["horizon"] = cfg.horizon;
    j["d_h"] = cfg.d_h;
    j["d_c"] = cfg.d_c;
    j["encoder_hidden"] = cfg.encoder_hidden;
    j["context_hidden"] = cfg.context_hidden;
    j["residual_hidden"] = cfg.residual_hidden;
    j["fc_hidden"] = cfg.fc_hidden;
    j["encoder_act"] = act_json(cfg.encoder_act);
    j["ode_act"] = act_json(cfg.ode_act);
    j["fc_act"] = act_json(cfg.fc_act);
    j["solver_substeps"] = cfg.solver.substeps_per_output;
    j["solver_nominal_dt"] = cfg.solver.nominal_dt;
    return j;
}

NdsConfig config_from_json(const json& j) {
    NdsConfig cfg;
    cfg.mode = mode_from_name(j.at("mode").get<std::string>());
    cfg.history_len = j.at("history_len").get<int>();
    cfg.horizon = j.at("horizon").get<int>();
    cfg.d_h = j.at("d_h").get<int>();
    cfg.d_c = j.at("d_c").get<int>();
    cfg.encoder_hidden = j.at("encoder_hidden").get<std::vector<int>>();
    cfg.context_hidden = j.at("context_hidden").get<std::vector<int>>();
    cfg.residual_hidden = j.at("residual_hidden").get<std::vector<int>>();
    cfg.fc_hidden = j.at("fc_hidden").get<std::vector<int>>();
    cfg.encoder_act = ad::act_from_name(j.at("encoder_act").get<std::string>());
    cfg.ode_act = ad::act_from_name(j.at("ode_act").get<std::string>());
    cfg.fc_act = ad::act_from_name(j.at("fc_act").get<std::string>());
    cfg.solver.substeps_per_output = j.at("solver_substeps").get<int>();
    cfg.solver.nominal_dt = j.at("solver_nominal_dt").get<double>();
    return cfg;
}

}  // namespace

void save_model(const std::string& path, const NdsModel& model) {
    json j;
    j["format_version"] = 1;
    j["system"] = model.spec.name;
    j["config"] = config_json(model.cfg);
    j["standardization"] = {{"state_mean", model.stdz.state_mean},
                            {"state_inv_std", model.stdz.state_inv_std},
                            {"ctrl_mean", model.stdz.ctrl_mean},
                            {"ctrl_inv_std", model.stdz.ctrl_inv_std}};
    json layout = json::array();
    for (const auto& s : model.params.layout.slices())
        layout.push_back({{"name", s.name}, {"offset", s.offset}, {"rows", s.rows}, {"cols", s.cols}});
    j["layout"] = layout;
    j["weights"] = model.params.data;

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("save_model: cannot open " + path);
    out << j.dump(1) << "\n";
}

NdsModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_model: cannot open " + path);
    json j;
    in >> j;
    if (j.at("format_version").get<int>() != 1)
        throw std::runtime_error("load_model: unsupported format version");

    const auto& spec = sys::system_by_name(j.at("system").get<std::string>());
    NdsModel model = make_model(spec, config_from_json(j.at("config")), 0);

    const auto& layout = j.at("layout");
    const auto& slices = model.params.layout.slices();
    if (layout.size() != slices.size())
        throw std::runtime_error("load_model: layout mismatch (slice count)");
    for (std::size_t i = 0; i < slices.size(); ++i) {
        const auto& s = layout[i];
        if (s.at("name").get<std::string>() != slices[i].name ||
            s.at("offset").get<int>() != slices[i].offset ||
            s.at("rows").get<int>() != slices[i].rows || s.at("cols").get<int>() != slices[i].cols)
            throw std::runtime_error("load_model: layout mismatch at " + slices[i].name);
    }

    const auto weights = j.at("weights").get<std::vector<double>>();
    if (weights.size() != model.params.size())
        throw std::runtime_error("load_model: weight count mismatch");
    model.params.data = weights;

    const auto& st = j.at("standardization");
    model.stdz.state_mean = st.at("state_mean").get<std::vector<double>>();
    model.stdz.state_inv_std = st.at("state_inv_std").get<std::vector<double>>();
    model.stdz.ctrl_mean = st.at("ctrl_mean").get<std::vector<double>>();
    model.stdz.ctrl_inv_std = st.at("ctrl_inv_std").get<std::vector<double>>();
    return model;
}

}  // namespace nds::model
