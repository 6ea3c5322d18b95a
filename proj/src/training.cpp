#include "nds/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace nds::train {

std::vector<Window> make_windows(const sys::Dataset& ds, int history, int horizon, int stride) {
    if (history <= 0 || horizon <= 0 || stride <= 0)
        throw std::invalid_argument("make_windows: history, horizon, stride must be positive");
    const int span = history + horizon;
    const int n = ds.state_dim;
    const int m = ds.control_dim;

    std::vector<Window> out;
    for (const auto& traj : ds.trajectories) {
        const int len = traj.length();
        for (int s = 0; s + span <= len; s += stride) {
            Window w;
            w.trajectory_id = traj.id;
            w.n = n;
            w.m = m;
            w.times.assign(traj.times.begin() + s, traj.times.begin() + s + span);
            w.hist_states.assign(traj.states.begin() + static_cast<long>(s) * n,
                                 traj.states.begin() + static_cast<long>(s + history) * n);
            w.target_states.assign(traj.states.begin() + static_cast<long>(s + history) * n,
                                   traj.states.begin() + static_cast<long>(s + span) * n);
            if (m > 0)
                w.controls.assign(traj.controls.begin() + static_cast<long>(s) * m,
                                  traj.controls.begin() + static_cast<long>(s + span) * m);
            w.true_params = traj.params;
            out.push_back(std::move(w));
        }
    }
    return out;
}

double rollout_loss(std::span<const double> predicted, std::span<const double> target, int n,
                    int horizon) {
    if (predicted.size() != target.size() ||
        predicted.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(horizon))
        throw std::invalid_argument("rollout_loss: shape mismatch");
    double total = 0.0;
    for (int k = 0; k < horizon; ++k) {
        double step = 0.0;
        for (int i = 0; i < n; ++i) {
            const double d = predicted[static_cast<std::size_t>(k * n + i)] -
                             target[static_cast<std::size_t>(k * n + i)];
            step += d * d;
        }
        total += step;
    }
    return total;
}

bool adam_step(ad::ParamVector& params, const std::vector<double>& grad, AdamState& state,
               const AdamConfig& cfg) {
    if (grad.size() != params.size()) throw std::invalid_argument("adam_step: size mismatch");
    if (state.m.size() != params.size()) state.init(params.size());
    for (double g : grad)
        if (!std::isfinite(g)) return false;

    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    return true;
}

namespace {

struct WindowGrad {
    double loss = 0.0;
    bool ok = false;
    std::vector<double> grad;
};

void window_gradient(const model::NdsModel& model, const Window& window, WindowGrad& out) {
    thread_local ad::Tape tape;
    tape.bind(&model.params);
    tape.reset();

    ad::NodeId loss_node = -1;
    if (model.cfg.mode == model::Mode::FcDirect) {
        const ad::NodeId pred = model::fc_direct_tape(tape, model, window);
        const ad::NodeId target = tape.constant(window.target_states);
        loss_node = tape.sum(tape.square(tape.sub(pred, target)));
    } else {
        loss_node = model::rollout_tape(tape, model, window).loss;
    }
    out.loss = tape.value(loss_node)[0];
    out.grad.assign(model.params.size(), 0.0);
    const double seed = 1.0;
    tape.backward(loss_node, std::span<const double>(&seed, 1), out.grad);
    out.ok = std::isfinite(out.loss);
}

}  // namespace

BatchResult batch_gradient(const model::NdsModel& model, const std::vector<Window>& windows,
                           std::span<const std::size_t> batch, const ExecPolicy& policy) {
    std::vector<WindowGrad> per_window(batch.size());
    parallel_for(batch.size(), policy, [&](std::size_t k) {
        try {
            window_gradient(model, windows[batch[k]], per_window[k]);
        } catch (const std::exception&) {
            per_window[k].ok = false;
        }
    });

    BatchResult result;
    result.grad.assign(model.params.size(), 0.0);
    std::size_t successes = 0;
    double loss_sum = 0.0;
    for (const auto& wg : per_window) {  // fixed order: independent of scheduling
        if (!wg.ok) {
            ++result.failures;
            continue;
        }
        loss_sum += wg.loss;
        for (std::size_t i = 0; i < result.grad.size(); ++i) result.grad[i] += wg.grad[i];
        ++successes;
    }
    if (successes > 0) {
        const double inv = 1.0 / static_cast<double>(successes);
        result.mean_loss = loss_sum * inv;
        for (auto& g : result.grad) g *= inv;
    } else {
        result.mean_loss = std::numeric_limits<double>::quiet_NaN();
    }
    return result;
}

EvalResult evaluate(const model::NdsModel& model, const std::vector<Window>& windows,
                    const ExecPolicy& policy) {
    EvalResult result;
    result.windows = windows.size();
    if (windows.empty()) return result;

    std::vector<double> losses(windows.size(), 0.0);
    std::vector<double> perrs(windows.size(), 0.0);
    const bool want_params = model.exposes_params();
    parallel_for(windows.size(), policy, [&](std::size_t k) {
        thread_local model::ValueScratch scratch;
        const auto& w = windows[k];
        const auto pred = model::predict_window(model, w, scratch);
        losses[k] = rollout_loss(pred, w.target_states, w.n, w.horizon());
        if (want_params && !w.true_params.empty()) {
            const auto phi = model::estimate_params(model, w, scratch);
            double e = 0.0;
            for (std::size_t i = 0; i < phi.size(); ++i) {
                const double d = phi[i] - w.true_params[i];
                e += d * d;
            }
            perrs[k] = e;
        } else {
            perrs[k] = std::numeric_limits<double>::quiet_NaN();
        }
    });

    double lsum = 0.0;
    for (double v : losses) lsum += v;
    result.rollout_l2 = lsum / static_cast<double>(windows.size());

    if (want_params) {
        double psum = 0.0;
        std::size_t pcount = 0;
        for (double v : perrs)
            if (std::isfinite(v)) {
                psum += v;
                ++pcount;
            }
        if (pcount > 0) {
            result.param_l2 = psum / static_cast<double>(pcount);
            result.has_param_l2 = true;
        }
    }
    return result;
}

TrainHistory train(model::NdsModel& model, const std::vector<Window>& train_windows,
                   const std::vector<Window>& val_windows, const TrainConfig& cfg) {
    if (train_windows.empty()) throw std::invalid_argument("train: empty training set");
    if (cfg.patience < 1) throw std::invalid_argument("train: patience must be >= 1");

    {
        // no window-level leakage between splits
        for (const auto& vw : val_windows)
            for (const auto& tw : train_windows)
                if (vw.trajectory_id == tw.trajectory_id)
                    throw std::invalid_argument("train: train/val share trajectory " +
                                                std::to_string(vw.trajectory_id));
    }

    TrainHistory history;
    {
        const EvalResult initial = evaluate(model, val_windows, cfg.policy);
        history.initial_val_loss = initial.rollout_l2;
        history.initial_param_l2 = initial.param_l2;
        history.has_initial_param_l2 = initial.has_param_l2;
        history.best_val_loss = initial.rollout_l2;
    }
    history.best_epoch = 0;

    std::vector<double> best_weights = model.params.data;
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    AdamState adam;
    adam.init(model.params.size());

    std::vector<std::size_t> order(train_windows.size());
    std::iota(order.begin(), order.end(), 0);

    int since_best = 0;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng shuffle_rng(cfg.seed, 0xe (epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        int bad_batches = 0;
        int total_batches = 0;
        int rejected = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const std::span<const std::size_t> batch(order.data() + start, stop - start);
            const BatchResult br = batch_gradient(model, train_windows, batch, cfg.policy);
            ++total_batches;
            if (br.failures > 0 || !std::isfinite(br.mean_loss)) ++bad_batches;
            if (std::isfinite(br.mean_loss)) {
                loss_sum += br.mean_loss * static_cast<double>(batch.size() - br.failures);
                loss_count += batch.size() - static_cast<std::size_t>(br.failures);
                if (!adam_step(model.params, br.grad, adam, adam_cfg)) ++rejected;
            } else {
                ++rejected;
            }
        }
        if (bad_batches * 10 > total_batches)
            throw std::runtime_error("train: divergence in " + std::to_string(bad_batches) + "/" +
                                     std::to_string(total_batches) +
                                     " batches (>10%); aborting epoch " + std::to_string(epoch));

        EpochStats stats;
        stats.train_loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count)
                                          : std::numeric_limits<double>::quiet_NaN();
        stats.rejected_steps = rejected;
        const EvalResult val = evaluate(model, val_windows, cfg.policy);
        stats.val_loss = val.rollout_l2;
        stats.param_l2 = val.param_l2;
        stats.has_param_l2 = val.has_param_l2;
        history.epochs.push_back(stats);

        if (!val_windows.empty() && stats.val_loss < history.best_val_loss) {
            history.best_val_loss = stats.val_loss;
            history.best_epoch = epoch;
            best_weights = model.params.data;
            since_best = 0;
        } else {
            ++since_best;
            if (!val_windows.empty() && since_best >= cfg.patience) break;
        }
    }

    if (!val_windows.empty()) model.params.data = best_weights;
    return history;
}

// ---- reports ------------------------------------------------------------------------

namespace {

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<FitReport>& reports,
                       bool append) {
    const bool fresh = !append || !std::ifstream(path).good();
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path);
    if (fresh)
        out << "method,system,n_train,fraction,seed,corruption_r,corruption_j,test_l2,param_l2,"
               "epochs,wall_time_s\n";
    for (const auto& r : reports) {
        out << r.method << ',' << r.system << ',' << r.n_train << ',' << format_double(r.fraction)
            << ',' << r.seed << ',' << format_double(r.corruption_r) << ','
            << format_double(r.corruption_j) << ',' << format_double(r.test_l2) << ','
            << (r.has_param_l2 ? format_double(r.param_l2) : std::string{}) << ',' << r.epochs
            << ',' << format_double(r.wall_time_s) << '\n';
    }
}

std::vector<FitReport> read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_metrics_csv: cannot open " + path);
    std::string line;
    std::getline(in, line);  // header
    std::vector<FitReport> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        while (cells.size() < 11) cells.emplace_back();
        FitReport r;
        r.method = cells[0];
        r.system = cells[1];
        r.n_train = std::stoi(cells[2]);
        r.fraction = std::stod(cells[3]);
        r.seed = static_cast<std::uint64_t>(std::stoull(cells[4]));
        r.corruption_r = std::stod(cells[5]);
        r.corruption_j = std::stod(cells[6]);
        r.test_l2 = std::stod(cells[7]);
        r.has_param_l2 = !cells[8].empty();
        r.param_l2 = r.has_param_l2 ? std::stod(cells[8]) : 0.0;
        r.epochs = std::stoi(cells[9]);
        r.wall_time_s = std::stod(cells[10]);
        out.push_back(std::move(r));
    }
    return out;
}

void write_loss_curve_csv(const std::string& path, const TrainHistory& history) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_loss_curve_csv: cannot open " + path);
    out << "epoch,train_loss,val_loss,param_l2\n";
    out.precision(17);
    out << 0 << ",," << history.initial_val_loss << ',';
    if (history.has_initial_param_l2) out << history.initial_param_l2;
    out << '\n';
    for (std::size_t e = 0; e < history.epochs.size(); ++e) {
        const auto& s = history.epochs[e];
        out << (e + 1) << ',' << s.train_loss << ',' << s.val_loss << ',';
        if (s.has_param_l2) out << s.param_l2;
        out << '\n';
    }
}

model::NdsConfig method_config(const std::string& method) {
    model::NdsConfig cfg;
    if (method == "full_nds") {
        cfg.mode = model::Mode::Full;
    } else if (method == "partial_nds") {
        cfg.mode = model::Mode::Partial;
    } else if (method == "nds0") {
        cfg.mode = model::Mode::Nds0;
    } else if (method == "fc_node") {
        cfg.mode = model::Mode::Node;
        cfg.d_h = 0;  // no history conditioning: a plain neural ODE
        cfg.residual_hidden = {128, 128, 128};
    } else if (method == "fc") {
        cfg.mode = model::Mode::FcDirect;
    } else {
        throw std::invalid_argument("unknown network method: " + method);
    }
    return cfg;
}

bool is_network_method(const std::string& method) {
    return method == "full_nds" || method == "partial_nds" || method == "nds0" ||
           method == "fc_node" || method == "fc";
}

std::vector<std::size_t> subset_indices(std::size_t total, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0) || fraction > 1.0)
        throw std::invalid_argument("subset_indices: fraction must be in (0, 1]");
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed, 0x73756273ULL);  // "subs"
    std::shuffle(order.begin(), order.end(), rng.engine());
    const auto keep = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(total) - 1e-12));
    order.resize(std::max<std::size_t>(1, keep));
    return order;
}

}  // namespace nds::train
