#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "nds/params.hpp"
#include "nds/rng.hpp"
#include "nds/tape.hpp"

namespace nds::ad {

enum class Act { Softplus, Relu, Tanh, Identity };

inline const char* act_name(Act a) {
    switch (a) {
        case Act::Softplus: return "softplus";
        case Act::Relu: return "relu";
        case Act::Tanh: return "tanh";
        case Act::Identity: return "identity";
    }
    return "?";
}

inline Act act_from_name(const std::string& s) {
    if (s == "softplus") return Act::Softplus;
    if (s == "relu") return Act::Relu;
    if (s == "tanh") return Act::Tanh;
    if (s == "identity") return Act::Identity;
    throw std::invalid_argument("unknown activation: " + s);
}

/// Fully connected network description: in -> hidden... -> out, with the
/// activation applied after every hidden layer and a linear output layer.
struct MlpSpec {
    std::string name;
    int in = 0;
    std::vector<int> hidden;
    int out = 0;
    Act act = Act::Softplus;

    std::vector<std::pair<int, int>> layer_shapes() const {  // (rows, cols)
        std::vector<std::pair<int, int>> shapes;
        int prev = in;
        for (int h : hidden) {
            shapes.emplace_back(h, prev);
            prev = h;
        }
        shapes.emplace_back(out, prev);
        return shapes;
    }
};

/// Resolved parameter offsets for one MLP inside a ParamVector.
struct MlpSlices {
    struct Layer {
        int w_off = 0;
        int b_off = 0;
        int rows = 0;
        int cols = 0;
    };
    std::vector<Layer> layers;
    Act act = Act::Softplus;

    int param_count() const {
        int total = 0;
        for (const auto& l : layers) total += l.rows * l.cols + l.rows;
        return total;
    }
};

inline MlpSlices register_mlp(ParamLayout& layout, const MlpSpec& spec) {
    MlpSlices slices;
    slices.act = spec.act;
    int idx = 0;
    for (auto [rows, cols] : spec.layer_shapes()) {
        MlpSlices::Layer l;
        l.rows = rows;
        l.cols = cols;
        l.w_off = layout.add(spec.name + ".w" + std::to_string(idx), rows, cols);
        l.b_off = layout.add(spec.name + ".b" + std::to_string(idx), rows);
        slices.layers.push_back(l);
        ++idx;
    }
    return slices;
}

/// Glorot-uniform weights, zero biases. Draw order is fixed (layers in order,
/// weights row-major) so a given rng stream always yields the same network.
inline void init_mlp(const MlpSlices& slices, ParamVector& params, Rng& rng) {
    for (const auto& l : slices.layers) {
        const double limit = std::sqrt(6.0 / static_cast<double>(l.rows + l.cols));
        double* w = params.data.data() + l.w_off;
        for (int i = 0; i < l.rows * l.cols; ++i) w[i] = rng.uniform(-limit, limit);
        double* b = params.data.data() + l.b_off;
        for (int i = 0; i < l.rows; ++i) b[i] = 0.0;
    }
}

inline NodeId apply_act(Tape& tape, Act act, NodeId x) {
    switch (act) {
        case Act::Softplus: return tape.softplus(x);
        case Act::Relu: return tape.relu(x);
        case Act::Tanh: return tape.tanh(x);
        case Act::Identity: return x;
    }
    throw std::logic_error("apply_act: bad activation");
}

inline NodeId mlp_apply(Tape& tape, const MlpSlices& slices, NodeId x) {
    NodeId h = x;
    for (std::size_t i = 0; i < slices.layers.size(); ++i) {
        const auto& l = slices.layers[i];
        h = tape.affine(l.w_off, l.b_off, l.rows, h);
        if (i + 1 < slices.layers.size()) h = apply_act(tape, slices.act, h);
    }
    return h;
}

/// Scratch buffers for the no-gradient inference lane.
struct MlpScratch {
    std::vector<double> a;
    std::vector<double> b;
};

/// Plain-double forward pass; mirrors mlp_apply op for op so the two lanes
/// produce bitwise-identical outputs.
inline void mlp_apply_value(const MlpSlices& slices, const ParamVector& params,
                            const double* x, int /*in_len*/, std::vector<double>& out,
                            MlpScratch& scratch) {
    const double* cur = x;
    std::vector<double>* ping = &scratch.a;
    std::vector<double>* pong = &scratch.b;
    for (std::size_t i = 0; i < slices.layers.size(); ++i) {
        const auto& l = slices.layers[i];
        std::vector<double>& dst = (i + 1 == slices.layers.size()) ? out : *ping;
        dst.resize(static_cast<std::size_t>(l.rows));
        kern::affine(params.data.data() + l.w_off, params.data.data() + l.b_off, cur, dst.data(),
                     l.rows, l.cols);
        if (i + 1 < slices.layers.size()) {
            switch (slices.act) {
                case Act::Softplus:
                    for (auto& v : dst) v = kern::softplus(v);
                    break;
                case Act::Relu:
                    for (auto& v : dst) v = v > 0.0 ? v : 0.0;
                    break;
                case Act::Tanh:
                    for (auto& v : dst) v = std::tanh(v);
                    break;
                case Act::Identity:
                    break;
            }
            cur = dst.data();
            std::swap(ping, pong);
        }
    }
}

}  // namespace nds::ad
