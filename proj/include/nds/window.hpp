#pragma once

#include <cstdint>
#include <vector>

namespace nds::train {

/// One supervised example: a 32-step observed prefix, controls over the whole
/// 48-step span (history and future), and the 16 future states to predict.
/// Cut as a contiguous slice of a single trajectory.
struct Window {
    std::uint64_t trajectory_id = 0;
    int n = 0;
    int m = 0;
    std::vector<double> times;          // history + horizon
    std::vector<double> hist_states;    // history * n
    std::vector<double> controls;       // (history + horizon) * m
    std::vector<double> target_states;  // horizon * n
    std::vector<double> true_params;    // evaluation only; may be empty

    int history_len() const { return n > 0 ? static_cast<int>(hist_states.size()) / n : 0; }
    int horizon() const { return n > 0 ? static_cast<int>(target_states.size()) / n : 0; }

    const double* last_state() const {
        return hist_states.data() + hist_states.size() - static_cast<std::size_t>(n);
    }
    double start_time() const { return times[static_cast<std::size_t>(history_len() - 1)]; }
    std::vector<double> target_times() const {
        return {times.begin() + history_len(), times.end()};
    }
};

}  // namespace nds::train
