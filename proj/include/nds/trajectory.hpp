#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nds::sys {

/// Timestamped state/control sequence plus the hidden parameter vector that
/// generated it. Regenerating with the same seed stream reproduces the
/// trajectory bitwise.
struct Trajectory {
    std::uint64_t id = 0;
    std::vector<double> times;     // T
    std::vector<double> states;    // T x n, row-major
    std::vector<double> controls;  // T x m, row-major
    std::vector<double> params;    // d_p (hidden at test time)
    std::uint64_t seed = 0;

    int length() const { return static_cast<int>(times.size()); }
};

struct Dataset {
    std::string system;
    double dt = 0.5;
    std::uint64_t seed = 0;
    int state_dim = 0;
    int control_dim = 0;
    int param_dim = 0;
    std::vector<Trajectory> trajectories;
};

}  // namespace nds::sys
