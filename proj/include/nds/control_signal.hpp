#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace nds::ode {

/// Piecewise-constant (zero-order hold) control interpolant: u(t) is the
/// sample at the largest grid time <= t, clamped to the first/last sample
/// outside the grid. Controls are given at sample times, matching discrete
/// actuation.
class ControlSignal {
public:
    ControlSignal() = default;
    ControlSignal(std::vector<double> times, std::vector<double> values, int dim)
        : times_(std::move(times)), values_(std::move(values)), dim_(dim) {
        if (dim_ < 0) throw std::invalid_argument("ControlSignal: negative dim");
        if (dim_ > 0 && values_.size() != times_.size() * static_cast<std::size_t>(dim_))
            throw std::invalid_argument("ControlSignal: times/values size mismatch");
        for (std::size_t i = 1; i < times_.size(); ++i)
            if (!(times_[i] > times_[i - 1]))
                throw std::invalid_argument("ControlSignal: times not increasing");
    }

    int dim() const { return dim_; }
    bool empty() const { return dim_ == 0 || times_.empty(); }

    /// Pointer to the dim() values active at time t.
    const double* at(double t) const {
        if (empty()) return nullptr;
        auto it = std::upper_bound(times_.begin(), times_.end(), t);
        std::size_t idx = it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
        return values_.data() + idx * static_cast<std::size_t>(dim_);
    }

private:
    std::vector<double> times_;
    std::vector<double> values_;
    int dim_ = 0;
};

}  // namespace nds::ode
