#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace nds::ad {

/// One named tensor inside the flat parameter vector. Matrices are row-major;
/// vectors have cols == 1.
struct ParamSlice {
    std::string name;
    int offset = 0;
    int rows = 0;
    int cols = 1;

    int size() const { return rows * cols; }
};

/// Maps (network, layer, tensor) names onto contiguous slices of one flat
/// weight vector. Slices are appended back to back, so the map covers the
/// vector exactly once; verify() re-checks that invariant after load.
class ParamLayout {
public:
    int add(const std::string& name, int rows, int cols = 1) {
        if (rows <= 0 || cols <= 0) throw std::invalid_argument("ParamLayout: bad shape for " + name);
        for (const auto& s : slices_)
            if (s.name == name) throw std::invalid_argument("ParamLayout: duplicate slice " + name);
        const int off = total_;
        slices_.push_back(ParamSlice{name, off, rows, cols});
        total_ += rows * cols;
        return off;
    }

    const ParamSlice& find(const std::string& name) const {
        for (const auto& s : slices_)
            if (s.name == name) return s;
        throw std::out_of_range("ParamLayout: no slice named " + name);
    }

    const std::vector<ParamSlice>& slices() const { return slices_; }
    int total() const { return total_; }

    /// No gaps, no overlaps, full coverage of [0, total).
    void verify() const {
        std::vector<ParamSlice> sorted = slices_;
        std::sort(sorted.begin(), sorted.end(),
                  [](const ParamSlice& a, const ParamSlice& b) { return a.offset < b.offset; });
        int cursor = 0;
        for (const auto& s : sorted) {
            if (s.offset != cursor)
                throw std::logic_error("ParamLayout: gap or overlap at slice " + s.name);
            cursor += s.size();
        }
        if (cursor != total_) throw std::logic_error("ParamLayout: coverage mismatch");
    }

private:
    std::vector<ParamSlice> slices_;
    int total_ = 0;
};

/// Flat sequence of trainable weights plus its layout map.
struct ParamVector {
    ParamLayout layout;
    std::vector<double> data;

    void allocate() { data.assign(static_cast<std::size_t>(layout.total()), 0.0); }

    double* slice(const std::string& name) { return data.data() + layout.find(name).offset; }
    const double* slice(const std::string& name) const { return data.data() + layout.find(name).offset; }

    std::size_t size() const { return data.size(); }
};

}  // namespace nds::ad
