#include "nds/store.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "nds/hash.hpp"
#include "nds/rng.hpp"

namespace nds::io {

namespace {

constexpr std::uint32_t kStoreMagic = 0x4453444eU;   // "NDSD"
constexpr std::uint32_t kParamsMagic = 0x5053444eU;  // "NDSP"
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("store: truncated file");
    return v;
}

void put_string(std::ofstream& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::ifstream& in) {
    const auto len = get<std::uint32_t>(in);
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw std::runtime_error("store: truncated string");
    return s;
}

}  // namespace

void write_store(const std::string& path, const sys::Dataset& ds) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("store: cannot open " + path + " for writing");

    std::uint64_t rows = 0;
    for (const auto& t : ds.trajectories) rows += t.times.size();

    put(out, kStoreMagic);
    put(out, kVersion);
    put_string(out, ds.system);
    put(out, ds.dt);
    put(out, ds.seed);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.state_dim));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.control_dim));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.trajectories.size()));
    put(out, rows);

    for (const auto& traj : ds.trajectories) {
        const auto len = traj.times.size();
        for (std::size_t k = 0; k < len; ++k) {
            put(out, traj.id);
            put(out, traj.times[k]);
            out.write(reinterpret_cast<const char*>(traj.states.data() +
                                                    k * static_cast<std::size_t>(ds.state_dim)),
                      static_cast<std::streamsize>(sizeof(double) *
                                                   static_cast<std::size_t>(ds.state_dim)));
            if (ds.control_dim > 0)
                out.write(
                    reinterpret_cast<const char*>(traj.controls.data() +
                                                  k * static_cast<std::size_t>(ds.control_dim)),
                    static_cast<std::streamsize>(sizeof(double) *
                                                 static_cast<std::size_t>(ds.control_dim)));
        }
    }
    if (!out) throw std::runtime_error("store: write failed for " + path);
    out.close();

    std::ofstream side(path + ".params", std::ios::binary | std::ios::trunc);
    if (!side) throw std::runtime_error("store: cannot open params sidecar for " + path);
    put(side, kParamsMagic);
    put(side, kVersion);
    put<std::uint32_t>(side, static_cast<std::uint32_t>(ds.param_dim));
    put<std::uint32_t>(side, static_cast<std::uint32_t>(ds.trajectories.size()));
    for (const auto& traj : ds.trajectories) {
        put(side, traj.id);
        side.write(reinterpret_cast<const char*>(traj.params.data()),
                   static_cast<std::streamsize>(sizeof(double) *
                                                static_cast<std::size_t>(ds.param_dim)));
    }
    if (!side) throw std::runtime_error("store: params sidecar write failed for " + path);
}

sys::Dataset read_store(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("store: cannot open " + path);
    if (get<std::uint32_t>(in) != kStoreMagic)
        throw std::runtime_error("store: bad magic in " + path);
    if (get<std::uint32_t>(in) != kVersion) throw std::runtime_error("store: unsupported version");

    sys::Dataset ds;
    ds.system = get_string(in);
    ds.dt = get<double>(in);
    ds.seed = get<std::uint64_t>(in);
    ds.state_dim = static_cast<int>(get<std::uint32_t>(in));
    ds.control_dim = static_cast<int>(get<std::uint32_t>(in));
    const auto traj_count = get<std::uint32_t>(in);
    const auto rows = get<std::uint64_t>(in);

    ds.trajectories.reserve(traj_count);
    sys::Trajectory cur;
    bool have_cur = false;
    std::vector<double> row(static_cast<std::size_t>(ds.state_dim + ds.control_dim));
    for (std::uint64_t r = 0; r < rows; ++r) {
        const auto id = get<std::uint64_t>(in);
        if (!have_cur || id != cur.id) {
            if (have_cur) ds.trajectories.push_back(std::move(cur));
            cur = sys::Trajectory{};
            cur.id = id;
            cur.seed = derive_stream(ds.seed, id);
            have_cur = true;
        }
        cur.times.push_back(get<double>(in));
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(sizeof(double) * row.size()));
        if (!in) throw std::runtime_error("store: truncated row in " + path);
        cur.states.insert(cur.states.end(), row.begin(), row.begin() + ds.state_dim);
        cur.controls.insert(cur.controls.end(), row.begin() + ds.state_dim, row.end());
    }
    if (have_cur) ds.trajectories.push_back(std::move(cur));
    if (ds.trajectories.size() != traj_count)
        throw std::runtime_error("store: trajectory count mismatch in " + path);

    const std::string side_path = path + ".params";
    if (file_exists(side_path)) {
        std::ifstream side(side_path, std::ios::binary);
        if (get<std::uint32_t>(side) != kParamsMagic)
            throw std::runtime_error("store: bad params magic for " + path);
        if (get<std::uint32_t>(side) != kVersion)
            throw std::runtime_error("store: unsupported params version");
        ds.param_dim = static_cast<int>(get<std::uint32_t>(side));
        const auto count = get<std::uint32_t>(side);
        // rows are written in trajectory order; fall back to a scan if ids moved
        std::size_t cursor = 0;
        for (std::uint32_t k = 0; k < count; ++k) {
            const auto id = get<std::uint64_t>(side);
            std::vector<double> phi(static_cast<std::size_t>(ds.param_dim));
            for (auto& v : phi) v = get<double>(side);
            if (cursor < ds.trajectories.size() && ds.trajectories[cursor].id == id) {
                ds.trajectories[cursor].params = std::move(phi);
                ++cursor;
                continue;
            }
            for (auto& traj : ds.trajectories)
                if (traj.id == id) {
                    traj.params = std::move(phi);
                    break;
                }
        }
    }
    return ds;
}

void export_csv(const std::string& path, const sys::Dataset& ds) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("store: cannot open " + path + " for writing");
    out << "id,t";
    for (int i = 0; i < ds.state_dim; ++i) out << ",x" << i;
    for (int i = 0; i < ds.control_dim; ++i) out << ",u" << i;
    out << "\n";
    out.precision(17);
    for (const auto& traj : ds.trajectories) {
        for (std::size_t k = 0; k < traj.times.size(); ++k) {
            out << traj.id << "," << traj.times[k];
            for (int i = 0; i < ds.state_dim; ++i)
                out << ","
                    << traj.states[k * static_cast<std::size_t>(ds.state_dim) +
                                   static_cast<std::size_t>(i)];
            for (int i = 0; i < ds.control_dim; ++i)
                out << ","
                    << traj.controls[k * static_cast<std::size_t>(ds.control_dim) +
                                     static_cast<std::size_t>(i)];
            out << "\n";
        }
    }
}

std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("store: cannot hash missing file " + path);
    ContentHash h;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        h.update(buf, static_cast<std::size_t>(in.gcount()));
    }
    return h.hex();
}

bool file_exists(const std::string& path) { return std::filesystem::exists(path); }

}  // namespace nds::io
