#pragma once

#include <cstdint>
#include <cstring>
#include <string>

namespace nds {

/// Streaming FNV-1a content hash. Used to fingerprint dataset files so a
/// training run can refuse stale inputs.
class ContentHash {
public:
    void update(const void* data, std::size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            state_ ^= p[i];
            state_ *= 0x100000001b3ULL;
        }
    }
    void update_double(double v) { update(&v, sizeof(v)); }
    void update_u64(std::uint64_t v) { update(&v, sizeof(v)); }
    void update_string(const std::string& s) { update(s.data(), s.size()); }

    std::uint64_t digest() const { return state_; }

    std::string hex() const {
        static const char* k = "0123456789abcdef";
        std::string out(16, '0');
        std::uint64_t v = state_;
        for (int i = 15; i >= 0; --i) {
            out[static_cast<std::size_t>(i)] = k[v & 0xF];
            v >>= 4;
        }
        return out;
    }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace nds
