#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace distenc {

// FNV-1a, 64-bit. Used for checkpoint trailers and run-manifest input digests.
class Fnv1a64 {
public:
    void update(const void* data, size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < len; ++i) {
            hash_ ^= p[i];
            hash_ *= 0x100000001B3ull;
        }
    }

    uint64_t value() const { return hash_; }

private:
    uint64_t hash_ = 0xCBF29CE484222325ull;
};

inline uint64_t fnv1a64(const void* data, size_t len) {
    Fnv1a64 h;
    h.update(data, len);
    return h.value();
}

inline uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

}  // namespace distenc
