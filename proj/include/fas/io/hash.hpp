#pragma once

#include <cstdint>
#include <string>

namespace fas::io {

// FNV-1a 64-bit; used for content fingerprints in manifests and caches.
class Fnv1a {
public:
    void update(const void* data, size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < len; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ull;
        }
    }
    void update(const std::string& s) { update(s.data(), s.size()); }
    uint64_t digest() const { return h_; }

    static std::string hex(uint64_t h) {
        static const char* d = "0123456789abcdef";
        std::string s(16, '0');
        for (int i = 15; i >= 0; --i) {
            s[static_cast<size_t>(i)] = d[h & 0xf];
            h >>= 4;
        }
        return s;
    }

private:
    uint64_t h_ = 0xcbf29ce484222325ull;
};

uint64_t fnv1a_file(const std::string& path);
std::string fingerprint_file(const std::string& path); // hex digest

} // namespace fas::io
