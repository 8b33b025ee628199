#include "fas/io/hash.hpp"

#include <fstream>
#include <stdexcept>
#include <vector>

namespace fas::io {

uint64_t fnv1a_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("fnv1a_file: cannot open " + path);
    Fnv1a h;
    std::vector<char> buf(1 << 16);
    while (f) {
        f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        h.update(buf.data(), static_cast<size_t>(f.gcount()));
    }
    return h.digest();
}

std::string fingerprint_file(const std::string& path) {
    return Fnv1a::hex(fnv1a_file(path));
}

} // namespace fas::io
