#include "fas/core/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "fas/io/hash.hpp"

namespace fas::core {

namespace {
constexpr char kMagic[8] = {'F', 'A', 'S', 'C', 'K', 'P', 'T', '\0'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::string& buf, const T& v) {
    buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(const std::string& buf, size_t& off) {
    if (off + sizeof(T) > buf.size()) throw std::runtime_error("checkpoint: truncated");
    T v;
    std::memcpy(&v, buf.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}
} // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::string buf;
    buf.append(kMagic, sizeof(kMagic));
    put(buf, kVersion);
    // kind is folded into the meta header line for self-description
    std::string meta = "{\"kind\":\"" + ckpt.kind + "\",\"meta\":" +
                       (ckpt.meta_json.empty() ? "{}" : ckpt.meta_json) + "}";
    put(buf, static_cast<uint64_t>(meta.size()));
    buf.append(meta);
    put(buf, static_cast<uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        put(buf, static_cast<uint32_t>(name.size()));
        buf.append(name);
        put(buf, static_cast<uint32_t>(t.rank()));
        for (int64_t d : t.shape()) put(buf, d);
        buf.append(reinterpret_cast<const char*>(t.data()),
                   static_cast<size_t>(t.numel()) * sizeof(double));
    }
    io::Fnv1a h;
    h.update(buf.data(), buf.size());
    put(buf, h.digest());

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint: cannot open for write: " + path);
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string buf = ss.str();
    if (buf.size() < sizeof(kMagic) + sizeof(uint32_t) + sizeof(uint64_t))
        throw std::runtime_error("checkpoint: truncated: " + path);

    const size_t payload_len = buf.size() - sizeof(uint64_t);
    io::Fnv1a h;
    h.update(buf.data(), payload_len);
    uint64_t stored;
    std::memcpy(&stored, buf.data() + payload_len, sizeof(uint64_t));
    if (stored != h.digest())
        throw std::runtime_error("checkpoint: fingerprint mismatch (corrupt file): " + path);

    size_t off = 0;
    if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("checkpoint: bad magic: " + path);
    off += sizeof(kMagic);
    const auto version = take<uint32_t>(buf, off);
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

    const auto meta_len = take<uint64_t>(buf, off);
    if (off + meta_len > payload_len) throw std::runtime_error("checkpoint: truncated meta");
    const std::string header = buf.substr(off, meta_len);
    off += meta_len;

    Checkpoint ckpt;
    // minimal parse of {"kind":"...","meta":...}
    const std::string kind_key = "{\"kind\":\"";
    if (header.rfind(kind_key, 0) == 0) {
        const size_t end = header.find('"', kind_key.size());
        ckpt.kind = header.substr(kind_key.size(), end - kind_key.size());
        const std::string meta_key = "\"meta\":";
        const size_t mpos = header.find(meta_key, end);
        if (mpos != std::string::npos)
            ckpt.meta_json = header.substr(mpos + meta_key.size(),
                                           header.size() - (mpos + meta_key.size()) - 1);
    }

    const auto n_tensors = take<uint32_t>(buf, off);
    for (uint32_t i = 0; i < n_tensors; ++i) {
        const auto name_len = take<uint32_t>(buf, off);
        if (off + name_len > payload_len) throw std::runtime_error("checkpoint: truncated name");
        std::string name = buf.substr(off, name_len);
        off += name_len;
        const auto ndim = take<uint32_t>(buf, off);
        std::vector<int64_t> shape;
        for (uint32_t d = 0; d < ndim; ++d) shape.push_back(take<int64_t>(buf, off));
        const int64_t numel = Tensor::numel_of(shape);
        if (off + static_cast<size_t>(numel) * sizeof(double) > payload_len)
            throw std::runtime_error("checkpoint: truncated tensor data");
        std::vector<double> data(static_cast<size_t>(numel));
        std::memcpy(data.data(), buf.data() + off, data.size() * sizeof(double));
        off += data.size() * sizeof(double);
        ckpt.tensors.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    return ckpt;
}

} // namespace fas::core
