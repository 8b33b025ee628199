#pragma once

#include <map>
#include <string>

#include "fas/core/tensor.hpp"

namespace fas::core {

// Self-describing binary container for model weights.
// Layout: magic "FASCKPT\0" | u32 version | u64 meta_len | meta (JSON, UTF-8)
//         | u32 n_tensors | { u32 name_len | name | u32 ndim | i64 dims... |
//           f64 data... }* | u64 fnv1a of everything before the trailer.
struct Checkpoint {
    std::string kind;          // e.g. "feature_extractor", "hiding_network"
    std::string meta_json;     // seed, config echo, validation stats
    std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

// Throws std::runtime_error on bad magic, unsupported version, or trailer
// hash mismatch (corruption).
Checkpoint load_checkpoint(const std::string& path);

} // namespace fas::core
