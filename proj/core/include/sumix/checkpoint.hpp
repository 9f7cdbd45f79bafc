#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sumix/tensor.hpp"

namespace sumix {

// Self-describing container: magic "SMXCKPT1", format version, a JSON
// metadata blob (config echo, epoch, rng bookkeeping), then named tensors
// with explicit little-endian doubles. Tensor order is preserved.
struct Checkpoint {
    std::string metadata_json;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const;
    void add(std::string name, Tensor t) { tensors.emplace_back(std::move(name), std::move(t)); }
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sumix
