#pragma once
// Binary checkpoint: versioned header followed by named tensors with shape
// prefixes, little-endian 64-bit floats. Save/load round-trips bit-exactly.

#include <string>
#include <vector>

#include "relcl/encoder.hpp"

namespace relcl {

struct Checkpoint {
    uint32_t version = 1;
    uint32_t dim = 0, blocks = 0, heads = 0, ff_mult = 0, max_len = 0, vocab = 0;
    std::vector<std::pair<std::string, Tensor>> tensors; // insertion order preserved

    void add(const std::string& name, Tensor t);
    const Tensor* find(const std::string& name) const;
    bool has(const std::string& name) const { return find(name) != nullptr; }

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    EncoderConfig encoder_config() const;
};

Checkpoint make_checkpoint(EncoderParams& params);
EncoderParams encoder_from_checkpoint(const Checkpoint& ck);

} // namespace relcl
