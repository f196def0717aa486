#include "relcl/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace relcl {

namespace {

constexpr char kMagic[8] = {'R', 'E', 'L', 'C', 'L', 'C', 'K', '1'};

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint load: truncated file reading " + what);
    return v;
}

} // namespace

void Checkpoint::add(const std::string& name, Tensor t) {
    tensors.emplace_back(name, std::move(t));
}

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint save: cannot open " + path);
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, version);
    write_pod(out, dim);
    write_pod(out, blocks);
    write_pod(out, heads);
    write_pod(out, ff_mult);
    write_pod(out, max_len);
    write_pod(out, vocab);
    write_pod(out, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        write_pod(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(out, static_cast<uint32_t>(t.ndim()));
        for (size_t d : t.shape) write_pod(out, static_cast<uint64_t>(d));
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("checkpoint save: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint load: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("checkpoint load: bad magic in " + path);
    Checkpoint ck;
    ck.version = read_pod<uint32_t>(in, "version");
    if (ck.version != 1)
        throw std::runtime_error("checkpoint load: unsupported version " + std::to_string(ck.version));
    ck.dim = read_pod<uint32_t>(in, "dim");
    ck.blocks = read_pod<uint32_t>(in, "blocks");
    ck.heads = read_pod<uint32_t>(in, "heads");
    ck.ff_mult = read_pod<uint32_t>(in, "ff_mult");
    ck.max_len = read_pod<uint32_t>(in, "max_len");
    ck.vocab = read_pod<uint32_t>(in, "vocab");
    const auto count = read_pod<uint32_t>(in, "tensor count");
    for (uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<uint32_t>(in, "name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw std::runtime_error("checkpoint load: truncated tensor name");
        const auto ndim = read_pod<uint32_t>(in, "ndim");
        std::vector<size_t> shape(ndim);
        size_t numel = 1;
        for (auto& d : shape) {
            d = static_cast<size_t>(read_pod<uint64_t>(in, "dim size"));
            numel *= d;
        }
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(numel * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint load: truncated data for tensor " + name);
        ck.add(name, std::move(t));
    }
    return ck;
}

EncoderConfig Checkpoint::encoder_config() const {
    EncoderConfig cfg;
    cfg.dim = dim;
    cfg.blocks = blocks;
    cfg.heads = heads;
    cfg.ff_mult = ff_mult;
    cfg.max_len = max_len;
    cfg.vocab_size = vocab;
    return cfg;
}

Checkpoint make_checkpoint(EncoderParams& params) {
    Checkpoint ck;
    ck.dim = static_cast<uint32_t>(params.cfg.dim);
    ck.blocks = static_cast<uint32_t>(params.cfg.blocks);
    ck.heads = static_cast<uint32_t>(params.cfg.heads);
    ck.ff_mult = static_cast<uint32_t>(params.cfg.ff_mult);
    ck.max_len = static_cast<uint32_t>(params.cfg.max_len);
    ck.vocab = static_cast<uint32_t>(params.cfg.vocab_size);
    for (auto& [name, t] : params.named_params()) ck.add(name, *t);
    return ck;
}

EncoderParams encoder_from_checkpoint(const Checkpoint& ck) {
    EncoderParams p = EncoderParams::init(ck.encoder_config(), /*seed=*/0);
    for (auto& [name, t] : p.named_params()) {
        const Tensor* src = ck.find(name);
        if (!src) throw std::runtime_error("checkpoint: missing tensor " + name);
        if (src->shape != t->shape)
            throw std::runtime_error("checkpoint: shape mismatch for tensor " + name);
        *t = *src;
    }
    return p;
}

} // namespace relcl
