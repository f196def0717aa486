#pragma once
// Self-contained seeded PRNG (xoshiro256** seeded via splitmix64).
// The standard library distributions are implementation-defined, so every
// randomized operation in this project goes through this class to keep
// runs byte-reproducible. Named sub-streams let stages derive independent
// seeds from one global seed and still be re-runnable in isolation.

#include <cstdint>
#include <string_view>
#include <vector>

namespace relcl {

class Rng {
public:
    explicit Rng(uint64_t seed) { reseed(seed); }

    void reseed(uint64_t seed);

    uint64_t next_u64();

    // Uniform double in [0, 1) with 53 random bits.
    double uniform();

    // Uniform integer in [0, n), unbiased (rejection sampling). n must be > 0.
    uint64_t uniform_int(uint64_t n);

    // Box-Muller from two uniforms.
    double normal(double mean = 0.0, double stddev = 1.0);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Deterministic derived stream: hash(seed, name). Independent streams for
    // independent pipeline stages.
    static uint64_t derive_seed(uint64_t seed, std::string_view stream_name);

    Rng stream(std::string_view name) const { return Rng(derive_seed(seed_, name)); }

    uint64_t seed() const { return seed_; }

private:
    uint64_t seed_ = 0;
    uint64_t state_[4] = {};
    bool have_spare_normal_ = false;
    double spare_normal_ = 0.0;
};

} // namespace relcl
