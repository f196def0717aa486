#include "relcl/rng.hpp"

#include <cmath>

namespace relcl {

namespace {

uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

} // namespace

void Rng::reseed(uint64_t seed) {
    seed_ = seed;
    uint64_t sm = seed;
    for (auto& s : state_) s = splitmix64(sm);
    have_spare_normal_ = false;
}

uint64_t Rng::next_u64() {
    // xoshiro256**
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

uint64_t Rng::uniform_int(uint64_t n) {
    const uint64_t threshold = (0ULL - n) % n;
    for (;;) {
        uint64_t r = next_u64();
        if (r >= threshold) return r % n;
    }
}

double Rng::normal(double mean, double stddev) {
    if (have_spare_normal_) {
        have_spare_normal_ = false;
        return mean + stddev * spare_normal_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_normal_ = r * std::sin(theta);
    have_spare_normal_ = true;
    return mean + stddev * r * std::cos(theta);
}

uint64_t Rng::derive_seed(uint64_t seed, std::string_view stream_name) {
    // FNV-1a over the name, folded into the seed through splitmix steps.
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : stream_name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    uint64_t x = seed ^ h;
    splitmix64(x);
    return splitmix64(x);
}

} // namespace relcl
