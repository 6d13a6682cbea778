#pragma once

#include <cmath>
#include <cstdint>

namespace dpts {

namespace detail {

// SplitMix64 finalizer. Used both as the counter-mode output function and
// for key derivation, so all randomness is pure 64-bit integer arithmetic.
inline uint64_t mix64(uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
}

constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

}  // namespace detail

// Counter-based generator: output i = mix64(key + i*golden). Identical
// (seed, stream) pairs give identical sequences on every platform, and
// distinct streams are independent, so batch work can split freely
// without coordination. State is two words, trivially serializable.
class SeededRng {
  public:
    SeededRng() : SeededRng(0, 0) {}

    SeededRng(uint64_t seed, uint64_t stream)
        : key_(derive_key(seed, stream)), counter_(0) {}

    // Child generator for an independent substream.
    SeededRng fork(uint64_t substream) const {
        SeededRng r;
        r.key_ = detail::mix64(key_ ^ detail::mix64(substream * 0xd6e8feb86659fd93ULL + 0xa0761d6478bd642fULL));
        r.counter_ = 0;
        return r;
    }

    uint64_t next_u64() { return detail::mix64(key_ + (counter_++) * detail::kGolden); }

    // Uniform in [0,1), 53 random bits.
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in (0,1), never exactly 0 or 1.
    double next_open() { return (double(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    // Box-Muller, cosine branch only; consumes exactly two draws.
    double next_gaussian() {
        double u1 = next_open();
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Uniform integer in [0, n).
    uint64_t next_below(uint64_t n) {
        // Multiply-shift; bias is negligible (n << 2^64) for our uses but we
        // keep the rejection loop so draws are exactly uniform.
        uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    uint64_t counter() const { return counter_; }
    void set_counter(uint64_t c) { counter_ = c; }
    uint64_t key() const { return key_; }

  private:
    static uint64_t derive_key(uint64_t seed, uint64_t stream) {
        return detail::mix64(detail::mix64(seed + detail::kGolden) ^
                             detail::mix64(stream * 0x2545f4914f6cdd1dULL + 0x9fb21c651e98df25ULL));
    }

    uint64_t key_;
    uint64_t counter_;
};

}  // namespace dpts
