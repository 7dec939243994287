#ifndef RMSEC_RNG_HPP
#define RMSEC_RNG_HPP

#include <cstdint>

namespace rmsec {

/// Deterministic splitmix64 generator.
///
/// Results are reproducible across platforms and standard libraries, which
/// std::uniform_int_distribution does not guarantee. All randomness in the
/// project flows through this class so that record files are byte-identical
/// for a given seed regardless of worker count or toolchain.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    int next_int(int n) {
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return static_cast<int>(x % bound);
    }

    bool chance(double p) { return next_double() < p; }

private:
    std::uint64_t state_;
};

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
} // namespace detail

/// Derives an independent child seed from a base seed and up to three stream
/// tags (e.g. agent id, episode index, purpose). Same inputs, same output.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a = 0,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t s = detail::mix64(base + 0x9e3779b97f4a7c15ULL);
    s = detail::mix64(s ^ (a + 0xbf58476d1ce4e5b9ULL));
    s = detail::mix64(s ^ (b + 0x94d049bb133111ebULL));
    s = detail::mix64(s ^ (c + 0xd6e8feb86659fd93ULL));
    return s;
}

} // namespace rmsec

#endif
