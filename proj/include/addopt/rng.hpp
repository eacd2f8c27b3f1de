#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace addopt {

// Deterministic random source. The engine (mt19937_64) is fully specified by
// the standard; the distribution transforms are implemented here because the
// std distributions are implementation-defined and would break bit-for-bit
// reproducibility across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller. No spare caching: two uniforms per draw.
    double normal() {
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // Unbiased integer in [0, n). n must be positive.
    std::uint64_t uniform_below(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t x = next_u64();
            if (x >= threshold) return x % n;
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive the seed of a named sub-stream. Components are hashed so that
    // e.g. the simulation stream for (s, draw) never collides with the CV
    // fold stream of the same base seed.
    static std::uint64_t derive(std::uint64_t base, std::string_view stream,
                                std::uint64_t a = 0, std::uint64_t b = 0) {
        std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the stream name
        for (unsigned char c : stream) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        h = mix(h ^ base);
        h = mix(h ^ a);
        h = mix(h ^ (b + 0x9e3779b97f4a7c15ULL));
        return h;
    }

private:
    // splitmix64 finalizer
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::mt19937_64 engine_;
};

}  // namespace addopt
