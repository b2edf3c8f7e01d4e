#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace clara {

// Deterministic RNG built on mt19937_64. The standard distributions are
// implementation-defined, so uniform/normal draws are derived from the raw
// bit stream directly; output is identical across platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed), seed_mix_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Modulo bias is irrelevant at these scales
    // but the result must be platform-stable, which this is.
    std::int64_t uniform_int(std::int64_t n) {
        return static_cast<std::int64_t>(gen_() % static_cast<std::uint64_t>(n));
    }

    // Box-Muller without the cached spare, so the draw count per call is fixed.
    double normal() {
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    std::vector<double> normal_vec(std::size_t n, double stddev) {
        std::vector<double> out(n);
        for (auto& v : out) v = stddev * normal();
        return out;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(static_cast<std::int64_t>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive an independent stream, e.g. one per document index.
    Rng fork(std::uint64_t stream) const {
        std::uint64_t z = seed_mix_ + 0x9e3779b97f4a7c15ull * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return Rng(z ^ (z >> 31));
    }

private:
    std::mt19937_64 gen_;
    std::uint64_t seed_mix_ = 0;
};

}  // namespace clara
