#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace qdlab {

// Deterministic RNG wrapper. mt19937_64's output sequence is fixed by the
// standard; the distributions here are hand-rolled because the standard
// library's distribution objects are implementation-defined and we need
// bit-identical runs for a given seed on any platform.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t raw() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double unif() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double unif(double a, double b) { return a + (b - a) * unif(); }

    // Uniform integer in [lo, hi], rejection sampled to kill modulo bias.
    int64_t unif_int(int64_t lo, int64_t hi) {
        if (lo > hi) throw std::invalid_argument("unif_int: empty range");
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        if (span == 0) return static_cast<int64_t>(gen_());  // full 64-bit range
        uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        uint64_t x;
        do { x = gen_(); } while (x >= limit);
        return lo + static_cast<int64_t>(x % span);
    }

    // Box-Muller, no cached spare: two draws per call, fully reproducible.
    double gauss() {
        double u1 = 1.0 - unif();  // (0, 1]
        double u2 = unif();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    std::vector<double> unit_cube_point(int d) {
        std::vector<double> p(d);
        for (int i = 0; i < d; ++i) p[i] = unif();
        return p;
    }

    // Uniform direction on the unit sphere in R^d.
    std::vector<double> unit_vector(int d) {
        std::vector<double> v(d);
        double n2 = 0;
        do {
            n2 = 0;
            for (int i = 0; i < d; ++i) { v[i] = gauss(); n2 += v[i] * v[i]; }
        } while (n2 < 1e-30);
        double inv = 1.0 / std::sqrt(n2);
        for (auto& x : v) x *= inv;
        return v;
    }

    // Derives an independent stream; used to hand workers disjoint seed space.
    Rng spawn() { return Rng(gen_() ^ 0x9e3779b97f4a7c15ull); }

private:
    std::mt19937_64 gen_;
};

} // namespace qdlab
