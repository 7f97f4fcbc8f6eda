#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace splitner {

// Deterministic RNG used everywhere. The distributions are written out
// explicitly because std::uniform_real_distribution and friends are
// implementation-defined; mt19937_64 itself is pinned by the standard.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // [0, 1)
    double u01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

    // [0, n)
    int below(int n) { return static_cast<int>(gen_() % static_cast<uint64_t>(n)); }

    double normal() {
        // Box-Muller, one value per call, fixed formula
        double u1 = u01();
        double u2 = u01();
        while (u1 <= 0.0) u1 = u01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    int poisson(double lambda) {
        // Knuth's method; fine for the small lambdas used here
        double l = std::exp(-lambda);
        int k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= u01();
        } while (p > l);
        return k - 1;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = gen_() % i;
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace splitner
