#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace dp3d {

// splitmix64 step, used to derive independent seeds from a base seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return mix_seed(mix_seed(a) ^ b);
}

// mt19937_64 engine with hand-rolled distributions. std:: distributions are
// implementation-defined, so sampling goes through these to keep seeded runs
// reproducible everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // unbiased integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) {
        std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // [0, 1), 53-bit resolution
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform01();
        } while (u1 <= 0.0);
        u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[next_below(i)]);
        }
    }

    Rng fork(std::uint64_t stream) { return Rng(mix_seed(next_u64(), stream)); }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace dp3d
