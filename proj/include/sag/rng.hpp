#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace sag {

// Deterministic counter-based RNG. Every consumer derives its own stream
// from (seed, stream name), so no global state and no draw-order coupling
// between modules.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    static std::uint64_t derive(std::uint64_t seed, const std::string& stream) {
        std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
        for (char c : stream) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        return splitmix(seed ^ h);
    }

    static std::uint64_t derive(std::uint64_t seed, const std::string& stream, std::uint64_t index) {
        return splitmix(derive(seed, stream) + 0x9e3779b97f4a7c15ULL * (index + 1));
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return splitmix(state_);
    }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi_inclusive) {
        return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi_inclusive - lo + 1));
    }

    double normal(double mean = 0.0, double sigma = 1.0) {
        // Box-Muller; one value per call keeps the stream position simple.
        double u1 = uniform();
        const double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return mean + sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    int poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        // Knuth for small lambda, normal approximation beyond.
        if (lambda < 30.0) {
            const double limit = std::exp(-lambda);
            int k = 0;
            double prod = uniform();
            while (prod > limit) {
                ++k;
                prod *= uniform();
            }
            return k;
        }
        const double v = normal(lambda, std::sqrt(lambda));
        return v < 0.0 ? 0 : static_cast<int>(std::lround(v));
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (size_t i = items.size(); i > 1; --i) {
            const size_t j = next_u64() % i;
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    static std::uint64_t splitmix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

}  // namespace sag
