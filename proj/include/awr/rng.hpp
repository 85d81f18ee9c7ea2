#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace awr {

// Counter-based random stream: value[i] = mix(key, i). Streams derived by
// keying never touch global state, so any draw is reproducible from
// (seed, domain, index) alone and substreams can be handed out per item.
class RandomStream {
public:
    explicit RandomStream(uint64_t key, uint64_t counter = 0) : key_(key), counter_(counter) {}

    static uint64_t mix(uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static uint64_t hash_str(std::string_view s) {
        uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    static RandomStream keyed(uint64_t seed, std::string_view domain, uint64_t a = 0, uint64_t b = 0) {
        uint64_t k = mix(seed ^ hash_str(domain));
        k = mix(k ^ (a * 0xd1342543de82ef95ULL));
        k = mix(k ^ (b * 0xaf251af3b0f025b5ULL));
        return RandomStream(k);
    }

    RandomStream substream(uint64_t index) const {
        return RandomStream(mix(key_ ^ (index * 0x9e3779b97f4a7c15ULL) ^ 0x5851f42d4c957f2dULL));
    }

    uint64_t next_u64() { return mix(key_ ^ (counter_++ * 0x2545f4914f6cdd1dULL)); }

    // Uniform in [0, 1) from the top 53 bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    int uniform_int(int n) { return n <= 0 ? 0 : static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

    // Box-Muller; consumes two uniforms per value, no cached state.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    uint64_t key() const { return key_; }
    uint64_t counter() const { return counter_; }
    void set_counter(uint64_t c) { counter_ = c; }

private:
    uint64_t key_ = 0;
    uint64_t counter_ = 0;
};

}  // namespace awr
