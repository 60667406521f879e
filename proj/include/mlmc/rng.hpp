#pragma once

#include <cmath>
#include <cstdint>

namespace mlmc {

namespace detail {

// splitmix64 (Steele/Lea/Flood); used only to expand seeds into state.
inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

} // namespace detail

/// A reproducible random stream addressed by (seed, level, index).
///
/// xoshiro256++ seeded through splitmix64 from the stream address. Streams
/// with distinct addresses are statistically independent, construction is
/// O(1), and draws depend only on the address and the number of calls, never
/// on which worker executes them. This is what makes sampling results
/// independent of the parallel schedule.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t level, std::uint64_t index) {
        std::uint64_t x = seed;
        x ^= 0xd1342543de82ef95ULL * (level + 1);
        (void)detail::splitmix64(x);
        x ^= 0xaf251af3b0f025b5ULL * (index + 1);
        for (auto& word : state_) word = detail::splitmix64(x);
        if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
    }

    std::uint64_t next_u64() {
        std::uint64_t* s = state_;
        std::uint64_t result = detail::rotl64(s[0] + s[3], 23) + s[0];
        std::uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = detail::rotl64(s[3], 45);
        return result;
    }

    /// Uniform draw in the open interval (0, 1).
    double uniform() {
        // 53 random bits; offset by half an ulp so 0 is never returned.
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal draw (Box-Muller, one spare cached).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double angle = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(angle);
        have_spare_ = true;
        return r * std::cos(angle);
    }

private:
    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace mlmc
