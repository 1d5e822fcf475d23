#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace nestmc {

namespace detail {

// SplitMix64 finalizer, used for seeding and stream-key mixing.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_keys(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t s = a;
    std::uint64_t h = splitmix64(s);
    s ^= b + 0x9e3779b97f4a7c15ULL;
    h ^= splitmix64(s);
    s ^= c + 0xbf58476d1ce4e5b9ULL;
    h ^= splitmix64(s);
    return h;
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

// 128-layer ziggurat tables for the standard normal (Marsaglia & Tsang).
struct ZigguratTable {
    static constexpr int layers = 128;
    static constexpr double tail_start = 3.442619855899;
    std::array<double, layers + 1> x; // strip right edges, x[1] = tail_start, x[layers] = 0
    std::array<double, layers + 1> f; // exp(-x^2/2) at the edges

    ZigguratTable() {
        const double v = 9.91256303526217e-3; // per-strip area of exp(-x^2/2)
        const double r = tail_start;
        x[1] = r;
        x[0] = v / std::exp(-0.5 * r * r); // virtual edge of the base strip
        for (int i = 2; i <= layers; ++i) {
            double prev = x[i - 1];
            double arg = v / prev + std::exp(-0.5 * prev * prev);
            x[i] = (arg >= 1.0) ? 0.0 : std::sqrt(-2.0 * std::log(arg));
        }
        x[layers] = 0.0;
        for (int i = 0; i <= layers; ++i)
            f[i] = std::exp(-0.5 * x[i] * x[i]);
    }

    static const ZigguratTable& get() {
        static const ZigguratTable table;
        return table;
    }
};

} // namespace detail

/// Splittable random stream: xoshiro256++ engine whose state is derived from a
/// 64-bit stream identity. `derive(a, b)` is a pure function of the identity
/// and the keys, independent of how many draws were consumed, so workers that
/// derive per-scenario streams from the same parent produce identical results
/// regardless of scheduling.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) { init(detail::mix_keys(seed, 0, 0)); }

    RngStream derive(std::uint64_t a, std::uint64_t b = 0) const {
        RngStream child;
        child.init(detail::mix_keys(id_, a, b));
        return child;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = detail::rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = detail::rotl(s_[3], 45);
        return result;
    }

    /// Uniform on the open interval (0, 1).
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via the ziggurat method.
    double normal() {
        const auto& t = detail::ZigguratTable::get();
        for (;;) {
            const std::uint64_t bits = next_u64();
            const int idx = static_cast<int>(bits & 127u);
            // signed 53-bit fraction in (-1, 1)
            const std::int64_t mantissa = static_cast<std::int64_t>(bits >> 11) -
                                          (1LL << 52);
            const double u = static_cast<double>(mantissa) * 0x1.0p-52;
            const double z = u * t.x[idx];
            if (std::abs(z) < t.x[idx + 1])
                return z;
            if (idx == 0) {
                // tail beyond tail_start
                double xx, yy;
                do {
                    xx = -std::log(uniform()) / detail::ZigguratTable::tail_start;
                    yy = -std::log(uniform());
                } while (2.0 * yy < xx * xx);
                const double v = detail::ZigguratTable::tail_start + xx;
                return z > 0 ? v : -v;
            }
            if (t.f[idx] + uniform() * (t.f[idx + 1] - t.f[idx]) <
                std::exp(-0.5 * z * z))
                return z;
        }
    }

    std::uint64_t id() const noexcept { return id_; }

private:
    RngStream() = default;

    void init(std::uint64_t id) {
        id_ = id;
        std::uint64_t s = id;
        for (auto& word : s_)
            word = detail::splitmix64(s);
    }

    std::array<std::uint64_t, 4> s_{};
    std::uint64_t id_ = 0;
};

} // namespace nestmc
