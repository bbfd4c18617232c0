#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace siedd {

// splitmix64 finalizer; used to derive independent streams from (seed, stream).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// mt19937_64 with hand-rolled draw mappings. std::uniform_real_distribution and
// std::shuffle are implementation-defined; these mappings are pinned so the same
// seed reproduces the same bits on any standard library.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [lo, hi) with 24-bit granularity
    float uniform(float lo, float hi) {
        float f = static_cast<float>(gen_() >> 40) * 0x1p-24f;
        return lo + (hi - lo) * f;
    }

    // exact uniform over [0, n) by rejection
    std::uint64_t bounded(std::uint64_t n) {
        if (n <= 1) return 0;
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace siedd
