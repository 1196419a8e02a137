#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace rwpm {

// splitmix64, used to expand (seed, stream) pairs into engine state.
inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256** with explicit state; deterministic across platforms, unlike
// the std:: distributions. Streams are derived from (master_seed, stream_id)
// so that parallel tasks reproduce independent of scheduling.
class RngStream {
  public:
    RngStream() : RngStream(0, 0) {}
    RngStream(std::uint64_t master_seed, std::uint64_t stream_id) {
        std::uint64_t x = master_seed ^ (0x6a09e667f3bcc909ULL + stream_id * 0x9e3779b97f4a7c15ULL);
        for (auto& si : s_) si = splitmix64(x);
        if (s_[0] == 0 && s_[1] == 0 && s_[2] == 0 && s_[3] == 0) s_[0] = 1;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in (0,1); never returns 0 so -log(u) is safe
    double uniform() {
        const std::uint64_t r = next_u64() >> 11; // 53 bits
        double u = (static_cast<double>(r) + 0.5) * 0x1.0p-53;
        return u;
    }

    double exponential(double rate) { return -std::log(uniform()) / rate; }

    // integer in [0, n)
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t s_[4];
};

// Cumulative-weight sampler for a small discrete law (e.g. jump displacements).
class DiscreteSampler {
  public:
    DiscreteSampler() = default;
    explicit DiscreteSampler(const std::vector<double>& weights) {
        cum_.reserve(weights.size());
        double acc = 0;
        for (double w : weights) {
            acc += w;
            cum_.push_back(acc);
        }
        total_ = acc;
    }

    std::size_t sample(RngStream& rng) const {
        const double u = rng.uniform() * total_;
        std::size_t lo = 0, hi = cum_.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (cum_[mid] < u)
                lo = mid + 1;
            else
                hi = mid;
        }
        return lo;
    }

  private:
    std::vector<double> cum_;
    double total_ = 0;
};

} // namespace rwpm
