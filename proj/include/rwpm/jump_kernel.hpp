#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <deque>
#include <set>
#include <string>
#include <vector>

#include "rwpm/errors.hpp"

namespace rwpm {

template <int D>
using Site = std::array<int, static_cast<std::size_t>(D)>;

template <std::size_t N>
std::array<int, N> operator+(const std::array<int, N>& a, const std::array<int, N>& b) {
    std::array<int, N> r{};
    for (std::size_t i = 0; i < N; ++i) r[i] = a[i] + b[i];
    return r;
}

template <std::size_t N>
std::array<int, N> operator-(const std::array<int, N>& a, const std::array<int, N>& b) {
    std::array<int, N> r{};
    for (std::size_t i = 0; i < N; ++i) r[i] = a[i] - b[i];
    return r;
}

template <std::size_t N>
std::array<int, N> negate(const std::array<int, N>& a) {
    std::array<int, N> r{};
    for (std::size_t i = 0; i < N; ++i) r[i] = -a[i];
    return r;
}

template <std::size_t N>
bool is_origin(const std::array<int, N>& a) {
    for (std::size_t i = 0; i < N; ++i)
        if (a[i] != 0) return false;
    return true;
}

// Finite-support symmetric jump law q on Z^D with covariance Q. The single
// source of all kernel numerics downstream.
template <int D>
struct JumpKernel {
    std::vector<std::pair<Site<D>, double>> support;
    std::array<std::array<double, D>, D> covariance{}; // Q_ij = sum_x x_i x_j q(x)
    int support_radius = 0;                            // max |x|_inf over support
    std::uint64_t hash = 0;

    double det_q() const {
        // Gaussian elimination on a copy; D <= 4 so this is cheap.
        std::array<std::array<double, D>, D> a = covariance;
        double det = 1.0;
        for (int c = 0; c < D; ++c) {
            int piv = c;
            for (int r = c + 1; r < D; ++r)
                if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
            if (std::fabs(a[piv][c]) < 1e-300) return 0.0;
            if (piv != c) {
                std::swap(a[piv], a[c]);
                det = -det;
            }
            det *= a[c][c];
            for (int r = c + 1; r < D; ++r) {
                const double f = a[r][c] / a[c][c];
                for (int k = c; k < D; ++k) a[r][k] -= f * a[c][k];
            }
        }
        return det;
    }
};

namespace detail {

inline void hash_mix(std::uint64_t& h, std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
}

} // namespace detail

// Validates and builds a jump kernel from (site, prob) pairs.
// Rejects laws that fail normalization, symmetry, or irreducibility.
template <int D>
JumpKernel<D> build_kernel(const std::vector<std::pair<Site<D>, double>>& spec) {
    if (spec.empty()) throw NotAProbability("empty support");

    double sum = 0;
    std::set<Site<D>> seen;
    for (const auto& [site, p] : spec) {
        if (!(p > 0)) throw NotAProbability("support probability must be > 0");
        if (!seen.insert(site).second) throw NotAProbability("duplicate support site");
        sum += p;
    }

    // symmetry first: q(-x) = q(x)
    for (const auto& [site, p] : spec) {
        bool found = false;
        for (const auto& [other, p2] : spec) {
            if (other == negate(site)) {
                if (std::fabs(p - p2) > 1e-12) throw NotSymmetric("q(-x) != q(x)");
                found = true;
                break;
            }
        }
        if (!found) throw NotSymmetric("missing mirror site in support");
    }
    if (std::fabs(sum - 1.0) > 1e-12) throw NotAProbability("probabilities sum to " + std::to_string(sum));

    JumpKernel<D> k;
    k.support = spec;
    for (const auto& [site, p] : spec) {
        for (int i = 0; i < D; ++i) {
            k.support_radius = std::max(k.support_radius, std::abs(site[i]));
            for (int j = 0; j < D; ++j) k.covariance[i][j] += p * site[i] * site[j];
        }
    }

    // irreducibility: BFS on the lattice group generated by the support.
    // Every unit vector must be reachable by integer combinations of jumps.
    {
        const int box = 6 * D * std::max(1, k.support_radius) + 2;
        std::set<Site<D>> visited;
        std::deque<Site<D>> queue;
        Site<D> origin{};
        visited.insert(origin);
        queue.push_back(origin);
        int units_found = 0;
        std::array<bool, D> unit_seen{};
        while (!queue.empty() && units_found < D) {
            const Site<D> cur = queue.front();
            queue.pop_front();
            for (const auto& [step, p] : spec) {
                (void)p;
                Site<D> nxt = cur + step;
                bool inside = true;
                for (int i = 0; i < D; ++i)
                    if (std::abs(nxt[i]) > box) inside = false;
                if (!inside || !visited.insert(nxt).second) continue;
                queue.push_back(nxt);
                for (int i = 0; i < D; ++i) {
                    if (unit_seen[i]) continue;
                    bool is_unit = true;
                    for (int j = 0; j < D; ++j)
                        if (nxt[j] != (j == i ? 1 : 0)) is_unit = false;
                    if (is_unit) {
                        unit_seen[i] = true;
                        ++units_found;
                    }
                }
            }
        }
        if (units_found < D) throw NotIrreducible("support does not generate Z^d");
    }

    std::uint64_t h = 0xcbf29ce484222325ULL ^ static_cast<std::uint64_t>(D);
    for (const auto& [site, p] : spec) {
        for (int i = 0; i < D; ++i) detail::hash_mix(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(site[i])));
        std::uint64_t bits;
        static_assert(sizeof(double) == sizeof(bits));
        std::memcpy(&bits, &p, sizeof(bits));
        detail::hash_mix(h, bits);
    }
    k.hash = h;
    return k;
}

// Nearest-neighbor walk, q(+-e_i) = 1/(2D).
template <int D>
JumpKernel<D> simple_random_walk() {
    std::vector<std::pair<Site<D>, double>> spec;
    for (int i = 0; i < D; ++i) {
        Site<D> plus{}, minus{};
        plus[i] = 1;
        minus[i] = -1;
        spec.emplace_back(plus, 1.0 / (2 * D));
        spec.emplace_back(minus, 1.0 / (2 * D));
    }
    return build_kernel<D>(spec);
}

} // namespace rwpm
