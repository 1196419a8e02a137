#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "rwpm/errors.hpp"
#include "rwpm/kernel_table.hpp"
#include "rwpm/quadrature.hpp"

namespace rwpm {

struct GreenResult {
    double value = 0;      // integral of p_s(0) ds over [0, inf)
    double partial = 0;    // partial sum of return powers
    double tail = 0;       // estimated tail contribution
    double err_bound = 0;  // bound on the absolute error of `value`
    int terms = 0;
};

namespace detail {

// Sweep of return powers q^{*m}(0) for m = 0..m_max (no field storage).
template <int D>
std::vector<double> return_power_sweep(const JumpKernel<D>& kernel, int m_max, double trim_total) {
    std::vector<double> ret(static_cast<std::size_t>(m_max) + 1, 0.0);
    ret[0] = 1.0;
    const int m_sweep = (m_max + 1) / 2;
    const double budget = trim_total / std::max(1, m_sweep);
    LatticeField<D> prev = LatticeField<D>::delta();
    LatticeField<D> cur;
    for (int m = 1; m <= m_sweep; ++m) {
        cur = convolve_once(prev, kernel);
        trim_field(cur, budget);
        ret[static_cast<std::size_t>(m)] = cur.origin();
        double same = 0, cross = 0;
        cur.for_each([&](const Site<D>& x, double v) {
            same += v * v;
            cross += v * prev.at(x);
        });
        if (2 * m <= m_max) ret[static_cast<std::size_t>(2 * m)] = same;
        if (2 * m - 1 <= m_max) ret[static_cast<std::size_t>(2 * m - 1)] = cross;
        prev = std::move(cur);
    }
    return ret;
}

} // namespace detail

// Green function: integral of p_s(0) ds = (sum_m q^{*m}(0)) / rate for a
// transient walk. Partial sums plus a tail estimated from the local-CLT decay
// q^{*m}(0) ~ c m^{-d/2}; c is fitted on a trailing window whose first/second
// half drift bounds the error. Grows the series until the bound meets rel_tol.
template <int D>
GreenResult green_function_full(const JumpKernel<D>& kernel, double rate, double rel_tol = 1e-4,
                                int m_limit = 20000) {
    static_assert(D >= 1);
    if (D <= 2) throw RecurrentWalk("green function diverges for d <= 2");
    if (!(rate > 0)) throw NumericsError("green_function: rate must be > 0");

    int m_max = 256;
    while (true) {
        const auto ret = detail::return_power_sweep(kernel, m_max, 1e-11);
        double partial = 0;
        for (double v : ret) partial += v;

        // Bipartite kernels return only at even powers; fit on the stride
        // that actually carries mass.
        int stride = 2;
        for (int m = m_max; m > m_max - 8; --m)
            if (m % 2 == 1 && ret[static_cast<std::size_t>(m)] > 1e-30) stride = 1;
        const int top = stride == 2 ? m_max - (m_max % 2) : m_max;

        // Fit w(m) = q^{*m}(0) m^{d/2} = c_inf + b/m on two trailing
        // half-windows of the strided subsequence (local-CLT approach is 1/m),
        // then sum the fitted tail over the same stride.
        const double s = 0.5 * D;
        const int half = 12;
        double c1 = 0, c2 = 0, m1 = 0, m2 = 0;
        for (int i = 0; i < half; ++i) {
            const int hi_idx = top - stride * i;
            const int lo_idx = top - stride * (half + i);
            c2 += ret[static_cast<std::size_t>(hi_idx)] * std::pow(hi_idx, s);
            c1 += ret[static_cast<std::size_t>(lo_idx)] * std::pow(lo_idx, s);
            m2 += hi_idx;
            m1 += lo_idx;
        }
        c1 /= half;
        c2 /= half;
        m1 /= half;
        m2 /= half;
        const double b = (c1 - c2) / (1.0 / m1 - 1.0 / m2);
        const double c_inf = c2 - b / m2;
        // sum over m = top + stride, top + 2 stride, ...: with m = stride k,
        // sum (c_inf + b/m) m^{-s} = stride^{-s} [c_inf S(s) + (b/stride) S(s+1)]
        const double k0 = static_cast<double>(top) / stride;
        const double tail_sum = std::pow(stride, -s) * zeta_tail(s, k0);
        const double tail_sum2 = std::pow(stride, -s - 1.0) * zeta_tail(s + 1.0, k0);
        const double tail = c_inf * tail_sum + b * tail_sum2;
        const double err = 0.25 * std::fabs(b) * tail_sum2 +
                           std::fabs(partial + tail) * 1e-9 + 1e-11;
        const double total = partial + tail;

        if (err <= 0.5 * rel_tol * total) {
            GreenResult g;
            g.value = total / rate;
            g.partial = partial / rate;
            g.tail = tail / rate;
            g.err_bound = err / rate;
            g.terms = m_max;
            return g;
        }
        if (m_max >= m_limit)
            throw TailBoundFailed("green_function: tolerance unreachable at m_max=" +
                                  std::to_string(m_max));
        m_max *= 2;
    }
}

template <int D>
double green_function(const JumpKernel<D>& kernel, double rate, double rel_tol = 1e-4) {
    return green_function_full(kernel, rate, rel_tol).value;
}

// (2 pi rate t)^{d/2} sqrt(det Q) p_t(0); approaches 1 as t grows.
template <int D>
double lclt_ratio(const KernelTable<D>& table, double t) {
    if (!(t > 0)) throw NumericsError("lclt_ratio: t must be > 0");
    const double tau = table.rate() * t;
    const double det = table.kernel().det_q();
    return std::pow(2.0 * M_PI * tau, 0.5 * D) * std::sqrt(det) * table.p0(t);
}

// sum_x p_a(x) p_b(x) p_c(x), exact over the box carrying >= 1 - tol of each mass
template <int D>
double triple_return_sum(const KernelTable<D>& table, double a, double b, double c) {
    const LatticeField<D> fa = table.field_at(a);
    const LatticeField<D> fb = table.field_at(b);
    const LatticeField<D> fc = table.field_at(c);
    double s = 0;
    fa.for_each([&](const Site<D>& x, double va) {
        if (va == 0) return;
        s += va * fb.at(x) * fc.at(x);
    });
    return s;
}

// p_t(0) - p_{t+r}(0); strictly positive for r > 0
template <int D>
double kernel_diff(const KernelTable<D>& table, double t, double r) {
    return table.p0(t) - table.p0(t + r);
}

// p_t(0) p_{t+a+b}(0) - p_{t+a}(0) p_{t+b}(0)
template <int D>
double second_diff(const KernelTable<D>& table, double t, double a, double b) {
    return table.p0(t) * table.p0(t + a + b) - table.p0(t + a) * table.p0(t + b);
}

// p_t(0) - p_{t+a}(0) - p_{t+b}(0) + p_{t+a+b}(0), nonnegative
template <int D>
double second_diff_positivity(const KernelTable<D>& table, double t, double a, double b) {
    return table.p0(t) - table.p0(t + a) - table.p0(t + b) + table.p0(t + a + b);
}

namespace detail {

// dense convolution of two trimmed fields
template <int D>
LatticeField<D> convolve_fields(const LatticeField<D>& f, const LatticeField<D>& g) {
    LatticeField<D> out;
    out.radius = f.radius + g.radius;
    out.lost_mass = f.lost_mass + g.lost_mass;
    out.values.assign(LatticeField<D>::cube_size(out.radius), 0.0);
    f.for_each([&](const Site<D>& x, double vf) {
        if (vf == 0) return;
        g.for_each([&](const Site<D>& y, double vg) {
            if (vg == 0) return;
            out.values[out.index(x + y)] += vf * vg;
        });
    });
    return out;
}

// shrink a probability field to the shells holding >= 1 - eps of its own mass
template <int D>
void compact_mass(LatticeField<D>& f, double eps) {
    trim_field(f, eps);
}

} // namespace detail

struct BridgeCompareResult {
    double lhs = 0; // return probability of the sum of bridge marginals
    double rhs = 0; // p_{sum a_i}(0)
};

// Bridge marginals Z_i ~ X_{a_i} conditioned on X_{a_i+b_i} = 0, with mass
// p_{a_i}(x) p_{b_i}(x) / p_{a_i+b_i}(0). Computes P(Z_1+...+Z_n = 0) by boxed
// lattice convolution against p_{sum a_i}(0). Truncation only lowers lhs, so a
// strict lhs > rhs survives it.
template <int D>
BridgeCompareResult bridge_return_compare(const KernelTable<D>& table,
                                          const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.empty()) throw NumericsError("bridge_return_compare: empty pair list");
    LatticeField<D> acc;
    double total_a = 0;
    bool first = true;
    for (const auto& [a, b] : pairs) {
        if (!(a > 0) || !(b > 0)) throw NumericsError("bridge_return_compare: times must be > 0");
        total_a += a;
        LatticeField<D> fa = table.field_at(a);
        const LatticeField<D> fb = table.field_at(b);
        const double denom = table.p0(a + b);
        LatticeField<D> z;
        z.radius = std::min(fa.radius, fb.radius);
        z.values.assign(LatticeField<D>::cube_size(z.radius), 0.0);
        z.for_each([&](const Site<D>& x, double) { z.values[z.index(x)] = fa.at(x) * fb.at(x) / denom; });
        const double mass = z.total_mass();
        if (mass < 1.0 - 1e-6)
            throw BoxTooSmall("bridge marginal mass " + std::to_string(mass) + " too low");
        detail::compact_mass(z, 1e-9);
        if (first) {
            acc = std::move(z);
            first = false;
        } else {
            acc = detail::convolve_fields(acc, z);
        }
    }
    BridgeCompareResult r;
    Site<D> origin{};
    r.lhs = acc.at(origin);
    r.rhs = table.p0(total_a);
    return r;
}

} // namespace rwpm
