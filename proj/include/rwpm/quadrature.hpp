#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

namespace rwpm {

namespace detail {

template <typename F>
double adaptive_simpson_step(F& f, double a, double b, double fa, double fm, double fb,
                             double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::fabs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return adaptive_simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

} // namespace detail

// Adaptive Simpson on [a,b] with absolute tolerance.
template <typename F>
double integrate(F&& f, double a, double b, double abs_tol = 1e-10, int max_depth = 40) {
    if (!(b > a)) return 0.0;
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::adaptive_simpson_step(f, a, b, fa, fm, fb, whole, abs_tol, max_depth);
}

// sum_{n > N} n^{-s} for s > 1, via Euler-Maclaurin.
inline double zeta_tail(double s, double n) {
    if (s <= 1.0) throw std::invalid_argument("zeta_tail: needs s > 1");
    // sum a few terms explicitly, then the asymptotic remainder
    double sum = 0;
    double m = n + 1;
    for (int i = 0; i < 32; ++i, m += 1.0) sum += std::pow(m, -s);
    const double M = m - 0.5; // continue from x = m with E-M at lower limit m
    // sum_{k >= m} k^{-s} ~ m^{1-s}/(s-1) + m^{-s}/2 + s m^{-s-1}/12 - ...
    (void)M;
    const double t1 = std::pow(m, 1.0 - s) / (s - 1.0);
    const double t2 = 0.5 * std::pow(m, -s);
    const double t3 = s / 12.0 * std::pow(m, -s - 1.0);
    return sum + t1 + t2 + t3;
}

} // namespace rwpm
