#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rwpm/errors.hpp"
#include "rwpm/kernel_table.hpp"
#include "rwpm/pinning.hpp"
#include "rwpm/quadrature.hpp"
#include "rwpm/renewal.hpp"
#include "rwpm/rng.hpp"
#include "rwpm/stats.hpp"
#include "rwpm/walk.hpp"

namespace rwpm {

// Coarse-graining / change-of-measure parameters. The theorem-scale block
// length is astronomically large, so the lag band (A1, A2) stays configurable:
// the canonical A2 = L^{1/8} only exceeds A1 = e once L > e^8.
struct CoarseGrainConfig {
    double L = 0;
    double zeta = 3.0;
    double A1 = 2.718281828459045;
    double A2 = 0;
    double gamma = 0.75;
    double D_margin = 1.0; // threshold offset in units of rho^{-3/2} sqrt(L)

    double xi() const { return 1.0 - 1.0 / zeta; }

    static CoarseGrainConfig standard(double L, double zeta = 3.0) {
        CoarseGrainConfig c;
        c.L = L;
        c.zeta = zeta;
        c.A2 = std::pow(L, 0.125);
        c.validate();
        return c;
    }

    CoarseGrainConfig with_band(double a2) const {
        CoarseGrainConfig c = *this;
        c.A2 = a2;
        c.validate();
        return c;
    }

    void validate() const {
        if (!(L > 0)) throw ConfigError("coarse grain config: L must be > 0");
        if (!(zeta > 2.0)) throw ConfigError("coarse grain config: zeta must exceed 2 (xi > 1/2)");
        if (!(gamma > 2.0 / 3.0 && gamma < 1.0))
            throw ConfigError("coarse grain config: gamma must lie in (2/3, 1)");
        if (!(A1 > 1.0)) throw ConfigError("coarse grain config: A1 must exceed 1");
    }
};

namespace detail {

// 10-point Gauss-Legendre on [-1, 1]
inline constexpr double kGlNode[5] = {0.1488743389816312, 0.4333953941292472, 0.6794095682990244,
                                      0.8650633666889845, 0.9739065285171717};
inline constexpr double kGlWeight[5] = {0.2955242247147529, 0.2692667193099963, 0.2190863625159820,
                                        0.1494513491505806, 0.0666713443086881};

// integral over [lo, hi] of w(u) (log u)^{-xi}, w piecewise linear; composite
// Gauss-Legendre on chunks short enough that the rule is exact to machine
// precision for this analytic integrand
template <typename WFn>
double band_quadrature(double lo, double hi, double xi, WFn&& w) {
    if (!(hi > lo)) return 0.0;
    const int chunks = std::max(1, static_cast<int>(std::ceil((hi - lo) / 2.0)));
    const double step = (hi - lo) / chunks;
    double total = 0;
    for (int c = 0; c < chunks; ++c) {
        const double a = lo + c * step, b = a + step;
        const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
        double s = 0;
        for (int k = 0; k < 5; ++k) {
            const double up = mid + half * kGlNode[k];
            const double um = mid - half * kGlNode[k];
            s += kGlWeight[k] * (w(up) * std::pow(std::log(up), -xi) + w(um) * std::pow(std::log(um), -xi));
        }
        total += half * s;
    }
    return total;
}

// overlap length of r in [p1,p2] with r+u in [q1,q2]
inline double overlap_len(double u, double p1, double p2, double q1, double q2) {
    const double lo = std::max(p1, q1 - u), hi = std::min(p2, q2 - u);
    return hi > lo ? hi - lo : 0.0;
}

// integral over the lag band of overlap(u) (log u)^{-xi} for one rectangle
inline double rectangle_band_integral(double p1, double p2, double q1, double q2, double A1,
                                      double A2, double xi) {
    const double lo = std::max(A1, q1 - p2);
    const double hi = std::min(A2, q2 - p1);
    if (!(hi > lo)) return 0.0;
    // overlap(u) is piecewise linear with breakpoints at q1-p1 and q2-p2
    double breaks[4] = {lo, std::min(q1 - p1, q2 - p2), std::max(q1 - p1, q2 - p2), hi};
    double total = 0;
    double a = lo;
    for (int k = 1; k < 4; ++k) {
        const double b = std::min(std::max(breaks[k], a), hi);
        if (b > a)
            total += band_quadrature(a, b, xi, [&](double u) { return overlap_len(u, p1, p2, q1, q2); });
        a = b;
    }
    return total;
}

} // namespace detail

// Constancy intervals of a piecewise-constant path, indexed by site.
template <int D>
struct ConstancyIntervals {
    std::vector<double> start, end;
    std::vector<Site<D>> site;
    std::map<Site<D>, std::vector<int>> by_site;

    static ConstancyIntervals from_path(const WalkPath<D>& Y) {
        ConstancyIntervals iv;
        const std::size_t n = Y.jump_times.size();
        iv.start.reserve(n + 1);
        iv.end.reserve(n + 1);
        iv.site.reserve(n + 1);
        double cur = 0;
        for (std::size_t k = 0; k <= n; ++k) {
            const double stop = k < n ? Y.jump_times[k] : Y.horizon;
            iv.start.push_back(cur);
            iv.end.push_back(stop);
            iv.site.push_back(Y.sites[k]);
            cur = stop;
        }
        for (int k = 0; k < static_cast<int>(iv.start.size()); ++k) iv.by_site[iv.site[k]].push_back(k);
        return iv;
    }
};

// Weighted self-coincidence integral over r in [r_lo, r_hi], s in [s_lo, s_hi]
// restricted to the lag band A1 < s - r < A2:
//   integral of 1{Y_r = Y_s} (log(s-r))^{-xi} dr ds.
// Exact rectangle decomposition: paths are piecewise constant, so the domain
// splits into rectangles of equal-site constancy intervals; each is reduced
// to a 1d lag integral and evaluated by composite Gauss-Legendre.
template <int D>
double coincidence_band_integral(const ConstancyIntervals<D>& iv, double r_lo, double r_hi,
                                 double s_lo, double s_hi, double A1, double A2, double xi) {
    if (!(A2 > A1)) return 0.0;
    double total = 0;
    for (const auto& [site, group] : iv.by_site) {
        for (int a : group) {
            const double p1 = std::max(iv.start[static_cast<std::size_t>(a)], r_lo);
            const double p2 = std::min(iv.end[static_cast<std::size_t>(a)], r_hi);
            if (!(p2 > p1)) continue;
            for (int b : group) {
                const double q1 = std::max(iv.start[static_cast<std::size_t>(b)], s_lo);
                const double q2 = std::min(iv.end[static_cast<std::size_t>(b)], s_hi);
                if (!(q2 > q1)) continue;
                if (q1 - p2 >= A2) {
                    if (iv.start[static_cast<std::size_t>(b)] > p2 + A2) break; // groups are time-sorted
                    continue;
                }
                if (q2 - p1 <= A1) continue;
                total += detail::rectangle_band_integral(p1, p2, q1, q2, A1, A2, xi);
            }
        }
    }
    return total;
}

// H_L: band-weighted self-intersection statistic of the disorder on [0, L].
template <int D>
double h_functional(const WalkPath<D>& Y, const CoarseGrainConfig& cfg) {
    if (Y.horizon < cfg.L * (1.0 - 1e-12)) throw OutOfHorizon("h_functional: path shorter than L");
    const auto iv = ConstancyIntervals<D>::from_path(Y);
    return coincidence_band_integral(iv, 0.0, cfg.L, 0.0, cfg.L, cfg.A1, cfg.A2, cfg.xi());
}

// E[H_L] = int_{A1}^{min(A2,L)} (L-u) p_{rho u}(0) (log u)^{-xi} du
template <int D>
double h_mean_exact(const CoarseGrainConfig& cfg, double rho, const KernelTable<D>& table) {
    const double hi = std::min(cfg.A2, cfg.L);
    if (!(hi > cfg.A1)) return 0.0;
    const double xi = cfg.xi();
    return integrate(
        [&](double u) {
            const double p = rho > 0 ? table.p0(rho * u) : 1.0;
            return (cfg.L - u) * p * std::pow(std::log(u), -xi);
        },
        cfg.A1, hi, 1e-10 * std::max(1.0, cfg.L));
}

struct VarianceScalingReport {
    double var_L = 0;
    double var_2L = 0;
    double ratio = 0;
    double coefficient = 0; // Var * rho^3 / L at the larger L
    bool pass = false;
};

// Empirical variance of H_L at L and 2L; linear-in-L scaling puts the ratio
// in a [1.3, 2.5] window.
template <int D>
VarianceScalingReport h_variance_check(const CoarseGrainConfig& cfg, double rho,
                                       const KernelTable<D>& table, int n, RngStream& stream) {
    if (n < 1000) throw NumericsError("h_variance_check: need n >= 1000");
    const CoarseGrainConfig cfg2 = [&] {
        CoarseGrainConfig c = cfg;
        c.L = 2.0 * cfg.L;
        return c;
    }();
    RunningStat at_L, at_2L;
    for (int k = 0; k < n; ++k) {
        const WalkPath<D> Y = sample_path(table.kernel(), rho, 2.0 * cfg.L, stream);
        at_2L.add(h_functional(Y, cfg2));
        at_L.add(coincidence_band_integral(ConstancyIntervals<D>::from_path(Y), 0.0, cfg.L, 0.0,
                                           cfg.L, cfg.A1, cfg.A2, cfg.xi()));
    }
    VarianceScalingReport r;
    r.var_L = at_L.variance();
    r.var_2L = at_2L.variance();
    r.ratio = r.var_2L / r.var_L;
    r.coefficient = r.var_2L * std::pow(rho, 3.0) / (2.0 * cfg.L);
    r.pass = r.ratio >= 1.3 && r.ratio <= 2.5;
    return r;
}

// Disorder path tilted by the renewal weights W across the intervals of a
// renewal configuration; untilted outside [sigma_0, sigma_k].
template <int D>
struct TiltedDisorder {
    RenewalSample sigma;
    WalkPath<D> path;
    std::vector<double> acceptance; // per tilted interval
};

// Rejection sampler: propose an untilted increment path over each renewal
// interval and accept with probability p_dt(y)/p_dt(0) <= 1, the exact
// envelope given by the return-probability maximality of the kernel.
template <int D>
TiltedDisorder<D> sample_tilted_disorder(const RenewalSample& sigma, const CoarseGrainConfig& cfg,
                                         double rho, const KernelTable<D>& table, double horizon,
                                         RngStream& stream) {
    if (sigma.epochs.empty() || sigma.origin < 0 || sigma.epochs.back() > cfg.L)
        throw NumericsError("sample_tilted_disorder: renewal epochs must lie in [0, L]");
    if (horizon < cfg.L) throw NumericsError("sample_tilted_disorder: horizon below L");

    TiltedDisorder<D> out;
    out.sigma = sigma;
    WalkPath<D>& path = out.path;
    path.kernel_hash = table.kernel().hash;
    path.rate = rho;
    path.horizon = horizon;
    Site<D> pos{};
    path.sites.push_back(pos);

    auto append_segment = [&](const WalkPath<D>& seg, double offset) {
        for (std::size_t k = 0; k < seg.jump_times.size(); ++k) {
            pos = pos + (seg.sites[k + 1] - seg.sites[k]);
            path.jump_times.push_back(offset + seg.jump_times[k]);
            path.sites.push_back(pos);
        }
    };

    // untilted head [0, sigma_0]
    if (sigma.origin > 0) append_segment(sample_path(table.kernel(), rho, sigma.origin, stream), 0.0);

    for (std::size_t i = 1; i < sigma.epochs.size(); ++i) {
        const double dt = sigma.epochs[i] - sigma.epochs[i - 1];
        if (!(dt > 0)) throw NumericsError("sample_tilted_disorder: nonpositive renewal gap");
        const double p_dt_0 = table.p0(dt);
        int attempts = 0;
        while (true) {
            ++attempts;
            const WalkPath<D> cand = sample_path(table.kernel(), rho, dt, stream);
            const double ratio = table.p(dt, cand.sites.back()) / p_dt_0;
            if (ratio > 1.0 + 1e-9)
                throw EnvelopeViolated("tilted sampler: accept probability " + std::to_string(ratio));
            if (stream.uniform() <= ratio) {
                append_segment(cand, sigma.epochs[i - 1]);
                break;
            }
            if (attempts > 1000000) throw NumericsError("tilted sampler: acceptance stalled");
        }
        out.acceptance.push_back(1.0 / attempts);
    }

    // untilted tail [sigma_k, horizon]
    const double tail = horizon - sigma.epochs.back();
    if (tail > 0) append_segment(sample_path(table.kernel(), rho, tail, stream), sigma.epochs.back());
    return out;
}

// Bookkeeping identity splitting H_L(Y^sigma) into intra-interval and
// boundary-crossing pieces; returns |lhs - rhs|, which is pure arithmetic
// and must vanish to quadrature precision.
template <int D>
double h_decomposition_residual(const TiltedDisorder<D>& tilted, const CoarseGrainConfig& cfg) {
    const auto iv = ConstancyIntervals<D>::from_path(tilted.path);
    const double A1 = cfg.A1, A2 = cfg.A2, xi = cfg.xi();
    const double horizon = tilted.path.horizon;
    const auto& ep = tilted.sigma.epochs;
    const double a = tilted.sigma.origin, b = ep.back();

    const double h_total = coincidence_band_integral(iv, 0.0, cfg.L, 0.0, cfg.L, A1, A2, xi);

    double rhs = 0;
    rhs += coincidence_band_integral(iv, 0.0, a, 0.0, a, A1, A2, xi);       // head interior
    rhs += coincidence_band_integral(iv, b, cfg.L, b, cfg.L, A1, A2, xi);   // tail interior
    rhs += coincidence_band_integral(iv, 0.0, a, a, horizon, A1, A2, xi);   // head exterior
    for (std::size_t i = 1; i < ep.size(); ++i) {
        rhs += coincidence_band_integral(iv, ep[i - 1], ep[i], ep[i - 1], ep[i], A1, A2, xi);
        rhs += coincidence_band_integral(iv, ep[i - 1], ep[i], ep[i], horizon, A1, A2, xi);
    }
    rhs -= coincidence_band_integral(iv, 0.0, b, cfg.L, horizon, A1, A2, xi); // overshoot correction

    return std::fabs(h_total - rhs);
}

// Exact mean shift of the intra-interval statistic under the tilt, for a
// single renewal interval of length dt:
//   int (dt-u) p_{rho u}(0) [p_{(1+rho)dt - rho u}(0) - p_{(1+rho)dt}(0)]
//       / p_{(1+rho)dt}(0) (log u)^{-xi} du over the band.
template <int D>
double h_int_gap_exact(double dt, const CoarseGrainConfig& cfg, double rho,
                       const KernelTable<D>& table) {
    const double hi = std::min(cfg.A2, dt);
    if (!(hi > cfg.A1) || rho <= 0) return 0.0;
    const double xi = cfg.xi();
    const double denom = table.p0((1.0 + rho) * dt);
    return integrate(
        [&](double u) {
            const double shifted = table.p0((1.0 + rho) * dt - rho * u);
            return (dt - u) * table.p0(rho * u) * (shifted - denom) / denom *
                   std::pow(std::log(u), -xi);
        },
        cfg.A1, hi, 1e-12 * std::max(1.0, dt));
}

// Exact untilted mean of the boundary-crossing statistic for interval [s,t]:
// int min(u, t-s) p_{rho u}(0) (log u)^{-xi} du over the band.
template <int D>
double h_ext_mean_untilted(double s, double t, const CoarseGrainConfig& cfg, double rho,
                           const KernelTable<D>& table) {
    if (!(cfg.A2 > cfg.A1)) return 0.0;
    const double xi = cfg.xi();
    return integrate(
        [&](double u) {
            const double p = rho > 0 ? table.p0(rho * u) : 1.0;
            return std::min(u, t - s) * p * std::pow(std::log(u), -xi);
        },
        cfg.A1, cfg.A2, 1e-12 * std::max(1.0, t - s));
}

struct ExtGapInterval {
    double lo = 0, hi = 0;
    double tilted_mean = 0;
    double tilted_se = 0;
    double untilted_mean = 0;
    double diff = 0;
    bool pass = false;
};

struct ExtGapReport {
    std::vector<ExtGapInterval> intervals;
    bool pass = true;
};

// Sign check: the tilt cannot lower the boundary-crossing mean. MC over
// tilted paths against the exact untilted mean, per renewal interval.
template <int D>
ExtGapReport h_ext_gap_sign_check(const RenewalSample& sigma, const CoarseGrainConfig& cfg,
                                  double rho, const KernelTable<D>& table, int n,
                                  RngStream& stream) {
    if (n < 100) throw NumericsError("h_ext_gap_sign_check: need n >= 100");
    const double horizon = cfg.L + cfg.A2 + 1.0;
    const std::size_t k = sigma.epochs.size() - 1;
    std::vector<RunningStat> acc(k);
    for (int rep = 0; rep < n; ++rep) {
        const TiltedDisorder<D> td = sample_tilted_disorder(sigma, cfg, rho, table, horizon, stream);
        const auto iv = ConstancyIntervals<D>::from_path(td.path);
        for (std::size_t i = 1; i <= k; ++i)
            acc[i - 1].add(coincidence_band_integral(iv, sigma.epochs[i - 1], sigma.epochs[i],
                                                     sigma.epochs[i], horizon, cfg.A1, cfg.A2,
                                                     cfg.xi()));
    }
    ExtGapReport rep;
    for (std::size_t i = 1; i <= k; ++i) {
        ExtGapInterval e;
        e.lo = sigma.epochs[i - 1];
        e.hi = sigma.epochs[i];
        e.tilted_mean = acc[i - 1].mean();
        e.tilted_se = acc[i - 1].std_err();
        e.untilted_mean = h_ext_mean_untilted(e.lo, e.hi, cfg, rho, table);
        e.diff = e.tilted_mean - e.untilted_mean;
        e.pass = e.diff > -3.0 * e.tilted_se;
        rep.pass = rep.pass && e.pass;
        rep.intervals.push_back(e);
    }
    return rep;
}

// Two-level test function: 1 below the threshold, eps_M above.
inline double test_function_f(double h_value, double threshold_m, double eps_m) {
    return h_value <= threshold_m ? 1.0 : eps_m;
}

// Threshold from the mean plus the D rho^{-3/2} sqrt(L) margin.
inline double h_threshold(const CoarseGrainConfig& cfg, double mean_h, double rho) {
    return mean_h + cfg.D_margin * std::pow(rho, -1.5) * std::sqrt(cfg.L);
}

struct ChangeOfMeasureReport {
    double threshold_m = 0;
    double tail_prob = 0; // empirical P(H > M) used for eps_M
    double eps_m = 0;
    double moment = 0; // fresh-sample E[f^{-gamma/(1-gamma)}]
    double moment_se = 0;
    bool pass = false;
};

// eps_M = P(H > M)^{(1-gamma)/gamma} makes E[f^{-gamma/(1-gamma)}] =
// P(H <= M) + 1 <= 2 an algebraic identity; checked on a fresh sample.
template <int D>
ChangeOfMeasureReport change_of_measure_check(const CoarseGrainConfig& cfg, double rho,
                                              const KernelTable<D>& table, double threshold_m,
                                              int n_calibrate, int n_fresh, RngStream& stream) {
    int above = 0;
    for (int i = 0; i < n_calibrate; ++i) {
        const WalkPath<D> Y = sample_path(table.kernel(), rho, cfg.L, stream);
        if (h_functional(Y, cfg) > threshold_m) ++above;
    }
    ChangeOfMeasureReport rep;
    rep.threshold_m = threshold_m;
    rep.tail_prob = static_cast<double>(above) / n_calibrate;
    if (rep.tail_prob == 0.0) throw NumericsError("change_of_measure_check: empty tail, lower M");
    rep.eps_m = std::pow(rep.tail_prob, (1.0 - cfg.gamma) / cfg.gamma);
    const double power = -cfg.gamma / (1.0 - cfg.gamma);
    RunningStat acc;
    for (int i = 0; i < n_fresh; ++i) {
        const WalkPath<D> Y = sample_path(table.kernel(), rho, cfg.L, stream);
        const double f = test_function_f(h_functional(Y, cfg), threshold_m, rep.eps_m);
        acc.add(std::pow(f, power));
    }
    rep.moment = acc.mean();
    rep.moment_se = acc.std_err();
    rep.pass = rep.moment <= 2.0 + 3.0 * rep.moment_se;
    return rep;
}

// E[(Z^z_{t,Y})^gamma] ladder at t, 2t, 4t from nested solves of one grid.
template <int D>
std::vector<Estimate> fractional_moment_ladder(const PinningModel<D>& model, double z, double gamma,
                                               double t, double h, int n_disorder,
                                               RngStream& stream) {
    if (!(gamma > 2.0 / 3.0 && gamma < 1.0))
        throw NumericsError("fractional_moment_ladder: gamma must lie in (2/3, 1)");
    RunningStat s1, s2, s4;
    for (int k = 0; k < n_disorder; ++k) {
        const WalkPath<D> Y = sample_path(model.table->kernel(), model.rho, 4.0 * t, stream);
        const DisorderGrid<D> grid = DisorderGrid<D>::make(Y, h, 4.0 * t);
        const VolterraResult res = volterra_partition(model, z, grid);
        s1.add(std::exp(gamma * res.log_z_at(t)));
        s2.add(std::exp(gamma * res.log_z_at(2.0 * t)));
        s4.add(std::exp(gamma * res.log_z));
    }
    return {s1.estimate(), s2.estimate(), s4.estimate()};
}

struct CoarseGrainSplitReport {
    double z_full = 0;
    double z_sum = 0;
    double residual_rel = 0;
    double frac_lhs = 0; // (sum_I Z^{z,I})^gamma
    double frac_rhs = 0; // sum_I (Z^{z,I})^gamma
    std::vector<double> pattern_values; // indexed by subset bitmask - 1
    bool partition_ok = false;
    bool subadditive_ok = false;
};

// Exact partition of Z over block-visit patterns at matched grid, plus the
// fractional-moment subadditivity on the same instance.
template <int D>
CoarseGrainSplitReport coarse_grain_split_check(const PinningModel<D>& model, double z,
                                                const WalkPath<D>& Y, int m, double block_len,
                                                double h, double gamma = 0.75) {
    if (m < 1 || m > 4) throw NumericsError("coarse_grain_split_check: m must be in [1,4]");
    const double t = m * block_len;
    const DisorderGrid<D> grid = DisorderGrid<D>::make(Y, h, t);
    const VolterraResult full = volterra_partition(model, z, grid);
    const double z_full = std::exp(full.log_z);

    CoarseGrainSplitReport rep;
    rep.z_full = z_full;
    double sum = 1.0; // empty pattern
    double frac_sum = 1.0;
    for (int mask = 1; mask < (1 << m); ++mask) {
        std::vector<int> pattern;
        for (int b = 0; b < m; ++b)
            if (mask & (1 << b)) pattern.push_back(b + 1);
        const VolterraResult res = volterra_partition_pattern(model, z, grid, block_len, pattern);
        const double value = std::exp(res.log_z);
        rep.pattern_values.push_back(value);
        sum += value;
        frac_sum += std::pow(value, gamma);
    }
    rep.z_sum = sum;
    rep.residual_rel = std::fabs(sum - z_full) / z_full;
    rep.frac_lhs = std::pow(sum, gamma);
    rep.frac_rhs = frac_sum;
    rep.partition_ok = rep.residual_rel < 1e-6;
    rep.subadditive_ok = rep.frac_lhs <= rep.frac_rhs + 1e-9;
    return rep;
}

// Block-pattern weight P_L(I): nested integral of K gaps against the renewal
// density P over the pattern's blocks, on a uniform grid of step h.
// P must be tabulated on the same step up to m_max * block_len.
template <typename Law>
double p_pattern_weight(const Law& law, const std::vector<double>& renewal_density, double h,
                        double block_len, const std::vector<int>& pattern) {
    if (pattern.empty()) return 1.0;
    const int per_block = static_cast<int>(std::llround(block_len / h));
    if (std::fabs(per_block * h - block_len) > 1e-9 * block_len)
        throw GridTooCoarse("p_pattern_weight: block length must be a multiple of the step");
    const int n_needed = pattern.back() * per_block;
    if (n_needed >= static_cast<int>(renewal_density.size()))
        throw GridTooCoarse("p_pattern_weight: renewal density table too short");

    // F holds the db_{j-1}-integrated weight at the previous block's nodes
    std::vector<std::pair<int, double>> F{{0, 1.0}};
    for (int j = 0; j < static_cast<int>(pattern.size()); ++j) {
        const int blk = pattern[static_cast<std::size_t>(j)];
        const int g_lo = (blk - 1) * per_block + 1, g_hi = blk * per_block;
        std::vector<double> entry(static_cast<std::size_t>(g_hi - g_lo) + 1, 0.0);
        for (int g = g_lo; g <= g_hi; ++g) {
            double s = 0;
            for (const auto& [gp, wp] : F) {
                if (gp >= g) break;
                s += wp * law.interval_mass((g - gp - 1) * h, (g - gp) * h);
            }
            entry[static_cast<std::size_t>(g - g_lo)] = s;
        }
        std::vector<std::pair<int, double>> next;
        next.reserve(entry.size());
        for (int g = g_lo; g <= g_hi; ++g) {
            double s = 0;
            for (int ga = g_lo; ga < g; ++ga)
                s += entry[static_cast<std::size_t>(ga - g_lo)] *
                     renewal_density[static_cast<std::size_t>(g - ga)] * h;
            next.emplace_back(g, s);
        }
        F = std::move(next);
    }
    double total = 0;
    for (const auto& [g, w] : F) {
        (void)g;
        total += w * h;
    }
    return total;
}

struct ZSumLargeDevReport {
    Estimate mu_mc;
    double mu_quadrature = 0;
    double band_lo = 0, band_hi = 0;
    std::int64_t n_sum = 0;      // summands per replica (0: tail part skipped)
    double threshold = 0;        // mu_hat / 4 per summand
    double tail_prob = -1;       // empirical P(sum < threshold * n_sum)
};

// Truncated-gap statistic Z_i = sqrt(D_i)/(log D_i)^xi on 2e < D_i < L^{1/8}:
// mean by MC and quadrature, and the lower-tail probability of the sum of
// h sqrt(L) copies at threshold mu/4 when that many draws are feasible.
template <typename Law>
ZSumLargeDevReport z_sum_large_dev(const Law& law, double L, double xi, double h_mult,
                                   int n_draws, int n_reps, RngStream& stream,
                                   std::int64_t n_sum_cap = 2000000) {
    ZSumLargeDevReport rep;
    rep.band_lo = 2.0 * 2.718281828459045;
    rep.band_hi = std::pow(L, 0.125);

    auto z_of = [&](double gap) -> double {
        if (gap <= rep.band_lo || gap >= rep.band_hi) return 0.0;
        return std::sqrt(gap) * std::pow(std::log(gap), -xi);
    };

    RunningStat mu;
    for (int i = 0; i < n_draws; ++i) mu.add(z_of(law.sample(stream)));
    rep.mu_mc = mu.estimate();

    if (rep.band_hi > rep.band_lo)
        rep.mu_quadrature = integrate(
            [&](double u) { return std::sqrt(u) * std::pow(std::log(u), -xi) * law.density(u); },
            rep.band_lo, rep.band_hi, 1e-12);

    const double n_sum_exact = h_mult * std::sqrt(L);
    if (n_sum_exact <= static_cast<double>(n_sum_cap)) {
        rep.n_sum = static_cast<std::int64_t>(std::ceil(n_sum_exact));
        rep.threshold = 0.25 * rep.mu_mc.value;
        int below = 0;
        for (int r = 0; r < n_reps; ++r) {
            double sum = 0;
            for (std::int64_t i = 0; i < rep.n_sum; ++i) sum += z_of(law.sample(stream));
            if (sum < rep.threshold * static_cast<double>(rep.n_sum)) ++below;
        }
        rep.tail_prob = static_cast<double>(below) / n_reps;
    }
    return rep;
}

} // namespace rwpm
