#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "rwpm/errors.hpp"
#include "rwpm/kernel_table.hpp"
#include "rwpm/quadrature.hpp"
#include "rwpm/rng.hpp"
#include "rwpm/stats.hpp"

namespace rwpm {

// Time grid for Volterra solves: uniform up to t_dense, then panels growing
// with t (local width ~ t/resolution), capped so long horizons stay O(n^2).
struct TimeGrid {
    std::vector<double> t;

    static TimeGrid uniform(double h, double horizon) {
        TimeGrid g;
        const int n = static_cast<int>(std::ceil(horizon / h - 1e-9));
        g.t.reserve(static_cast<std::size_t>(n) + 1);
        for (int i = 0; i <= n; ++i) g.t.push_back(std::min(horizon, i * h));
        return g;
    }

    static TimeGrid graded(double h, double t_dense, double horizon, double resolution = 200.0) {
        TimeGrid g;
        g.t.push_back(0.0);
        double cur = 0.0;
        while (cur < horizon - 1e-12) {
            const double step = cur < t_dense ? h : std::max(h, cur / resolution);
            cur = std::min(horizon, cur + step);
            g.t.push_back(cur);
        }
        return g;
    }

    // every panel halved; original nodes are preserved
    TimeGrid refined() const {
        TimeGrid g;
        g.t.reserve(t.size() * 2);
        g.t.push_back(t.front());
        for (std::size_t i = 1; i < t.size(); ++i) {
            g.t.push_back(0.5 * (t[i - 1] + t[i]));
            g.t.push_back(t[i]);
        }
        return g;
    }

    std::size_t size() const { return t.size(); }
};

// Hybrid waiting-time law of the pinning renewal process:
// K(t) = (1+rho) p_{(1+rho)t}(0) / G, evaluated exactly below T_switch and by
// the heavy-tail asymptotic c t^{-1-alpha} above it, with the tail constant
// renormalized so the total mass is exactly 1. Only d = 3 (alpha = 1/2) has
// the physical construction.
template <int D>
class PinningRenewalLaw {
    static_assert(D == 3, "pinning renewal law requires d = 3 (alpha = 1/2)");

  public:
    PinningRenewalLaw(std::shared_ptr<const KernelTable<D>> table, double rho, double green_value)
        : table_(std::move(table)), rho_(rho), G_(green_value) {
        if (!(rho_ >= 0)) throw NumericsError("renewal law: rho must be >= 0");
        if (std::fabs(table_->rate() - 1.0) > 1e-12)
            throw NumericsError("renewal law: expects a rate-1 kernel table");
        const double det = table_->kernel().det_q();
        c_K_ = 1.0 / (std::sqrt(det) * std::pow(2.0 * M_PI, 1.5) * std::sqrt(1.0 + rho_) * G_);

        find_t_switch();
        build_cdf();
    }

    double alpha() const { return 0.5; }
    double rho() const { return rho_; }
    double green() const { return G_; }
    double tail_constant() const { return c_K_; }          // local-CLT prediction
    double tail_constant_effective() const { return c_tail_; } // mass-normalized
    double t_switch() const { return T_switch_; }

    double density(double t) const {
        if (t < 0) return 0.0;
        if (t <= T_switch_) return exact_density(t);
        return c_tail_ * std::pow(t, -1.5);
    }

    double cdf(double t) const {
        if (t <= 0) return 0.0;
        if (t >= T_switch_) return 1.0 - 2.0 * c_tail_ / std::sqrt(t);
        const double x = t / cdf_step_;
        const std::size_t i = std::min(static_cast<std::size_t>(x), cdf_.size() - 2);
        const double frac = x - static_cast<double>(i);
        return cdf_[i] + frac * (cdf_[i + 1] - cdf_[i]);
    }

    double interval_mass(double a, double b) const { return cdf(b) - cdf(a); }

    // integral of u K(u) du over [0, t]
    double first_moment(double t) const {
        if (t <= 0) return 0.0;
        if (t >= T_switch_) {
            return fm_.back() + 2.0 * c_tail_ * (std::sqrt(t) - std::sqrt(T_switch_));
        }
        const double x = t / cdf_step_;
        const std::size_t i = std::min(static_cast<std::size_t>(x), fm_.size() - 2);
        const double frac = x - static_cast<double>(i);
        return fm_[i] + frac * (fm_[i + 1] - fm_[i]);
    }

    double interval_first_moment(double a, double b) const {
        return first_moment(b) - first_moment(a);
    }

    double sample(RngStream& stream) const {
        const double u = stream.uniform();
        const double cdf_star = 1.0 - 2.0 * c_tail_ / std::sqrt(T_switch_);
        if (u >= cdf_star) {
            const double tail = 1.0 - u; // = 2 c_tail / sqrt(t)
            const double root = 2.0 * c_tail_ / tail;
            return root * root;
        }
        // inverse CDF on the dense head table
        std::size_t lo = 0, hi = cdf_.size() - 1;
        while (lo + 1 < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (cdf_[mid] < u)
                lo = mid;
            else
                hi = mid;
        }
        const double c0 = cdf_[lo], c1 = cdf_[hi];
        const double frac = c1 > c0 ? (u - c0) / (c1 - c0) : 0.0;
        return (static_cast<double>(lo) + frac) * cdf_step_;
    }

  private:
    double exact_density(double t) const {
        return (1.0 + rho_) * table_->p0((1.0 + rho_) * t) / G_;
    }

    void find_t_switch() {
        const double t_max = table_->horizon() / (1.0 + rho_) / 1.7;
        double t = 4.0;
        while (t < t_max) {
            bool ok = true;
            for (double mult : {1.0, 1.3, 1.69}) {
                const double ratio = exact_density(t * mult) / (c_K_ * std::pow(t * mult, -1.5));
                if (std::fabs(ratio - 1.0) > 0.005) ok = false;
            }
            if (ok) {
                T_switch_ = t;
                return;
            }
            t *= 1.05;
        }
        throw NumericsError("renewal law: tail regime not reached within table horizon");
    }

    void build_cdf() {
        cdf_step_ = std::min(0.02, T_switch_ / 512.0);
        const std::size_t n = static_cast<std::size_t>(std::ceil(T_switch_ / cdf_step_)) + 1;
        T_switch_ = cdf_step_ * static_cast<double>(n - 1); // snap to the grid
        cdf_.assign(n, 0.0);
        // composite Simpson per panel
        double acc = 0;
        for (std::size_t i = 1; i < n; ++i) {
            const double a = (i - 1) * cdf_step_, b = i * cdf_step_;
            const double m = 0.5 * (a + b);
            acc += (b - a) / 6.0 * (exact_density(a) + 4.0 * exact_density(m) + exact_density(b));
            cdf_[i] = acc;
        }
        const double head = cdf_.back();
        if (head >= 1.0) throw NumericsError("renewal law: head mass >= 1, tail constant undefined");
        c_tail_ = 0.5 * (1.0 - head) * std::sqrt(T_switch_);
        if (std::fabs(c_tail_ / c_K_ - 1.0) > 0.02)
            throw NumericsError("renewal law: tail constant mismatch " + std::to_string(c_tail_ / c_K_));
    }

    std::shared_ptr<const KernelTable<D>> table_;
    double rho_;
    double G_;
    double c_K_ = 0;
    double c_tail_ = 0;
    double T_switch_ = 0;
    double cdf_step_ = 0;
    std::vector<double> cdf_;
};

// Synthetic heavy-tailed law K(t) = alpha t0^alpha (t0+t)^{-1-alpha} with
// closed-form CDF and inverse; used to exercise the renewal machinery at
// arbitrary alpha in (0,1).
class ParetoRenewalLaw {
  public:
    ParetoRenewalLaw(double alpha, double t0) : alpha_(alpha), t0_(t0) {
        if (!(alpha > 0 && alpha < 1)) throw UnsupportedAlpha("alpha must lie in (0,1)");
        if (!(t0 > 0)) throw NumericsError("t0 must be > 0");
    }

    double alpha() const { return alpha_; }
    double tail_constant() const { return alpha_ * std::pow(t0_, alpha_); }
    double tail_constant_effective() const { return tail_constant(); }
    double t_switch() const {
        // where (t0+t)^{-1-alpha} is within 0.5% of t^{-1-alpha}
        return t0_ * (1.0 + alpha_) / 0.005;
    }

    double density(double t) const {
        if (t < 0) return 0.0;
        return alpha_ * std::pow(t0_, alpha_) * std::pow(t0_ + t, -1.0 - alpha_);
    }

    double cdf(double t) const {
        if (t <= 0) return 0.0;
        return 1.0 - std::pow(t0_ / (t0_ + t), alpha_);
    }

    double interval_mass(double a, double b) const { return cdf(b) - cdf(a); }

    double sample(RngStream& stream) const {
        const double u = stream.uniform();
        return t0_ * (std::pow(1.0 - u, -1.0 / alpha_) - 1.0);
    }

  private:
    double alpha_;
    double t0_;
};

// Renewal density P = K + K*P by forward product integration: the kernel mass
// over each panel enters exactly through the CDF while P is interpolated
// trapezoidally across the panel, with the final panel implicit. A plain
// left-endpoint rule accumulates its local bias linearly over the critical
// solve (total kernel mass 1) and cannot hold the 1% halving criterion at
// long horizons; the trapezoid variant is second order in the panel width.
template <typename Law>
std::vector<double> renewal_function(const Law& law, const TimeGrid& grid) {
    const std::size_t n = grid.size();
    if (n < 2) throw GridTooCoarse("renewal_function: grid too small");
    std::vector<double> P(n, 0.0);
    P[0] = law.density(0.0);
    for (std::size_t i = 1; i < n; ++i) {
        const double ti = grid.t[i];
        double s = law.density(ti);
        for (std::size_t j = 0; j + 1 <= i; ++j) {
            const double w = law.interval_mass(ti - grid.t[j + 1], ti - grid.t[j]);
            s += 0.5 * P[j] * w;
            if (j + 1 < i) s += 0.5 * P[j + 1] * w;
        }
        const double w_last = law.interval_mass(0.0, ti - grid.t[i - 1]);
        P[i] = s / (1.0 - 0.5 * w_last);
    }
    return P;
}

// Same solve with a halving-step consistency requirement at the final node.
template <typename Law>
std::vector<double> renewal_function_checked(const Law& law, const TimeGrid& grid,
                                             double rel_tol = 0.01) {
    const auto coarse = renewal_function(law, grid);
    const auto fine = renewal_function(law, grid.refined());
    const double a = coarse.back(), b = fine.back();
    if (std::fabs(a - b) > rel_tol * std::fabs(b))
        throw GridTooCoarse("renewal_function: halving changes result by " +
                            std::to_string(std::fabs(a / b - 1.0)));
    return coarse;
}

// Independent-quadrature residual of P = K + K*P, evaluated with the
// left-endpoint product rule (a different rule from the solver's). The
// residual is O(panel width) and must shrink under refinement.
template <typename Law>
double renewal_residual(const Law& law, const TimeGrid& grid, const std::vector<double>& P) {
    double worst = 0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const double ti = grid.t[i];
        double s = law.density(ti);
        for (std::size_t j = 0; j + 1 <= i; ++j) {
            const double w = law.interval_mass(ti - grid.t[j + 1], ti - grid.t[j]);
            s += P[j] * w;
        }
        worst = std::max(worst, std::fabs(s - P[i]) / std::max(P[i], 1e-300));
    }
    return worst;
}

struct RenewalSample {
    double origin = 0;
    std::vector<double> epochs; // strictly increasing, first entry == origin
};

template <typename Law>
RenewalSample sample_renewal(const Law& law, double origin, double horizon, RngStream& stream) {
    RenewalSample s;
    s.origin = origin;
    s.epochs.push_back(origin);
    double cur = origin;
    while (true) {
        cur += law.sample(stream);
        if (cur > horizon) break;
        s.epochs.push_back(cur);
    }
    return s;
}

struct CountDistributionPoint {
    double a = 0;
    double empirical = 0;
    double limit = 0;
    double std_err = 0;
    bool pass = false;
};

struct CountDistributionReport {
    std::vector<CountDistributionPoint> points;
    bool pass = true;
};

// Tail of the renewal count |sigma cap [0,t]| at thresholds a sqrt(t) against
// the one-sided 1/2-stable limit with Laplace exponent 2 c_K sqrt(pi s).
template <typename Law>
CountDistributionReport count_distribution_check(const Law& law, double t,
                                                 const std::vector<double>& thresholds,
                                                 int n_samples, RngStream& stream) {
    if (std::fabs(law.alpha() - 0.5) > 1e-12)
        throw UnsupportedAlpha("count distribution check: closed form requires alpha = 1/2");
    const double cK = law.tail_constant_effective();
    const double levy_scale = 2.0 * M_PI * cK * cK;

    std::vector<std::int64_t> hits(thresholds.size(), 0);
    for (int s = 0; s < n_samples; ++s) {
        double cur = 0;
        std::int64_t count = 0;
        while (true) {
            cur += law.sample(stream);
            if (cur > t) break;
            ++count;
        }
        for (std::size_t k = 0; k < thresholds.size(); ++k)
            if (static_cast<double>(count) >= thresholds[k] * std::sqrt(t)) ++hits[k];
    }

    CountDistributionReport report;
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
        CountDistributionPoint p;
        p.a = thresholds[k];
        p.empirical = static_cast<double>(hits[k]) / n_samples;
        const double x = 1.0 / (thresholds[k] * thresholds[k]);
        p.limit = levy_cdf(x, levy_scale);
        p.std_err = std::sqrt(std::max(p.limit * (1.0 - p.limit), 1e-12) / n_samples);
        p.pass = std::fabs(p.empirical - p.limit) <= 3.0 * p.std_err;
        report.pass = report.pass && p.pass;
        report.points.push_back(p);
    }
    return report;
}

struct ConvolutionLdPoint {
    double t = 0;
    double ratio = 0; // K^{*n}(t) / (n K(t))
};

struct ConvolutionLdReport {
    int n = 1;
    std::vector<ConvolutionLdPoint> points;
    double max_dev_at_largest_t = 0;
};

namespace detail {

// log-log interpolated tabulation of a positive function on a geometric grid
class LogLogTable {
  public:
    LogLogTable(double t_min, double t_max, int per_decade)
        : log_min_(std::log(t_min)), step_(std::log(10.0) / per_decade) {
        const int n = static_cast<int>(std::ceil((std::log(t_max) - log_min_) / step_)) + 2;
        logv_.assign(static_cast<std::size_t>(n), 0.0);
        logt_.assign(static_cast<std::size_t>(n), 0.0);
        for (int i = 0; i < n; ++i) logt_[static_cast<std::size_t>(i)] = log_min_ + i * step_;
    }

    double node(std::size_t i) const { return std::exp(logt_[i]); }
    std::size_t size() const { return logt_.size(); }
    void set(std::size_t i, double v) { logv_[i] = std::log(std::max(v, 1e-300)); }

    double eval(double t) const {
        if (t <= 0) return 0.0;
        const double lt = std::log(t);
        if (lt <= logt_.front()) {
            // below the head: linear in t through the first node (K^{*n}(0)=0 for n >= 2)
            return std::exp(logv_.front()) * (t / node(0));
        }
        const double x = (lt - logt_.front()) / step_;
        std::size_t i = std::min(static_cast<std::size_t>(x), logt_.size() - 2);
        const double frac = (lt - logt_[i]) / step_;
        return std::exp(logv_[i] + frac * (logv_[i + 1] - logv_[i]));
    }

  private:
    double log_min_, step_;
    std::vector<double> logt_, logv_;
};

} // namespace detail

// K^{*n} by repeated quadrature convolution, compared against n K(t).
template <typename Law>
ConvolutionLdReport convolution_ld_check(const Law& law, int n, const std::vector<double>& t_list) {
    if (n < 1 || n > 8) throw NumericsError("convolution_ld_check: n must be in [1,8]");
    ConvolutionLdReport report;
    report.n = n;
    double t_max = 0;
    for (double t : t_list) t_max = std::max(t_max, t);
    if (t_list.empty()) throw NumericsError("convolution_ld_check: empty t list");

    if (n == 1) {
        for (double t : t_list) report.points.push_back({t, 1.0});
        report.max_dev_at_largest_t = 0.0;
        return report;
    }

    // tabulate K^{*j} for j = 2..n on a geometric grid
    const double t_lo = 1e-2, t_hi = 2.0 * t_max;
    const int per_decade = 48;
    std::vector<detail::LogLogTable> tables;
    tables.reserve(static_cast<std::size_t>(n - 1));
    for (int j = 2; j <= n; ++j) {
        detail::LogLogTable tab(t_lo, t_hi, per_decade);
        for (std::size_t i = 0; i < tab.size(); ++i) {
            const double t = tab.node(i);
            const auto prev_eval = [&](double s) -> double {
                return j == 2 ? law.density(s) : tables.back().eval(s);
            };
            // split at t/2; integrand K^{*(j-1)}(s) K(t-s)
            const double tol = 1e-6 * law.density(t) * j + 1e-14;
            const double left = integrate([&](double s) { return prev_eval(s) * law.density(t - s); },
                                          0.0, 0.5 * t, tol);
            const double right = integrate([&](double s) { return prev_eval(t - s) * law.density(s); },
                                           0.0, 0.5 * t, tol);
            tab.set(i, left + right);
        }
        tables.push_back(std::move(tab));
    }

    double largest_t = 0, dev_at_largest = 0;
    for (double t : t_list) {
        const double ratio = tables.back().eval(t) / (n * law.density(t));
        report.points.push_back({t, ratio});
        if (t >= largest_t) {
            largest_t = t;
            dev_at_largest = std::fabs(ratio - 1.0);
        }
    }
    report.max_dev_at_largest_t = dev_at_largest;
    return report;
}

} // namespace rwpm
