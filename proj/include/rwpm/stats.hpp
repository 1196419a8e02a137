#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace rwpm {

enum class Scale { Linear, Log };

// Monte Carlo result: value, standard error, sample count, master seed.
struct Estimate {
    double value = 0;
    double std_err = 0;
    std::uint64_t n = 0;
    std::uint64_t seed = 0;
    Scale scale = Scale::Linear;
};

// Welford accumulator.
class RunningStat {
  public:
    void add(double x) {
        ++n_;
        const double d = x - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (x - mean_);
    }
    std::uint64_t count() const { return n_; }
    double mean() const { return mean_; }
    double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    double std_dev() const { return std::sqrt(variance()); }
    double std_err() const { return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }

    Estimate estimate(std::uint64_t seed = 0, Scale scale = Scale::Linear) const {
        return Estimate{mean(), std_err(), n_, seed, scale};
    }

    // pooled combination (Chan et al.); merge order is fixed by the caller
    void merge(const RunningStat& other) {
        if (other.n_ == 0) return;
        if (n_ == 0) {
            *this = other;
            return;
        }
        const double na = static_cast<double>(n_), nb = static_cast<double>(other.n_);
        const double d = other.mean_ - mean_;
        const double n_tot = na + nb;
        mean_ += d * nb / n_tot;
        m2_ += other.m2_ + d * d * na * nb / n_tot;
        n_ += other.n_;
    }

  private:
    std::uint64_t n_ = 0;
    double mean_ = 0;
    double m2_ = 0;
};

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// One-sided stable (Levy) distribution with scale c: density
// sqrt(c/(2 pi)) x^{-3/2} exp(-c/(2x)), Laplace transform exp(-sqrt(2 c s)).
inline double levy_cdf(double x, double scale_c) {
    if (x <= 0) return 0.0;
    return std::erfc(std::sqrt(scale_c / (2.0 * x)));
}

namespace detail {

// Regularized upper incomplete gamma Q(a, x), series + continued fraction.
inline double igamma_q(double a, double x) {
    if (x < 0 || a <= 0) throw std::invalid_argument("igamma_q: bad arguments");
    if (x == 0) return 1.0;
    const double lg = std::lgamma(a);
    if (x < a + 1.0) {
        // series for P(a,x)
        double ap = a, sum = 1.0 / a, del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
        }
        const double p = sum * std::exp(-x + a * std::log(x) - lg);
        return 1.0 - p;
    }
    // continued fraction for Q(a,x)
    const double tiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - lg) * h;
}

} // namespace detail

// Upper tail of the chi-squared distribution with k degrees of freedom.
inline double chi_squared_tail(double stat, double dof) {
    return detail::igamma_q(dof / 2.0, stat / 2.0);
}

// Pearson chi-square test against expected counts; bins with expectation
// below min_expected are pooled into the preceding bin.
struct ChiSquareResult {
    double statistic = 0;
    double dof = 0;
    double p_value = 1;
};

inline ChiSquareResult chi_square_test(const std::vector<double>& observed,
                                       const std::vector<double>& expected,
                                       double min_expected = 5.0) {
    if (observed.size() != expected.size() || observed.empty())
        throw std::invalid_argument("chi_square_test: size mismatch");
    std::vector<double> obs, exp;
    double pool_o = 0, pool_e = 0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        pool_o += observed[i];
        pool_e += expected[i];
        if (pool_e >= min_expected) {
            obs.push_back(pool_o);
            exp.push_back(pool_e);
            pool_o = pool_e = 0;
        }
    }
    if (pool_e > 0 && !exp.empty()) {
        obs.back() += pool_o;
        exp.back() += pool_e;
    }
    if (exp.size() < 2) throw std::invalid_argument("chi_square_test: too few usable bins");
    double stat = 0;
    for (std::size_t i = 0; i < exp.size(); ++i) {
        const double d = obs[i] - exp[i];
        stat += d * d / exp[i];
    }
    const double dof = static_cast<double>(exp.size() - 1);
    return {stat, dof, chi_squared_tail(stat, dof)};
}

// Kolmogorov-Smirnov distance between a sample and a CDF.
template <typename Cdf>
double ks_distance(std::vector<double> sample, Cdf&& cdf) {
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double dmax = 0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = cdf(sample[i]);
        dmax = std::max(dmax, std::fabs(f - static_cast<double>(i) / n));
        dmax = std::max(dmax, std::fabs(static_cast<double>(i + 1) / n - f));
    }
    return dmax;
}

} // namespace rwpm
