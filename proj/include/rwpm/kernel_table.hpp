#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "rwpm/errors.hpp"
#include "rwpm/jump_kernel.hpp"

namespace rwpm {

// Dense cube of lattice values on |x|_inf <= radius. Mass dropped by
// trimming is accounted in lost_mass, so lookups have absolute error
// bounded by lost_mass.
template <int D>
struct LatticeField {
    int radius = 0;
    double lost_mass = 0;
    std::vector<double> values;

    static std::size_t cube_size(int r) {
        std::size_t s = 1;
        for (int i = 0; i < D; ++i) s *= static_cast<std::size_t>(2 * r + 1);
        return s;
    }

    static LatticeField delta() {
        LatticeField f;
        f.values.assign(1, 1.0);
        return f;
    }

    std::size_t index(const Site<D>& x) const {
        std::size_t idx = 0;
        const std::size_t side = static_cast<std::size_t>(2 * radius + 1);
        for (int i = 0; i < D; ++i) idx = idx * side + static_cast<std::size_t>(x[i] + radius);
        return idx;
    }

    double at(const Site<D>& x) const {
        for (int i = 0; i < D; ++i)
            if (std::abs(x[i]) > radius) return 0.0;
        return values[index(x)];
    }

    double origin() const {
        Site<D> o{};
        return values[index(o)];
    }

    double total_mass() const {
        double s = 0;
        for (double v : values) s += v;
        return s;
    }

    // visit(site, value) over the whole cube
    template <typename F>
    void for_each(F&& visit) const {
        Site<D> x{};
        for (int i = 0; i < D; ++i) x[i] = -radius;
        std::size_t idx = 0;
        while (true) {
            visit(x, values[idx]);
            ++idx;
            int dim = D - 1;
            while (dim >= 0) {
                if (++x[dim] <= radius) break;
                x[dim] = -radius;
                --dim;
            }
            if (dim < 0) break;
        }
    }
};

namespace detail {

// f -> q * f on a dense cube; output radius grows by the support radius.
template <int D>
LatticeField<D> convolve_once(const LatticeField<D>& f, const JumpKernel<D>& q) {
    LatticeField<D> out;
    out.radius = f.radius + q.support_radius;
    out.lost_mass = f.lost_mass;
    out.values.assign(LatticeField<D>::cube_size(out.radius), 0.0);

    const int rin = f.radius, rout = out.radius;
    const std::size_t sin = static_cast<std::size_t>(2 * rin + 1);
    const std::size_t sout = static_cast<std::size_t>(2 * rout + 1);

    if constexpr (D == 1) {
        for (const auto& [step, p] : q.support)
            for (int x = -rin; x <= rin; ++x)
                out.values[static_cast<std::size_t>(x + step[0] + rout)] +=
                    p * f.values[static_cast<std::size_t>(x + rin)];
        return out;
    }

    std::array<std::size_t, D> stout{};
    stout[D - 1] = 1;
    for (int i = D - 2; i >= 0; --i) stout[i] = stout[i + 1] * sout;

    for (const auto& [step, p] : q.support) {
        Site<D> x{};
        for (int i = 0; i < D - 1; ++i) x[i] = -rin;
        x[D - 1] = -rin;
        const double* in = f.values.data();
        double* o = out.values.data();
        std::size_t in_idx = 0;
        while (true) {
            std::size_t out_idx = 0;
            for (int i = 0; i < D; ++i) out_idx += static_cast<std::size_t>(x[i] + step[i] + rout) * stout[i];
            for (std::size_t k = 0; k < sin; ++k) o[out_idx + k] += p * in[in_idx + k];
            in_idx += sin;
            int dim = D - 2;
            while (dim >= 0) {
                if (++x[dim] <= rin) break;
                x[dim] = -rin;
                --dim;
            }
            if (dim < 0) break;
        }
    }
    return out;
}

// Drop outer |x|_inf shells whose total mass fits within the budget.
template <int D>
void trim_field(LatticeField<D>& f, double budget) {
    if (f.radius == 0) return;
    std::vector<double> shell(static_cast<std::size_t>(f.radius) + 1, 0.0);
    f.for_each([&](const Site<D>& x, double v) {
        int r = 0;
        for (int i = 0; i < D; ++i) r = std::max(r, std::abs(x[i]));
        shell[static_cast<std::size_t>(r)] += v;
    });
    double dropped = 0;
    int new_r = f.radius;
    while (new_r > 0 && dropped + shell[static_cast<std::size_t>(new_r)] <= budget) {
        dropped += shell[static_cast<std::size_t>(new_r)];
        --new_r;
    }
    if (new_r == f.radius) return;
    LatticeField<D> g;
    g.radius = new_r;
    g.lost_mass = f.lost_mass + dropped;
    g.values.assign(LatticeField<D>::cube_size(new_r), 0.0);
    Site<D> y{};
    for (int i = 0; i < D; ++i) y[i] = -new_r;
    std::size_t gi = 0;
    while (true) {
        g.values[gi] = f.values[f.index(y)];
        ++gi;
        int dim = D - 1;
        while (dim >= 0) {
            if (++y[dim] <= new_r) break;
            y[dim] = -new_r;
            --dim;
        }
        if (dim < 0) break;
    }
    f = std::move(g);
}

} // namespace detail

// Poisson weights e^{-tau} tau^m / m! over the index window carrying all but
// `tol` of the mass.
struct PoissonWindow {
    int lo = 0;
    std::vector<double> w;
    int hi() const { return lo + static_cast<int>(w.size()) - 1; }
    double weight(int m) const {
        if (m < lo || m > hi()) return 0.0;
        return w[static_cast<std::size_t>(m - lo)];
    }
};

inline PoissonWindow poisson_window(double tau, double tol) {
    PoissonWindow win;
    if (tau <= 0) {
        win.w = {1.0};
        return win;
    }
    const int m0 = static_cast<int>(tau);
    const double w0 = std::exp(-tau + m0 * std::log(tau) - std::lgamma(m0 + 1.0));
    std::deque<double> acc{w0};
    int lo = m0, hi = m0;
    double sum = w0, wd = w0, wu = w0;
    while (sum < 1.0 - tol) {
        const double nd = lo > 0 ? wd * lo / tau : 0.0;
        const double nu = wu * tau / (hi + 1);
        if (nd > nu) {
            acc.push_front(nd);
            wd = nd;
            --lo;
            sum += nd;
        } else {
            acc.push_back(nu);
            wu = nu;
            ++hi;
            sum += nu;
        }
        if (hi - lo > 4000000) throw NumericsError("poisson_window: failed to converge");
    }
    win.lo = lo;
    win.w.assign(acc.begin(), acc.end());
    return win;
}

inline int poisson_upper_index(double tau, double tol) { return poisson_window(tau, tol).hi(); }

// Uniformization table: p_t(x) = sum_m e^{-rt}(rt)^m/m! q^{*m}(x).
//
// Return probabilities q^{*m}(0) reach a longer horizon than stored fields:
// the sweep of convolution powers up to m_sweep also records
// q^{*2m}(0) = sum_x q^{*m}(x)^2 and q^{*2m-1}(0) = sum_x q^{*m}(x) q^{*m-1}(x),
// valid by symmetry of q, which doubles the return horizon at no extra cost.
//
// Immutable after construction; all queries are pure reads and the table can
// be shared across threads.
template <int D>
class KernelTable {
  public:
    KernelTable(JumpKernel<D> kernel, double rate, double horizon, double truncation_tol = 1e-12,
                double fields_horizon = 0.0)
        : kernel_(std::move(kernel)), rate_(rate), horizon_(horizon), tol_(truncation_tol),
          fields_horizon_(std::min(fields_horizon, horizon)) {
        if (!(rate_ > 0)) throw NumericsError("KernelTable: rate must be > 0");
        if (!(horizon_ > 0)) throw NumericsError("KernelTable: horizon must be > 0");

        m_ret_ = poisson_upper_index(rate_ * horizon_, 0.25 * tol_) + 1;
        if (fields_horizon_ > 0)
            m_fields_ = poisson_upper_index(rate_ * fields_horizon_, 0.25 * tol_) + 1;

        if (load_returns_cache()) {
            if (m_fields_ > 0) sweep(m_fields_, /*record_returns=*/false);
        } else {
            sweep(std::max(m_fields_, (m_ret_ + 1) / 2), /*record_returns=*/true);
            save_returns_cache();
        }
    }

    const JumpKernel<D>& kernel() const { return kernel_; }
    double rate() const { return rate_; }
    double horizon() const { return horizon_; }
    double fields_horizon() const { return fields_horizon_; }
    double truncation_tol() const { return tol_; }

    // q^{*m}(0)
    double return_power(int m) const {
        return m >= 0 && m < static_cast<int>(returns_.size()) ? returns_[static_cast<std::size_t>(m)]
                                                               : 0.0;
    }

    // p_t(0)
    double p0(double t) const {
        check_horizon(t, horizon_, "p0");
        if (t == 0) return 1.0;
        const PoissonWindow win = poisson_window(rate_ * t, 0.25 * tol_);
        double s = 0;
        for (int m = win.lo; m <= win.hi(); ++m) s += win.weight(m) * return_power(m);
        return s;
    }

    // p_t(x); absolute error <= truncation_tol
    double p(double t, const Site<D>& x) const {
        check_horizon(t, std::max(fields_horizon_, 0.0), "p(t,x)");
        if (t == 0) return is_origin(x) ? 1.0 : 0.0;
        const PoissonWindow win = poisson_window(rate_ * t, 0.25 * tol_);
        double s = 0;
        const int m_top = std::min(win.hi(), static_cast<int>(fields_.size()) - 1);
        for (int m = win.lo; m <= m_top; ++m)
            s += win.weight(m) * fields_[static_cast<std::size_t>(m)].at(x);
        return s;
    }

    // Per-power field access (m-th convolution power), for oracles and checks.
    const LatticeField<D>& power_field(int m) const { return fields_.at(static_cast<std::size_t>(m)); }
    int stored_field_count() const { return static_cast<int>(fields_.size()); }
    int return_count() const { return static_cast<int>(returns_.size()); }

    // Dense field of p_t on the box carrying >= 1 - truncation_tol of the mass.
    LatticeField<D> field_at(double t) const {
        check_horizon(t, std::max(fields_horizon_, 0.0), "field_at");
        if (t == 0) return LatticeField<D>::delta();
        const PoissonWindow win = poisson_window(rate_ * t, 0.25 * tol_);
        const int m_top = std::min(win.hi(), static_cast<int>(fields_.size()) - 1);
        LatticeField<D> out;
        double lost = 0.25 * tol_;
        for (int m = win.lo; m <= m_top; ++m) {
            out.radius = std::max(out.radius, fields_[static_cast<std::size_t>(m)].radius);
            lost = std::max(lost, fields_[static_cast<std::size_t>(m)].lost_mass + 0.25 * tol_);
        }
        out.lost_mass = lost;
        out.values.assign(LatticeField<D>::cube_size(out.radius), 0.0);
        for (int m = win.lo; m <= m_top; ++m) {
            const auto& f = fields_[static_cast<std::size_t>(m)];
            const double w = win.weight(m);
            f.for_each([&](const Site<D>& x, double v) { out.values[out.index(x)] += w * v; });
        }
        return out;
    }

  private:
    void check_horizon(double t, double limit, const char* what) const {
        if (t < 0) throw HorizonExceeded(std::string(what) + ": negative time");
        if (t > limit * (1.0 + 1e-12))
            throw HorizonExceeded(std::string(what) + ": t=" + std::to_string(t) +
                                  " beyond table horizon " + std::to_string(limit));
    }

    void sweep(int m_sweep, bool record_returns) {
        const double budget = 0.5 * tol_ / std::max(1, m_sweep);
        if (record_returns) {
            returns_.assign(static_cast<std::size_t>(std::max(m_ret_, 2 * m_sweep)) + 1, 0.0);
            returns_[0] = 1.0;
        }
        fields_.clear();
        if (m_fields_ > 0) fields_.push_back(LatticeField<D>::delta());

        LatticeField<D> prev = LatticeField<D>::delta();
        LatticeField<D> cur;
        for (int m = 1; m <= m_sweep; ++m) {
            cur = detail::convolve_once(prev, kernel_);
            detail::trim_field(cur, budget);
            if (record_returns) {
                returns_[static_cast<std::size_t>(m)] = cur.origin();
                double same = 0, cross = 0;
                cur.for_each([&](const Site<D>& x, double v) {
                    same += v * v;
                    cross += v * prev.at(x);
                });
                if (2 * m < static_cast<int>(returns_.size()))
                    returns_[static_cast<std::size_t>(2 * m)] = same;
                if (2 * m - 1 < static_cast<int>(returns_.size()))
                    returns_[static_cast<std::size_t>(2 * m - 1)] = cross;
            }
            if (m_fields_ > 0 && m <= m_fields_) fields_.push_back(cur);
            prev = std::move(cur);
        }
    }

    std::string cache_path() const {
        const char* dir = std::getenv("RWPMLAB_CACHE");
        if (!dir || !*dir) return {};
        char buf[320];
        std::snprintf(buf, sizeof buf, "%s/ktab_%016llx_m%d_tol%.3e.bin", dir,
                      static_cast<unsigned long long>(kernel_.hash), m_ret_, tol_);
        return buf;
    }

    bool load_returns_cache() {
        const std::string path = cache_path();
        if (path.empty()) return false;
        std::FILE* fp = std::fopen(path.c_str(), "rb");
        if (!fp) return false;
        std::uint64_t count = 0;
        bool ok = std::fread(&count, sizeof count, 1, fp) == 1;
        if (ok && count > static_cast<std::uint64_t>(m_ret_)) {
            returns_.assign(count, 0.0);
            ok = std::fread(returns_.data(), sizeof(double), count, fp) == count;
        } else
            ok = false;
        std::fclose(fp);
        if (!ok) returns_.clear();
        return ok;
    }

    void save_returns_cache() const {
        const std::string path = cache_path();
        if (path.empty() || returns_.empty()) return;
        std::FILE* fp = std::fopen(path.c_str(), "wb");
        if (!fp) return;
        const std::uint64_t count = returns_.size();
        std::fwrite(&count, sizeof count, 1, fp);
        std::fwrite(returns_.data(), sizeof(double), count, fp);
        std::fclose(fp);
    }

    JumpKernel<D> kernel_;
    double rate_;
    double horizon_;
    double tol_;
    double fields_horizon_;
    int m_ret_ = 0;
    int m_fields_ = 0;
    std::vector<double> returns_;
    std::vector<LatticeField<D>> fields_;
};

} // namespace rwpm
