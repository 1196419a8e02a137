#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "rwpm/errors.hpp"
#include "rwpm/kernel_table.hpp"
#include "rwpm/renewal.hpp"
#include "rwpm/rng.hpp"
#include "rwpm/stats.hpp"
#include "rwpm/walk.hpp"

namespace rwpm {

// Kernel table, disorder rate, Green value and the induced renewal law,
// shared by every partition-function computation at this (kernel, rho).
template <int D>
struct PinningModel {
    std::shared_ptr<const KernelTable<D>> table; // rate-1 table of the jump kernel
    double rho = 0;
    double G = 0; // Green value of the rate-1 walk
    std::shared_ptr<const PinningRenewalLaw<D>> law;

    PinningModel(std::shared_ptr<const KernelTable<D>> table_in, double rho_in, double green_value)
        : table(std::move(table_in)), rho(rho_in), G(green_value),
          law(std::make_shared<PinningRenewalLaw<D>>(table, rho_in, green_value)) {}

    double z_from_beta(double beta) const { return beta * G / (1.0 + rho); }
    double beta_from_z(double z) const { return z * (1.0 + rho) / G; }

    // W(dt, y) = p_dt(y) / p_{(1+rho)dt}(0)
    double weight_w(double dt, const Site<D>& y) const {
        if (!(dt > 0)) throw NumericsError("weight_w: dt must be > 0");
        const double num = is_origin(y) ? table->p0(dt) : table->p(dt, y);
        return num / table->p0((1.0 + rho) * dt);
    }

    // numeric sup_t p_t(0)/p_{(1+rho)t}(0); the limit (1+rho)^{d/2} is included
    double weight_envelope() const {
        double best = std::pow(1.0 + rho, 0.5 * D);
        const double t_max = table->horizon() / (1.0 + rho);
        for (double t = 1e-3; t <= t_max; t *= 1.1) best = std::max(best, table->p0(t) / table->p0((1.0 + rho) * t));
        return best * (1.0 + 1e-9);
    }
};

template <int D>
double annealed_critical_point(const PinningModel<D>& model) {
    static_assert(D >= 3, "transience requires d >= 3");
    return (1.0 + model.rho) / model.G;
}

// Uniform Volterra grid over [0, t] with the disorder evaluated at the nodes.
template <int D>
struct DisorderGrid {
    double h = 0;
    std::vector<double> t;
    std::vector<Site<D>> y;

    static DisorderGrid make(const WalkPath<D>& Y, double h, double horizon) {
        if (horizon > Y.horizon * (1.0 + 1e-12))
            throw OutOfHorizon("DisorderGrid: grid horizon beyond the disorder path");
        DisorderGrid g;
        g.h = h;
        const int n = static_cast<int>(std::llround(horizon / h));
        if (std::fabs(n * h - horizon) > 1e-9 * horizon)
            throw GridTooCoarse("DisorderGrid: horizon must be a multiple of the step");
        g.t.reserve(static_cast<std::size_t>(n) + 1);
        g.y.reserve(static_cast<std::size_t>(n) + 1);
        std::size_t jump_idx = 0;
        for (int i = 0; i <= n; ++i) {
            const double ti = i * h;
            while (jump_idx < Y.jump_times.size() && Y.jump_times[jump_idx] <= ti) ++jump_idx;
            g.t.push_back(ti);
            g.y.push_back(Y.sites[jump_idx]);
        }
        return g;
    }

    // constant-disorder grid (annealed solves and rho = 0)
    static DisorderGrid flat(double h, double horizon) {
        DisorderGrid g;
        g.h = h;
        const int n = static_cast<int>(std::llround(horizon / h));
        for (int i = 0; i <= n; ++i) {
            g.t.push_back(i * h);
            g.y.push_back(Site<D>{});
        }
        return g;
    }

    DisorderGrid refined(const WalkPath<D>& Y) const { return make(Y, 0.5 * h, t.back()); }
};

struct VolterraResult {
    double log_z = 0;                    // log Z over [0, t]
    double log_scale = 0;                // pinned_density is scaled by exp(-log_scale)
    std::vector<double> pinned_density;  // chain-end density D(t_i) (pinned partition density)
    std::vector<double> grid_t;

    // log Z over the nested horizon [0, s] for s <= t (left-endpoint rule)
    double log_z_at(double s) const {
        double sum = 0;
        for (std::size_t j = 0; j + 1 < grid_t.size(); ++j) {
            if (grid_t[j] >= s) break;
            sum += pinned_density[j] * (grid_t[j + 1] - grid_t[j]);
        }
        const double floor_term = std::exp(-std::min(log_scale, 700.0));
        return log_scale + std::log(floor_term + sum);
    }
};

namespace detail {

template <int D>
std::uint64_t w_cache_key(int lag, const Site<D>& y) {
    std::uint64_t k = static_cast<std::uint64_t>(lag);
    for (int i = 0; i < D; ++i) {
        const int c = y[i] + 2048;
        if (c < 0 || c > 4095) throw NumericsError("disorder increment out of cache range");
        k = (k << 12) | static_cast<std::uint64_t>(c);
    }
    return k;
}

// Forward chain recursion shared by quenched, annealed and block-restricted
// solves. D(b) = z K(b) W(b, Y_b) + int_0^b D(a) z K(b-a) W(b-a, Y_b-Y_a) da.
// The kernel mass over each panel enters exactly through the law's CDF; the
// remaining integrand D(a) W(...) is interpolated trapezoidally across the
// panel with the final panel implicit (W(0+, 0) = 1), matching the renewal
// density solver so the rho = 0, z = 1 case reproduces it identically.
//
// `allowed(i, j)` gates transitions (j = -1 encodes the chain start at 0).
template <int D, typename WFn, typename GateFn>
VolterraResult chain_solve(const PinningRenewalLaw<D>& law, double z, const DisorderGrid<D>& grid,
                           WFn&& weight, GateFn&& allowed) {
    const std::size_t n = grid.t.size();
    if (n < 2) throw GridTooCoarse("chain_solve: need at least two grid nodes");
    const double h = grid.h;
    if (static_cast<int>(n) - 1 > 0xFFFF) throw GridTooCoarse("chain_solve: too many grid nodes");

    std::vector<double> omega(n, 0.0);
    for (std::size_t l = 1; l < n; ++l) omega[l] = law.interval_mass((l - 1) * h, l * h);

    VolterraResult res;
    res.grid_t = grid.t;
    res.pinned_density.assign(n, 0.0);
    double log_scale = 0;

    auto start_density = [&](std::size_t i) -> double {
        return allowed(static_cast<int>(i), -1)
                   ? z * law.density(grid.t[i]) * weight(static_cast<int>(i), -1)
                   : 0.0;
    };

    res.pinned_density[0] = allowed(0, -1) ? z * law.density(0.0) : 0.0;
    for (std::size_t i = 1; i < n; ++i) {
        // panel j covers [t_j, t_{j+1}); trapezoid splits its kernel mass
        // omega_{i-j} between the nodes j and j+1
        double s = start_density(i) * std::exp(-std::min(log_scale, 700.0));
        for (std::size_t j = 0; j < i; ++j) {
            if (res.pinned_density[j] == 0.0) continue;
            if (!allowed(static_cast<int>(i), static_cast<int>(j))) continue;
            const double g = res.pinned_density[j] * z *
                             weight(static_cast<int>(i), static_cast<int>(j));
            const double w_right = j > 0 ? omega[i - j + 1] : 0.0; // node j as panel right end
            s += 0.5 * g * (omega[i - j] + w_right);
        }
        const double denom = 1.0 - 0.5 * z * omega[1]; // implicit own-node share, W(0+,0) = 1
        double v = s / denom;
        if (v > 1e250) {
            const double shrink = 1e-200;
            for (std::size_t j = 0; j < i; ++j) res.pinned_density[j] *= shrink;
            v *= shrink;
            log_scale += 200.0 * std::log(10.0);
        }
        res.pinned_density[i] = v;
    }
    res.log_scale = log_scale;
    res.log_z = res.log_z_at(grid.t.back());
    return res;
}

} // namespace detail

// Quenched partition function by the forward Volterra recursion; returns
// log Z and the pinned chain-end density along the grid.
template <int D>
VolterraResult volterra_partition(const PinningModel<D>& model, double z, const DisorderGrid<D>& grid) {
    const double rho1 = 1.0 + model.rho;
    std::unordered_map<std::uint64_t, double> cache;
    cache.reserve(1 << 16);
    const auto& table = *model.table;
    auto weight = [&](int i, int j) -> double {
        const std::size_t ii = static_cast<std::size_t>(i);
        const std::size_t jj = j < 0 ? 0 : static_cast<std::size_t>(j);
        const int lag = j < 0 ? i : i - j;
        const Site<D> dy = grid.y[ii] - grid.y[jj];
        const std::uint64_t key = detail::w_cache_key<D>(lag, dy);
        const auto it = cache.find(key);
        if (it != cache.end()) return it->second;
        const double dt = lag * grid.h;
        const double w = table.p(dt, dy) / table.p0(rho1 * dt);
        cache.emplace(key, w);
        return w;
    };
    return detail::chain_solve(*model.law, z, grid, weight, [](int, int) { return true; });
}

// Annealed partition function: the disorder averages out (E[W] = 1), so the
// same recursion runs with unit weights.
template <int D>
VolterraResult annealed_partition(const PinningModel<D>& model, double z, double h, double horizon) {
    const DisorderGrid<D> grid = DisorderGrid<D>::flat(h, horizon);
    return detail::chain_solve(*model.law, z, grid, [](int, int) { return 1.0; },
                               [](int, int) { return true; });
}

// Block-restricted partition for coarse-grain patterns. Nodes belong to
// blocks of length L ((v-1)L, vL], boundary nodes to the left block; chains
// must visit exactly the blocks in `pattern` (ascending, 1-based).
template <int D>
VolterraResult volterra_partition_pattern(const PinningModel<D>& model, double z,
                                          const DisorderGrid<D>& grid, double block_len,
                                          const std::vector<int>& pattern) {
    if (pattern.empty()) throw NumericsError("volterra_partition_pattern: empty pattern");
    const std::size_t n = grid.t.size();
    std::vector<int> block(n, 1);
    for (std::size_t i = 1; i < n; ++i)
        block[i] = static_cast<int>(std::ceil(grid.t[i] / block_len - 1e-12));
    std::vector<int> prev_in(static_cast<std::size_t>(pattern.back()) + 1, -2);
    std::vector<bool> in_pattern(static_cast<std::size_t>(pattern.back()) + 1, false);
    for (std::size_t k = 0; k < pattern.size(); ++k) {
        in_pattern[static_cast<std::size_t>(pattern[k])] = true;
        prev_in[static_cast<std::size_t>(pattern[k])] = k == 0 ? -1 : pattern[k - 1];
    }
    const int first_block = pattern.front();

    auto gate = [&](int i, int j) -> bool {
        const int bi = block[static_cast<std::size_t>(i)];
        if (bi > pattern.back() || !in_pattern[static_cast<std::size_t>(bi)]) return false;
        if (j < 0) return bi == first_block;
        const int bj = block[static_cast<std::size_t>(j)];
        return bj == bi || bj == prev_in[static_cast<std::size_t>(bi)];
    };

    const double rho1 = 1.0 + model.rho;
    std::unordered_map<std::uint64_t, double> cache;
    const auto& table = *model.table;
    auto weight = [&](int i, int j) -> double {
        const std::size_t ii = static_cast<std::size_t>(i);
        const std::size_t jj = j < 0 ? 0 : static_cast<std::size_t>(j);
        const int lag = j < 0 ? i : i - j;
        const Site<D> dy = grid.y[ii] - grid.y[jj];
        const std::uint64_t key = detail::w_cache_key<D>(lag, dy);
        const auto it = cache.find(key);
        if (it != cache.end()) return it->second;
        const double dt = lag * grid.h;
        const double w = table.p(dt, dy) / table.p0(rho1 * dt);
        cache.emplace(key, w);
        return w;
    };
    VolterraResult res = detail::chain_solve(*model.law, z, grid, weight, gate);

    // Z^{z,I} = sum over nodes in the last pattern block of D_j * h (chains
    // that reached the full pattern), without the empty-chain 1.
    double sum = 0;
    for (std::size_t j = 0; j + 1 < n; ++j)
        if (block[j] == pattern.back()) sum += res.pinned_density[j] * grid.h;
    res.log_z = res.log_scale + std::log(sum); // -inf when no chain fits the pattern
    return res;
}

// Mean of e^{beta L_t} over sampled X paths at fixed disorder.
template <int D>
Estimate quenched_partition_mc(const PinningModel<D>& model, double beta, double t,
                               const WalkPath<D>& Y, int n_samples, RngStream& stream,
                               std::uint64_t seed_tag = 0) {
    if (t > Y.horizon * (1.0 + 1e-12)) throw OutOfHorizon("quenched_partition_mc: t beyond Y horizon");
    RunningStat acc;
    for (int s = 0; s < n_samples; ++s) {
        const WalkPath<D> X = sample_path(model.table->kernel(), 1.0, t, stream);
        acc.add(std::exp(beta * collision_local_time(X, Y, t)));
    }
    return acc.estimate(seed_tag);
}

// Free energy by disorder-averaged (1/t) log Z with a t-doubling convergence
// test: |F(2t) - F(t)| must not exceed max(tol, standard error).
template <int D>
Estimate free_energy_estimate(const PinningModel<D>& model, double beta, double t, double h,
                              int n_disorder, RngStream& stream, double tol = 0.005) {
    const double z = model.z_from_beta(beta);
    RunningStat at_t, at_2t;
    for (int k = 0; k < n_disorder; ++k) {
        const WalkPath<D> Y = sample_path(model.table->kernel(), model.rho, 2.0 * t, stream);
        const DisorderGrid<D> grid = DisorderGrid<D>::make(Y, h, 2.0 * t);
        const VolterraResult res = volterra_partition(model, z, grid);
        at_2t.add(res.log_z / (2.0 * t));
        at_t.add(res.log_z_at(t) / t);
    }
    const Estimate est = at_2t.estimate();
    const double gap = std::fabs(at_2t.mean() - at_t.mean());
    if (gap > std::max(tol, est.std_err))
        throw NotConverged("free_energy_estimate: doubling test failed, gap=" + std::to_string(gap));
    return est;
}

// Merge of two independent walks into their sum path.
template <int D>
WalkPath<D> path_sum(const WalkPath<D>& A, const WalkPath<D>& B) {
    WalkPath<D> out;
    out.rate = A.rate + B.rate;
    out.horizon = std::min(A.horizon, B.horizon);
    out.kernel_hash = A.kernel_hash;
    std::size_t ia = 0, ib = 0;
    Site<D> pos{};
    out.sites.push_back(pos);
    while (ia < A.jump_times.size() || ib < B.jump_times.size()) {
        const double ta = ia < A.jump_times.size() ? A.jump_times[ia] : std::numeric_limits<double>::infinity();
        const double tb = ib < B.jump_times.size() ? B.jump_times[ib] : std::numeric_limits<double>::infinity();
        if (ta <= tb) {
            pos = pos + (A.sites[ia + 1] - A.sites[ia]);
            out.jump_times.push_back(ta);
            ++ia;
        } else {
            pos = pos + (B.sites[ib + 1] - B.sites[ib]);
            out.jump_times.push_back(tb);
            ++ib;
        }
        out.sites.push_back(pos);
    }
    return out;
}

struct MonotonicityReport {
    Estimate lhs;     // E^{Y2}[Z^beta_{t, Y1+Y2}] sampled over (X, Y1, Y2)
    Estimate rhs;     // Z^{beta'}_{t', Y} sampled over (X, Y)
    double z_score = 0;
    bool pass = false;
};

// Distributional identity behind the critical-point-shift monotonicity:
// averaging the disorder component Y2 out of Z^beta_{t, Y1+Y2} matches in law
// the time/temperature rescaled partition function at the smaller rate.
template <int D>
MonotonicityReport monotonicity_identity_check(const PinningModel<D>& model, double rho_prime,
                                               double beta, double t, int n, RngStream& stream) {
    const double rho = model.rho;
    if (!(rho_prime > rho)) throw NumericsError("monotonicity_identity_check: requires rho' > rho");
    const auto& kernel = model.table->kernel();
    const double rate_y1 = (1.0 + rho_prime) * rho / (1.0 + rho);
    const double rate_y2 = (rho_prime - rho) / (1.0 + rho);
    const double beta_rhs = beta * (1.0 + rho) / (1.0 + rho_prime);
    const double t_rhs = t * (1.0 + rho_prime) / (1.0 + rho);

    RunningStat lhs, rhs;
    for (int s = 0; s < n; ++s) {
        const WalkPath<D> Y1 = sample_path(kernel, rate_y1, t, stream);
        const WalkPath<D> Y2 = sample_path(kernel, rate_y2, t, stream);
        const WalkPath<D> X = sample_path(kernel, 1.0, t, stream);
        const WalkPath<D> Yp = path_sum(Y1, Y2);
        lhs.add(std::exp(beta * collision_local_time(X, Yp, t)));

        const WalkPath<D> Xr = sample_path(kernel, 1.0, t_rhs, stream);
        const WalkPath<D> Yr = sample_path(kernel, rho, t_rhs, stream);
        rhs.add(std::exp(beta_rhs * collision_local_time(Xr, Yr, t_rhs)));
    }
    MonotonicityReport rep;
    rep.lhs = lhs.estimate();
    rep.rhs = rhs.estimate();
    const double pooled = std::sqrt(rep.lhs.std_err * rep.lhs.std_err + rep.rhs.std_err * rep.rhs.std_err);
    rep.z_score = pooled > 0 ? (rep.lhs.value - rep.rhs.value) / pooled : 0.0;
    rep.pass = std::fabs(rep.z_score) <= 3.0;
    return rep;
}

} // namespace rwpm
