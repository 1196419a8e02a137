#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "rwpm/errors.hpp"
#include "rwpm/jump_kernel.hpp"
#include "rwpm/kernel_table.hpp"
#include "rwpm/rng.hpp"
#include "rwpm/stats.hpp"

namespace rwpm {

// Piecewise-constant continuous-time lattice path: jump epochs plus the sites
// visited. sites[0] is the origin; paths are right-continuous at jumps.
template <int D>
struct WalkPath {
    std::uint64_t kernel_hash = 0;
    double rate = 0;
    double horizon = 0;
    std::vector<double> jump_times;  // strictly increasing, in (0, horizon]
    std::vector<Site<D>> sites;      // size() == jump_times.size() + 1

    Site<D> position_at(double s) const {
        if (s < 0 || s > horizon * (1.0 + 1e-12)) throw OutOfHorizon("position_at: s outside path horizon");
        const auto it = std::upper_bound(jump_times.begin(), jump_times.end(), s);
        return sites[static_cast<std::size_t>(it - jump_times.begin())];
    }

    std::size_t jump_count() const { return jump_times.size(); }
};

// Poisson(rate) jump epochs with i.i.d. displacements from q; rate 0 yields
// the constant path. Deterministic given the stream state.
template <int D>
WalkPath<D> sample_path(const JumpKernel<D>& kernel, double rate, double horizon, RngStream& stream) {
    if (!(horizon > 0)) throw NumericsError("sample_path: horizon must be > 0");
    if (rate < 0) throw NumericsError("sample_path: rate must be >= 0");
    WalkPath<D> path;
    path.kernel_hash = kernel.hash;
    path.rate = rate;
    path.horizon = horizon;
    Site<D> pos{};
    path.sites.push_back(pos);
    if (rate == 0) return path;

    std::vector<double> weights;
    weights.reserve(kernel.support.size());
    for (const auto& [site, p] : kernel.support) weights.push_back(p);
    const DiscreteSampler jump_law(weights);

    double t = stream.exponential(rate);
    while (t <= horizon) {
        const auto& step = kernel.support[jump_law.sample(stream)].first;
        pos = pos + step;
        path.jump_times.push_back(t);
        path.sites.push_back(pos);
        t += stream.exponential(rate);
    }
    return path;
}

// Collision local time on [from, to]: Lebesgue measure of {s : X_s = Y_s}.
// Exact merge of the two jump sequences; no discretization.
template <int D>
double collision_local_time_window(const WalkPath<D>& X, const WalkPath<D>& Y, double from, double to) {
    if (to < from) throw OutOfHorizon("collision_local_time: to < from");
    if (to > X.horizon * (1.0 + 1e-12) || to > Y.horizon * (1.0 + 1e-12))
        throw OutOfHorizon("collision_local_time: window beyond a path horizon");
    std::size_t ix = static_cast<std::size_t>(
        std::upper_bound(X.jump_times.begin(), X.jump_times.end(), from) - X.jump_times.begin());
    std::size_t iy = static_cast<std::size_t>(
        std::upper_bound(Y.jump_times.begin(), Y.jump_times.end(), from) - Y.jump_times.begin());
    const double inf = std::numeric_limits<double>::infinity();
    double cur = from;
    double acc = 0;
    while (cur < to) {
        const double nx = ix < X.jump_times.size() ? X.jump_times[ix] : inf;
        const double ny = iy < Y.jump_times.size() ? Y.jump_times[iy] : inf;
        const double nxt = std::min(to, std::min(nx, ny));
        if (X.sites[ix] == Y.sites[iy]) acc += nxt - cur;
        if (nxt == to) break;
        if (nx == nxt) ++ix;
        if (ny == nxt) ++iy;
        cur = nxt;
    }
    return acc;
}

template <int D>
double collision_local_time(const WalkPath<D>& X, const WalkPath<D>& Y, double t) {
    return collision_local_time_window(X, Y, 0.0, t);
}

struct ProbeCheck {
    double probe_time = 0;
    double frequency = 0;
    double expected = 0;
    double std_err = 0;
    bool pass = false;
};

struct DifferenceWalkReport {
    std::vector<ProbeCheck> probes;
    bool pass = true;
};

// Empirical return frequency of X - Y against the rate-(1+rho) kernel.
// `table` must be a rate-1 table with horizon >= (1+rho) * max probe time.
template <int D>
DifferenceWalkReport difference_walk_check(const JumpKernel<D>& kernel, const KernelTable<D>& table,
                                           double rho, const std::vector<double>& probe_times,
                                           int n_samples, RngStream& stream) {
    if (rho < 0) throw NumericsError("difference_walk_check: rho must be >= 0");
    double horizon = 0;
    for (double t : probe_times) horizon = std::max(horizon, t);
    std::vector<std::int64_t> hits(probe_times.size(), 0);
    for (int s = 0; s < n_samples; ++s) {
        const WalkPath<D> X = sample_path(kernel, 1.0, horizon, stream);
        const WalkPath<D> Y = sample_path(kernel, rho, horizon, stream);
        for (std::size_t k = 0; k < probe_times.size(); ++k)
            if (X.position_at(probe_times[k]) == Y.position_at(probe_times[k])) ++hits[k];
    }
    DifferenceWalkReport report;
    for (std::size_t k = 0; k < probe_times.size(); ++k) {
        ProbeCheck pc;
        pc.probe_time = probe_times[k];
        pc.frequency = static_cast<double>(hits[k]) / n_samples;
        pc.expected = table.p0((1.0 + rho) * probe_times[k]);
        pc.std_err = std::sqrt(std::max(pc.expected * (1 - pc.expected), 1e-12) / n_samples);
        pc.pass = std::fabs(pc.frequency - pc.expected) <= 3.0 * pc.std_err;
        report.pass = report.pass && pc.pass;
        report.probes.push_back(pc);
    }
    return report;
}

} // namespace rwpm
