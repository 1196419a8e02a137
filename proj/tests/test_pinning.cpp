#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>

#include "rwpm/jump_kernel.hpp"
#include "rwpm/kernel_ops.hpp"
#include "rwpm/kernel_table.hpp"
#include "rwpm/pinning.hpp"
#include "rwpm/renewal.hpp"
#include "rwpm/rng.hpp"

using namespace rwpm;
using Catch::Approx;

namespace {

std::shared_ptr<const KernelTable<3>> shared_table() {
    static auto t = std::make_shared<const KernelTable<3>>(simple_random_walk<3>(), 1.0, 420.0,
                                                           1e-10, 60.0);
    return t;
}

double shared_green() {
    static const double g = green_function(simple_random_walk<3>(), 1.0);
    return g;
}

const PinningModel<3>& model_rho1() {
    static const PinningModel<3> m(shared_table(), 1.0, shared_green());
    return m;
}

const PinningModel<3>& model_rho0() {
    static const PinningModel<3> m(shared_table(), 0.0, shared_green());
    return m;
}

} // namespace

TEST_CASE("parameter conversions and critical point") {
    const auto& m = model_rho1();

    SECTION("z and beta round trip") {
        for (double beta : {0.1, 0.66, 1.3, 2.0})
            CHECK(m.beta_from_z(m.z_from_beta(beta)) == Approx(beta).epsilon(1e-15));
    }

    SECTION("annealed critical point values") {
        CHECK(annealed_critical_point(model_rho0()) == Approx(1.0 / shared_green()).epsilon(1e-12));
        CHECK(annealed_critical_point(model_rho0()) == Approx(0.65946).epsilon(1e-4));
        CHECK(annealed_critical_point(model_rho1()) == Approx(2.0 / shared_green()).epsilon(1e-12));
        const PinningModel<3> half(shared_table(), 0.5, shared_green());
        CHECK(annealed_critical_point(half) == Approx(1.5 / shared_green()).epsilon(1e-12));
    }
}

TEST_CASE("renewal weight W") {
    const auto& m1 = model_rho1();
    const auto& m0 = model_rho0();

    SECTION("identical kernels give W = 1 at the origin when rho = 0") {
        for (double dt : {0.3, 1.0, 7.0}) CHECK(m0.weight_w(dt, Site<3>{}) == Approx(1.0).epsilon(1e-14));
    }

    SECTION("disorder average of W is exactly 1 (lattice Chapman-Kolmogorov)") {
        for (double dt : {0.5, 2.0, 5.0, 12.0}) {
            const LatticeField<3> fy = shared_table()->field_at(m1.rho * dt);
            const LatticeField<3> fx = shared_table()->field_at(dt);
            double sum = 0;
            fy.for_each([&](const Site<3>& y, double vy) { sum += vy * fx.at(y); });
            CHECK(sum / shared_table()->p0(2.0 * dt) == Approx(1.0).margin(1e-10));
        }
    }

    SECTION("large-gap origin weight approaches (1+rho)^{3/2}") {
        const double w = shared_table()->p0(200.0) / shared_table()->p0(400.0);
        CHECK(w == Approx(std::pow(2.0, 1.5)).epsilon(0.01));
    }

    SECTION("numeric envelope dominates W on a sampled grid") {
        const double env = m1.weight_envelope();
        CHECK(env >= std::pow(2.0, 1.5));
        RngStream rng(301, 0);
        for (int k = 0; k < 200; ++k) {
            const double dt = 0.1 + 50.0 * rng.uniform();
            const auto Y = sample_path(shared_table()->kernel(), 1.0, dt, rng);
            CHECK(m1.weight_w(dt, Y.position_at(dt)) <= env);
        }
    }
}

TEST_CASE("quenched partition: monte carlo") {
    const auto& m = model_rho1();
    RngStream rng(303, 0);
    const auto Y = sample_path(shared_table()->kernel(), 1.0, 10.0, rng);

    SECTION("beta = 0 gives exactly 1") {
        RngStream s(305, 0);
        const Estimate e = quenched_partition_mc(m, 0.0, 10.0, Y, 200, s);
        CHECK(e.value == 1.0);
        CHECK(e.std_err == 0.0);
    }

    SECTION("negative beta keeps the estimate in (0, 1]") {
        RngStream s(307, 0);
        const Estimate e = quenched_partition_mc(m, -1.0, 10.0, Y, 2000, s);
        CHECK(e.value > 0.0);
        CHECK(e.value <= 1.0);
    }
}

TEST_CASE("volterra partition function") {
    const auto& m1 = model_rho1();
    const auto& m0 = model_rho0();

    SECTION("z = 0 collapses to the empty chain") {
        RngStream rng(311, 0);
        const auto Y = sample_path(shared_table()->kernel(), 1.0, 5.0, rng);
        const auto grid = DisorderGrid<3>::make(Y, 0.05, 5.0);
        const auto res = volterra_partition(m1, 0.0, grid);
        CHECK(res.log_z == Approx(0.0).margin(1e-14));
        for (double d : res.pinned_density) CHECK(d == 0.0);
    }

    SECTION("rho = 0 at z = 1 reproduces the renewal density") {
        const auto grid = DisorderGrid<3>::flat(0.05, 40.0);
        const auto res = volterra_partition(m0, 1.0, grid);
        const TimeGrid tg = TimeGrid::uniform(0.05, 40.0);
        const auto P = renewal_function(*m0.law, tg);
        for (std::size_t i = 10; i < P.size(); i += 100)
            CHECK(res.pinned_density[i] == Approx(P[i]).epsilon(1e-10));
    }

    SECTION("monte carlo and volterra agree on a seeded instance") {
        RngStream rng(313, 0);
        const double t = 20.0;
        const auto Y = sample_path(shared_table()->kernel(), 1.0, t, rng);
        const double z = 1.05;
        const double beta = m1.beta_from_z(z);
        const auto grid = DisorderGrid<3>::make(Y, 0.05, t);
        const auto vres = volterra_partition(m1, z, grid);
        RngStream s(317, 0);
        const Estimate mc = quenched_partition_mc(m1, beta, t, Y, 100000, s);
        CHECK(std::fabs(std::exp(vres.log_z) - mc.value) <= 3.0 * mc.std_err);
    }

    SECTION("halving the step moves the value by less than 1%") {
        RngStream rng(331, 0);
        const double t = 30.0;
        const auto Y = sample_path(shared_table()->kernel(), 1.0, t, rng);
        const auto res_h = volterra_partition(m1, 1.1, DisorderGrid<3>::make(Y, 0.1, t));
        const auto res_h2 = volterra_partition(m1, 1.1, DisorderGrid<3>::make(Y, 0.05, t));
        CHECK(std::fabs(std::exp(res_h.log_z - res_h2.log_z) - 1.0) < 0.01);
    }

    SECTION("partition function is nondecreasing in t") {
        RngStream rng(337, 0);
        const auto Y = sample_path(shared_table()->kernel(), 1.0, 25.0, rng);
        const auto res = volterra_partition(m1, 1.2, DisorderGrid<3>::make(Y, 0.05, 25.0));
        double prev = 0.0;
        for (double s = 2.0; s <= 25.0; s += 1.0) {
            const double cur = res.log_z_at(s);
            CHECK(cur >= prev - 1e-12);
            prev = cur;
        }
    }

    SECTION("deterministic given the seed") {
        auto once = [](std::uint64_t seed) {
            RngStream rng(seed, 0);
            const auto Y = sample_path(shared_table()->kernel(), 1.0, 10.0, rng);
            return volterra_partition(model_rho1(), 1.1, DisorderGrid<3>::make(Y, 0.05, 10.0)).log_z;
        };
        CHECK(once(999) == once(999));
    }
}

TEST_CASE("annealed partition function") {
    const auto& m = model_rho1();

    SECTION("beta = 0 gives 1") {
        const auto res = annealed_partition(m, 0.0, 0.05, 10.0);
        CHECK(res.log_z == Approx(0.0).margin(1e-14));
    }

    SECTION("critical z = 1: sublinear growth of log Z") {
        const auto res = annealed_partition(m, 1.0, 0.05, 200.0);
        const double t = 100.0;
        const double gap = (res.log_z_at(2.0 * t) - res.log_z_at(t)) / t;
        CHECK(gap < 0.01);
    }

    SECTION("z = 1.2: stable exponential growth across a doubling") {
        const auto res = annealed_partition(m, 1.2, 0.05, 400.0);
        const double q1 = (res.log_z_at(200.0) - res.log_z_at(100.0)) / 100.0;
        const double q2 = (res.log_z_at(400.0) - res.log_z_at(200.0)) / 200.0;
        CHECK(q1 > 0.0);
        CHECK(std::fabs(q2 / q1 - 1.0) < 0.05);
    }

    SECTION("jensen: annealed dominates the disorder-averaged quenched log") {
        RngStream rng(401, 0);
        const double t = 50.0, z = 1.1;
        const auto ann = annealed_partition(m, z, 0.1, t);
        RunningStat quenched;
        for (int k = 0; k < 40; ++k) {
            const auto Y = sample_path(shared_table()->kernel(), 1.0, t, rng);
            quenched.add(volterra_partition(m, z, DisorderGrid<3>::make(Y, 0.1, t)).log_z);
        }
        CHECK(quenched.mean() <= ann.log_z + 3.0 * quenched.std_err());
    }
}

TEST_CASE("free energy estimates") {
    const auto& m = model_rho1();

    SECTION("negative beta stays at zero") {
        RngStream rng(403, 0);
        const Estimate e = free_energy_estimate(m, -0.5, 20.0, 0.1, 20, rng, 0.01);
        CHECK(e.value <= 3.0 * e.std_err + 1e-12);
    }

    SECTION("deep localized phase is strictly positive") {
        RngStream rng(409, 0);
        const double beta = 2.0 * annealed_critical_point(m);
        const Estimate e = free_energy_estimate(m, beta, 25.0, 0.1, 24, rng, 0.05);
        CHECK(e.value > 5.0 * e.std_err);
    }

    SECTION("the doubling test reports non-convergence near criticality") {
        // finite-t transients decay like 1/t there, slower than the tolerance
        RngStream rng(419, 0);
        const double beta = annealed_critical_point(m) - 0.1;
        CHECK_THROWS_AS(free_energy_estimate(m, beta, 25.0, 0.1, 16, rng, 0.001), NotConverged);
    }
}

TEST_CASE("distributional identity across disorder rates") {
    const auto& m0 = model_rho0();

    SECTION("degenerate rate pair is rejected") {
        RngStream rng(421, 0);
        CHECK_THROWS_AS(monotonicity_identity_check(model_rho1(), 1.0, 0.5, 10.0, 100, rng),
                        NumericsError);
    }

    SECTION("beta = 0 gives both sides exactly 1") {
        RngStream rng(431, 0);
        const auto rep = monotonicity_identity_check(m0, 1.0, 0.0, 10.0, 200, rng);
        CHECK(rep.lhs.value == 1.0);
        CHECK(rep.rhs.value == 1.0);
    }

    SECTION("rho 0 -> 1 at beta = 0.5, t = 20") {
        RngStream rng(433, 0);
        const auto rep = monotonicity_identity_check(m0, 1.0, 0.5, 20.0, 4000, rng);
        CHECK(rep.pass);
    }
}
