#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>

#include "rwpm/disorder.hpp"
#include "rwpm/jump_kernel.hpp"
#include "rwpm/kernel_ops.hpp"
#include "rwpm/kernel_table.hpp"
#include "rwpm/pinning.hpp"
#include "rwpm/quadrature.hpp"
#include "rwpm/rng.hpp"

#include "oracle_utils.hpp"

using namespace rwpm;
using Catch::Approx;

namespace {

std::shared_ptr<const KernelTable<3>> shared_table() {
    static auto t = std::make_shared<const KernelTable<3>>(simple_random_walk<3>(), 1.0, 420.0,
                                                           1e-10, 90.0);
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

} // namespace

TEST_CASE("coarse grain configuration") {
    SECTION("canonical band uses A2 = L^{1/8}") {
        const auto cfg = CoarseGrainConfig::standard(1e4);
        CHECK(cfg.A2 == Approx(std::pow(1e4, 0.125)));
        CHECK(cfg.xi() == Approx(2.0 / 3.0));
    }

    SECTION("zeta <= 2 is rejected") {
        CHECK_THROWS_AS(CoarseGrainConfig::standard(100.0, 2.0), ConfigError);
    }

    SECTION("gamma outside (2/3, 1) is rejected") {
        CoarseGrainConfig cfg = CoarseGrainConfig::standard(100.0);
        cfg.gamma = 0.5;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
}

TEST_CASE("self-intersection functional") {
    SECTION("transient ladder path has no band coincidences") {
        WalkPath<3> Y;
        Y.rate = 1.0;
        Y.horizon = 40.0;
        Y.sites.push_back(Site<3>{});
        for (int k = 1; k <= 39; ++k) {
            Y.jump_times.push_back(static_cast<double>(k));
            Y.sites.push_back(Site<3>{k, 0, 0});
        }
        const auto cfg = CoarseGrainConfig::standard(40.0).with_band(6.0);
        CHECK(h_functional(Y, cfg) == 0.0);
    }

    SECTION("constant path reduces to the closed lag integral") {
        WalkPath<3> Y;
        Y.rate = 0.0;
        Y.horizon = 50.0;
        Y.sites.push_back(Site<3>{});
        const auto cfg = CoarseGrainConfig::standard(50.0).with_band(10.0);
        const double xi = cfg.xi();
        const double expected = integrate(
            [&](double u) { return (cfg.L - u) * std::pow(std::log(u), -xi); }, cfg.A1, cfg.A2, 1e-12);
        CHECK(h_functional(Y, cfg) == Approx(expected).epsilon(1e-9));
    }

    SECTION("matches the fine-grid Riemann oracle on a seeded path") {
        RngStream rng(501, 0);
        const auto cfg = CoarseGrainConfig::standard(200.0).with_band(25.0);
        const auto Y = sample_path(shared_table()->kernel(), 1.0, 200.0, rng);
        const double exact = h_functional(Y, cfg);
        const double grid = oracle::h_functional_riemann(Y, 200.0, cfg.A1, cfg.A2, cfg.xi(), 0.005);
        CHECK(grid == Approx(exact).epsilon(1e-3));
    }

    SECTION("band area upper bound") {
        RngStream rng(503, 0);
        const auto cfg = CoarseGrainConfig::standard(100.0).with_band(15.0);
        for (int k = 0; k < 20; ++k) {
            const auto Y = sample_path(shared_table()->kernel(), 0.5, 100.0, rng);
            const double h = h_functional(Y, cfg);
            CHECK(h >= 0.0);
            CHECK(h <= (cfg.A2 - cfg.A1) * cfg.L);
        }
    }
}

TEST_CASE("mean of the functional") {
    const auto& table = *shared_table();

    SECTION("rho = 0 equals the constant-path value") {
        const auto cfg = CoarseGrainConfig::standard(50.0).with_band(10.0);
        const double xi = cfg.xi();
        const double expected = integrate(
            [&](double u) { return (cfg.L - u) * std::pow(std::log(u), -xi); }, cfg.A1, cfg.A2, 1e-12);
        CHECK(h_mean_exact(cfg, 0.0, table) == Approx(expected).epsilon(1e-10));
    }

    SECTION("crude band bound holds") {
        const auto cfg = CoarseGrainConfig::standard(200.0).with_band(25.0);
        CHECK(h_mean_exact(cfg, 1.0, table) <= (cfg.A2 - cfg.A1) * cfg.L);
    }

    SECTION("monte carlo mean matches the quadrature") {
        RngStream rng(507, 0);
        const auto cfg = CoarseGrainConfig::standard(200.0).with_band(25.0);
        const double expected = h_mean_exact(cfg, 1.0, table);
        RunningStat acc;
        for (int k = 0; k < 2000; ++k)
            acc.add(h_functional(sample_path(table.kernel(), 1.0, 200.0, rng), cfg));
        CHECK(std::fabs(acc.mean() - expected) <= 3.0 * acc.std_err());
    }
}

TEST_CASE("variance scaling") {
    const auto& table = *shared_table();

    SECTION("degenerate band gives zero variance") {
        RngStream rng(509, 0);
        const auto cfg = CoarseGrainConfig::standard(100.0).with_band(CoarseGrainConfig::standard(100.0).A1);
        RunningStat acc;
        for (int k = 0; k < 50; ++k)
            acc.add(h_functional(sample_path(table.kernel(), 1.0, 100.0, rng), cfg));
        CHECK(acc.variance() == 0.0);
    }

    SECTION("linear-in-L window at rho = 1") {
        RngStream rng(521, 0);
        const auto cfg = CoarseGrainConfig::standard(200.0).with_band(25.0);
        const auto rep = h_variance_check(cfg, 1.0, table, 2000, rng);
        CHECK(rep.pass);
    }

    SECTION("rho-dependence exponent sits in the admissible window") {
        RngStream rng(523, 0);
        const auto cfg = CoarseGrainConfig::standard(150.0).with_band(20.0);
        std::vector<double> rhos{0.25, 0.5, 1.0};
        std::vector<double> logv;
        for (double rho : rhos) {
            RunningStat acc;
            for (int k = 0; k < 1500; ++k)
                acc.add(h_functional(sample_path(table.kernel(), rho, cfg.L, rng), cfg));
            logv.push_back(std::log(acc.variance()));
        }
        // least-squares slope of log Var against log rho
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < rhos.size(); ++i) {
            const double x = std::log(rhos[i]);
            sx += x;
            sy += logv[i];
            sxx += x * x;
            sxy += x * logv[i];
        }
        const double n = static_cast<double>(rhos.size());
        const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        CHECK(slope >= -3.8);
        CHECK(slope <= -1.5);
    }
}

TEST_CASE("tilted disorder sampler") {
    const auto& table = *shared_table();

    SECTION("rho = 0 accepts every proposal") {
        RngStream rng(541, 0);
        const auto cfg = CoarseGrainConfig::standard(30.0).with_band(6.0);
        RenewalSample sigma;
        sigma.origin = 2.0;
        sigma.epochs = {2.0, 9.0, 17.0};
        const auto td = sample_tilted_disorder(sigma, cfg, 0.0, table, 40.0, rng);
        for (double a : td.acceptance) CHECK(a == 1.0);
        CHECK(td.path.jump_count() == 0);
    }

    SECTION("one-interval origin mass matches the exact tilted law") {
        RngStream rng(547, 0);
        const auto cfg = CoarseGrainConfig::standard(30.0).with_band(6.0);
        const double dt = 5.0, rho = 1.0;
        RenewalSample sigma;
        sigma.origin = 0.0;
        sigma.epochs = {0.0, dt};
        const double expected = table.p0(rho * dt) * table.p0(dt) / table.p0((1.0 + rho) * dt);
        int hits = 0;
        const int n = 10000;
        for (int k = 0; k < n; ++k) {
            const auto td = sample_tilted_disorder(sigma, cfg, rho, table, cfg.L, rng);
            if (td.path.position_at(dt) == Site<3>{}) ++hits;
        }
        const double freq = static_cast<double>(hits) / n;
        const double se = std::sqrt(expected * (1 - expected) / n);
        CHECK(std::fabs(freq - expected) <= 3.0 * se);
    }

    SECTION("one-interval increment histogram passes a chi-square test") {
        RngStream rng(557, 0);
        const auto cfg = CoarseGrainConfig::standard(30.0).with_band(6.0);
        const double dt = 5.0, rho = 1.0;
        RenewalSample sigma;
        sigma.origin = 0.0;
        sigma.epochs = {0.0, dt};
        const LatticeField<3> fy = table.field_at(rho * dt);
        const LatticeField<3> fx = table.field_at(dt);
        const double denom = table.p0((1.0 + rho) * dt);

        const int n = 10000;
        std::map<Site<3>, int> counts;
        for (int k = 0; k < n; ++k) {
            const auto td = sample_tilted_disorder(sigma, cfg, rho, table, cfg.L, rng);
            ++counts[td.path.position_at(dt)];
        }
        std::vector<double> observed, expected;
        fy.for_each([&](const Site<3>& y, double vy) {
            const double mass = vy * fx.at(y) / denom;
            if (mass * n < 0.5) return;
            expected.push_back(mass * n);
            const auto it = counts.find(y);
            observed.push_back(it == counts.end() ? 0.0 : it->second);
        });
        const auto res = chi_square_test(observed, expected);
        CHECK(res.p_value > 0.01);
    }
}

TEST_CASE("decomposition identity") {
    const auto& table = *shared_table();
    const auto cfg = CoarseGrainConfig::standard(80.0).with_band(12.0);

    SECTION("single renewal point") {
        RngStream rng(563, 0);
        RenewalSample sigma;
        sigma.origin = 30.0;
        sigma.epochs = {30.0};
        const auto td = sample_tilted_disorder(sigma, cfg, 1.0, table, cfg.L + cfg.A2 + 1.0, rng);
        CHECK(h_decomposition_residual(td, cfg) < 1e-6);
    }

    SECTION("seeded multi-interval configurations") {
        RngStream rng(569, 0);
        const auto& m = model_rho1();
        for (int k = 0; k < 5; ++k) {
            const RenewalSample sigma = sample_renewal(*m.law, 5.0 + k, cfg.L - 5.0, rng);
            const auto td = sample_tilted_disorder(sigma, cfg, 1.0, table, cfg.L + cfg.A2 + 1.0, rng);
            CHECK(h_decomposition_residual(td, cfg) < 1e-6);

            // boundary-crossing pieces stay below the band-area bound
            const auto iv = ConstancyIntervals<3>::from_path(td.path);
            const double c_term = coincidence_band_integral(iv, 0.0, sigma.epochs.back(), cfg.L,
                                                            td.path.horizon, cfg.A1, cfg.A2, cfg.xi());
            CHECK(c_term <= cfg.A2 * cfg.A2);
            for (std::size_t i = 1; i < sigma.epochs.size(); ++i) {
                const double ext =
                    coincidence_band_integral(iv, sigma.epochs[i - 1], sigma.epochs[i],
                                              sigma.epochs[i], td.path.horizon, cfg.A1, cfg.A2, cfg.xi());
                CHECK(ext <= cfg.A2 * cfg.A2);
            }
        }
    }
}

TEST_CASE("intra-interval mean gap") {
    const auto& table = *shared_table();
    const auto cfg = CoarseGrainConfig::standard(400.0).with_band(40.0);

    SECTION("empty band below A1") {
        CHECK(h_int_gap_exact(2.0, cfg, 1.0, table) == 0.0);
    }

    SECTION("positive across the sweep, with the scaling envelope") {
        double c_min = 1e300;
        for (int k = 1; k <= 50; ++k) {
            const double dt = 2.0 * cfg.A1 + (cfg.A2 - 2.0 * cfg.A1) * k / 50.0;
            const double v = h_int_gap_exact(dt, cfg, 1.0, table);
            CHECK(v > 0.0);
            c_min = std::min(c_min, v / (std::sqrt(dt) * std::pow(std::log(dt), -cfg.xi())));
        }
        CHECK(c_min > 0.0);
    }

    SECTION("tilted-sampler monte carlo agrees at dt = 4 A1") {
        RngStream rng(571, 0);
        const double dt = 4.0 * cfg.A1, rho = 1.0;
        const double exact_gap = h_int_gap_exact(dt, cfg, rho, table);
        RenewalSample sigma;
        sigma.origin = 0.0;
        sigma.epochs = {0.0, dt};
        RunningStat tilted, untilted;
        for (int k = 0; k < 4000; ++k) {
            const auto td = sample_tilted_disorder(sigma, cfg, rho, table, cfg.L, rng);
            tilted.add(coincidence_band_integral(ConstancyIntervals<3>::from_path(td.path), 0.0, dt,
                                                 0.0, dt, cfg.A1, cfg.A2, cfg.xi()));
            const auto Y = sample_path(table.kernel(), rho, dt, rng);
            untilted.add(coincidence_band_integral(ConstancyIntervals<3>::from_path(Y), 0.0, dt, 0.0,
                                                   dt, cfg.A1, cfg.A2, cfg.xi()));
        }
        const double mc_gap = tilted.mean() - untilted.mean();
        const double se = std::sqrt(tilted.std_err() * tilted.std_err() +
                                    untilted.std_err() * untilted.std_err());
        CHECK(std::fabs(mc_gap - exact_gap) <= 3.0 * se);
    }
}

TEST_CASE("boundary-crossing mean gap sign") {
    const auto& table = *shared_table();
    const auto cfg = CoarseGrainConfig::standard(60.0).with_band(15.0);

    SECTION("rho = 0 has no tilt and zero gap") {
        RngStream rng(577, 0);
        RenewalSample sigma;
        sigma.origin = 5.0;
        sigma.epochs = {5.0, 20.0, 40.0};
        const auto rep = h_ext_gap_sign_check(sigma, cfg, 0.0, table, 200, rng);
        for (const auto& iv : rep.intervals) CHECK(iv.diff == Approx(0.0).margin(1e-12));
    }

    SECTION("three seeded intervals at rho = 1") {
        RngStream rng(587, 0);
        RenewalSample sigma;
        sigma.origin = 5.0;
        sigma.epochs = {5.0, 17.0, 30.0, 48.0};
        const auto rep = h_ext_gap_sign_check(sigma, cfg, 1.0, table, 1200, rng);
        CHECK(rep.pass);
    }
}

TEST_CASE("two-level test function") {
    SECTION("branch values") {
        CHECK(test_function_f(1.0, 2.0, 0.125) == 1.0);
        CHECK(test_function_f(3.0, 2.0, 0.125) == 0.125);
    }

    SECTION("negative-moment identity with the plugged-in tail estimate") {
        RngStream rng(593, 0);
        const auto& table = *shared_table();
        const auto cfg = CoarseGrainConfig::standard(100.0).with_band(15.0);
        const double mean_h = h_mean_exact(cfg, 1.0, table);
        const double m_thresh = h_threshold(cfg, mean_h, 1.0);
        const auto rep = change_of_measure_check(cfg, 1.0, table, m_thresh, 3000, 3000, rng);
        CHECK(rep.pass);
        CHECK(rep.moment <= 2.0 + 3.0 * rep.moment_se);
    }
}

TEST_CASE("fractional moment ladder") {
    const auto& m = model_rho1();

    SECTION("z = 0 is identically 1") {
        RngStream rng(599, 0);
        const auto ladder = fractional_moment_ladder(m, 0.0, 0.75, 5.0, 0.1, 5, rng);
        for (const auto& e : ladder) CHECK(e.value == Approx(1.0).margin(1e-12));
    }

    SECTION("subcritical ladder does not grow") {
        RngStream rng(601, 0);
        const auto ladder = fractional_moment_ladder(m, 0.8, 0.75, 10.0, 0.1, 60, rng);
        CHECK(ladder[2].value <= ladder[0].value + 3.0 * (ladder[0].std_err + ladder[2].std_err));
    }

    SECTION("near-critical ladder is recorded without assertion") {
        RngStream rng(607, 0);
        const double L = 20.0;
        const auto ladder = fractional_moment_ladder(m, 1.0 + 1.0 / L, 0.75, L, 0.1, 30, rng);
        for (const auto& e : ladder) {
            CHECK(e.value > 0.0);
            CHECK(std::isfinite(e.std_err));
        }
    }

    SECTION("gamma outside the admissible range is rejected") {
        RngStream rng(613, 0);
        CHECK_THROWS_AS(fractional_moment_ladder(m, 1.0, 0.5, 5.0, 0.1, 2, rng), NumericsError);
    }
}

TEST_CASE("coarse grain split") {
    const auto& m = model_rho1();

    SECTION("single block: Z = 1 + pattern value") {
        RngStream rng(617, 0);
        const auto Y = sample_path(shared_table()->kernel(), 1.0, 10.0, rng);
        const auto rep = coarse_grain_split_check(m, 1.0, Y, 1, 10.0, 0.05);
        CHECK(rep.partition_ok);
        CHECK(rep.z_sum == Approx(1.0 + rep.pattern_values[0]).epsilon(1e-12));
    }

    SECTION("z = 0 leaves only the empty pattern") {
        RngStream rng(619, 0);
        const auto Y = sample_path(shared_table()->kernel(), 1.0, 20.0, rng);
        const auto rep = coarse_grain_split_check(m, 0.0, Y, 2, 10.0, 0.05);
        CHECK(rep.z_sum == Approx(1.0).margin(1e-14));
        CHECK(rep.z_full == Approx(1.0).margin(1e-14));
    }

    SECTION("m = 3 partition identity and fractional subadditivity") {
        RngStream rng(631, 0);
        const auto Y = sample_path(shared_table()->kernel(), 1.0, 30.0, rng);
        const auto rep = coarse_grain_split_check(m, 1.05, Y, 3, 10.0, 0.05);
        CHECK(rep.partition_ok);
        CHECK(rep.residual_rel < 1e-6);
        CHECK(rep.subadditive_ok);
    }
}

TEST_CASE("pattern weights") {
    const auto& m = model_rho1();
    const double h = 0.1, block_len = 10.0;
    const TimeGrid grid = TimeGrid::uniform(h, 5.0 * block_len);
    const auto P = renewal_function(*m.law, grid);

    SECTION("empty pattern is 1") {
        CHECK(p_pattern_weight(*m.law, P, h, block_len, {}) == 1.0);
    }

    SECTION("single block against a direct double sum") {
        const double v = p_pattern_weight(*m.law, P, h, block_len, {1});
        double direct = 0;
        const int n = static_cast<int>(block_len / h);
        for (int ga = 1; ga <= n; ++ga)
            for (int gb = ga + 1; gb <= n; ++gb)
                direct += m.law->interval_mass((ga - 1) * h, ga * h) *
                          P[static_cast<std::size_t>(gb - ga)] * h;
        CHECK(v == Approx(direct).epsilon(1e-12));
    }

    SECTION("block-gap decay ratio near 4^{-3/2}") {
        const double w12 = p_pattern_weight(*m.law, P, h, block_len, {1, 2});
        const double w15 = p_pattern_weight(*m.law, P, h, block_len, {1, 5});
        CHECK(w15 / w12 == Approx(std::pow(4.0, -1.5)).epsilon(0.3));
    }
}

TEST_CASE("truncated-gap sums") {
    const auto& m = model_rho1();

    SECTION("small L empties the band") {
        RngStream rng(641, 0);
        const auto rep = z_sum_large_dev(*m.law, 1000.0, 2.0 / 3.0, 1.0, 20000, 50, rng);
        CHECK(rep.mu_mc.value == 0.0);
        CHECK(rep.mu_quadrature == 0.0);
    }

    SECTION("mean matches quadrature at L = e^{40}") {
        RngStream rng(643, 0);
        const auto rep = z_sum_large_dev(*m.law, std::exp(40.0), 2.0 / 3.0, 1.0, 200000, 0, rng);
        CHECK(rep.n_sum == 0); // tail part infeasible at this scale and skipped
        CHECK(std::fabs(rep.mu_mc.value - rep.mu_quadrature) <= 3.0 * rep.mu_mc.std_err);
    }

    SECTION("lower-tail probability is small at a feasible scale") {
        RngStream rng(647, 0);
        const auto rep = z_sum_large_dev(*m.law, 1e7, 2.0 / 3.0, 1.0, 50000, 200, rng);
        REQUIRE(rep.n_sum > 0);
        CHECK(rep.tail_prob < 0.05);
    }
}
