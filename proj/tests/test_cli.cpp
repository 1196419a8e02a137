#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "rwpm/experiment.hpp"

using namespace rwpm;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("experiment runs and output format") {
    SECTION("partition at beta = 0 returns exactly 1") {
        ExperimentSpec spec;
        spec.command = "partition";
        spec.params = {{"rho", 1.0}, {"beta", 0.0}, {"t", 5.0}, {"h", 0.1},
                       {"n_inner", 2000}, {"method", "both"}, {"table_horizon", 60.0}};
        spec.seed = 7;
        spec.out_path = "cli_partition_test.csv";
        spec.workers = 2;
        CHECK(run_experiment(spec) == 0);
        const std::string csv = slurp(spec.out_path);
        CHECK(csv.find("volterra,0,1,0,1") != std::string::npos); // log_z, value, std_err, n
        CHECK(csv.find("mc,0,1,0,") != std::string::npos);
        std::remove(spec.out_path.c_str());
        std::remove((spec.out_path + ".meta.json").c_str());
    }

    SECTION("unknown command exits with a config error") {
        ExperimentSpec spec;
        spec.command = "no-such-thing";
        spec.out_path = "cli_unknown_test.csv";
        CHECK(run_experiment(spec) == 1);
    }

    SECTION("lemma check writes instance/lhs/rhs/pass rows") {
        ExperimentSpec spec;
        spec.command = "lemma-check";
        spec.params = {{"lemma", "chapman"}, {"rho", 1.0}, {"table_horizon", 60.0}};
        spec.seed = 11;
        spec.out_path = "cli_lemma_test.csv";
        CHECK(run_experiment(spec) == 0);
        const std::string csv = slurp(spec.out_path);
        CHECK(csv.rfind("instance,lhs,rhs_or_bound,pass", 0) == 0);
        CHECK(csv.find("chapman_dt2,") != std::string::npos);
        std::remove(spec.out_path.c_str());
        std::remove((spec.out_path + ".meta.json").c_str());
    }
}

TEST_CASE("determinism of outputs") {
    auto run_once = [](int workers, const std::string& out) {
        ExperimentSpec spec;
        spec.command = "hl-stats";
        spec.params = {{"rho", 1.0}, {"L", 60.0}, {"A2", 10.0}, {"n", 400}, {"table_horizon", 60.0}};
        spec.seed = 12345;
        spec.out_path = out;
        spec.workers = workers;
        REQUIRE(run_experiment(spec) == 0);
        const std::string body = slurp(out);
        std::remove(out.c_str());
        std::remove((out + ".meta.json").c_str());
        return body;
    };

    SECTION("same seed reproduces byte-identical CSV") {
        const std::string a = run_once(2, "cli_det_a.csv");
        const std::string b = run_once(2, "cli_det_b.csv");
        CHECK(a == b);
    }

    SECTION("worker count does not change the bytes") {
        const std::string a = run_once(1, "cli_det_w1.csv");
        const std::string b = run_once(4, "cli_det_w4.csv");
        CHECK(a == b);
    }
}

TEST_CASE("sweeps") {
    SECTION("empty value list is a config error") {
        ExperimentSpec spec;
        spec.command = "hl-stats";
        spec.out_path = "cli_sweep_empty.csv";
        CHECK(emit_sweep(spec, "L", {}) == 1);
    }

    SECTION("one CSV holding all sweep rows") {
        ExperimentSpec spec;
        spec.command = "hl-stats";
        spec.params = {{"rho", 1.0}, {"A2", 10.0}, {"n", 200}, {"table_horizon", 60.0}};
        spec.seed = 99;
        spec.out_path = "cli_sweep_test.csv";
        spec.workers = 2;
        CHECK(emit_sweep(spec, "L", {50.0, 100.0}) == 0);
        const std::string csv = slurp(spec.out_path);
        std::size_t lines = 0;
        for (char c : csv)
            if (c == '\n') ++lines;
        CHECK(lines == 3); // header + one row per value
        CHECK(csv.rfind("L,", 0) == 0);
        std::remove(spec.out_path.c_str());
        std::remove((spec.out_path + ".meta.json").c_str());
    }
}
