// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include "adsbl/evaluation.hpp"
#include "doctest.h"
#include "helpers.hpp"

#include <fstream>

using namespace adsbl;

TEST_SUITE("evaluation") {

TEST_CASE("nmse") {
    std::mt19937_64 rng(1);
    CMat h = testing::random_cmat(4, 3, rng);
    CHECK(nmse(h, h) == 0.0);
    CHECK(to_db(nmse(h, h)) == kNmseFloorDb);
    CHECK(nmse(h, CMat::Zero(4, 3)) == doctest::Approx(1.0));
    CHECK(nmse(h, 2.0 * h) == doctest::Approx(1.0));
    CHECK(to_db(1.0) == 0.0);
    CHECK(to_db(0.01) == doctest::Approx(-20.0));
    CHECK_THROWS_AS(nmse(CMat::Zero(4, 3), h), ConfigError);
    CHECK_THROWS_AS(nmse(h, CMat::Zero(3, 4)), ConfigError);
}

TEST_CASE("complexity table at the defaults") {
    SystemConfig cfg = default_config();
    CHECK(flops_per_iteration("amp-sbl-unfolding", cfg) == 43712512ULL);
    CHECK(flops_per_iteration("sbl", cfg) == 17179869184ULL);
    CHECK(flops_per_iteration("sbl-unfolding", cfg) - flops_per_iteration("sbl", cfg) == 1769472ULL);
    // 8 K G_A N = 8 * 32 * 64 * 32 and 8 K G = 8 * 32 * 4096.
    CHECK(reconstruction_flops(EstimatorFamily::angular_frequency, cfg) == 524288ULL);
    CHECK(reconstruction_flops(EstimatorFamily::angular_delay, cfg) == 1572864ULL);
    CHECK(reconstruction_flops(EstimatorFamily::angular_delay, cfg) -
              reconstruction_flops(EstimatorFamily::angular_frequency, cfg) == 1048576ULL);
    CHECK_THROWS_AS(flops_per_iteration("pc-sbl-plus", cfg), ConfigError);
    for (const auto& name : flops_algorithms()) CHECK(flops_per_iteration(name, cfg) > 0);
}

TEST_CASE("complexity table for random dimensions") {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> small(1, 40);
    for (int trial = 0; trial < 200; ++trial) {
        SystemConfig cfg;
        cfg.n_subcarriers = small(rng);
        cfg.n_uses = small(rng);
        cfg.n_antennas = small(rng) + 8;
        cfg.n_rf = std::min(cfg.n_antennas, small(rng));
        cfg.grid_angular = small(rng);
        cfg.grid_delay = small(rng);
        const unsigned long long k = cfg.n_subcarriers, m = cfg.n_uses * cfg.n_rf, ga = cfg.grid_angular,
                                 g = ga * cfg.grid_delay, n = cfg.n_antennas;
        CHECK(flops_per_iteration("sbl", cfg) == 16 * (k * m) * (k * m) * g);
        CHECK(flops_per_iteration("sbl-unfolding", cfg) == (16 * (k * m) * (k * m) + 432) * g);
        CHECK(flops_per_iteration("amp-sbl-unfolding", cfg) == (20 * k * m + 432) * g);
        CHECK(flops_per_iteration("amp-sbl", cfg) == 20 * k * m * g);
        CHECK(flops_per_iteration("sbl-af", cfg) == 16 * k * m * m * ga);
        CHECK(flops_per_iteration("sbl-af-fid", cfg) == 16 * m * m * ga + 8 * k * m * ga);
        CHECK(flops_per_iteration("lista-reference", cfg) == 4 * k * ((4 * m + 256) * n + 32768));
        CHECK(reconstruction_flops(EstimatorFamily::angular_frequency, cfg) == 8 * k * ga * n);
        CHECK(reconstruction_flops(EstimatorFamily::angular_delay, cfg) == 8 * k * ga * n + 8 * k * g);
    }
}

TEST_CASE("estimator lookup") {
    CHECK(estimator_for("sbl", 5, nullptr).e_step == EStepKind::exact);
    CHECK(estimator_for("amp-sbl", 5, nullptr).e_step == EStepKind::amp);
    CHECK_THROWS_AS(estimator_for("amp-sbl-unfolding", 5, nullptr), ConfigError);
    CHECK_THROWS_AS(estimator_for("lista-reference", 5, nullptr), ConfigError);
    CHECK(is_learned("sbl-unfolding"));
    CHECK_FALSE(is_learned("sbl"));
}

TEST_CASE("paired evaluation") {
    SystemConfig cfg = testing::tiny_config();
    Problem problem = make_problem(cfg);
    auto channels = generate_channels(cfg, 6, RngStreams(cfg.rng_seed), "eval");
    MStepNet identity(cfg.grid_angular, cfg.grid_delay, 4);
    std::vector<AlgoRequest> algos = {{"sbl", 10, nullptr}, {"sbl", 10, nullptr}, {"amp-sbl-unfolding", 4, &identity}};
    auto scores = evaluate_algorithms(problem, channels, algos, 77, 2);
    REQUIRE(scores.size() == 3);
    CHECK(scores[0].nmse_db == scores[1].nmse_db);
    CHECK(scores[0].n_samples == 6);
    CHECK(scores[0].failures == 0);
    CHECK(scores[0].nmse_db < 0.0);
    CHECK(scores[0].flops_total ==
          10 * flops_per_iteration("sbl", cfg) + reconstruction_flops(EstimatorFamily::angular_delay, cfg));

    auto single = evaluate_algorithms(problem, channels, {algos[0]}, 77, 1);
    CHECK(single[0].nmse_db == scores[0].nmse_db);
    auto other_seed = evaluate_algorithms(problem, channels, {algos[0]}, 78, 1);
    CHECK(other_seed[0].nmse_db != scores[0].nmse_db);
}

TEST_CASE("global phase rotation leaves the NMSE unchanged") {
    SystemConfig cfg = testing::tiny_config();
    Problem problem = make_problem(cfg);
    auto chan = generate_channels(cfg, 1, RngStreams(3), "phase").front();
    std::mt19937_64 rng(4);
    Observation obs = simulate_observation(cfg, problem.combiner, problem.op, chan, rng);
    const cdouble rot = std::polar(1.0, 0.9);
    Observation turned{obs.y * rot, obs.r * rot};
    ChannelRealization turned_chan{chan.paths, chan.H * rot};
    MStepNet identity(cfg.grid_angular, cfg.grid_delay, 5);
    for (const auto& spec : {estimator_for("sbl", 8, nullptr), estimator_for("amp-sbl-unfolding", 5, &identity)}) {
        auto a = run_estimator(spec, problem.op, obs, cfg.noise_var);
        auto b = run_estimator(spec, problem.op, turned, cfg.noise_var);
        double na = nmse(chan.H, reconstruct_channel(problem.dicts, a.x_hat));
        double nb = nmse(turned_chan.H, reconstruct_channel(problem.dicts, b.x_hat));
        CHECK(nb == doctest::Approx(na).epsilon(1e-9));
    }
}

TEST_CASE("sweeps") {
    SystemConfig cfg = testing::tiny_config();
    std::vector<AlgoRequest> algos = {{"sbl", 5, nullptr}, {"amp-sbl", 5, nullptr}};
    SweepResult snr = run_sweep("snr", {0, 5, 10, 15, 20}, algos, cfg, 4, {}, 1);
    CHECK(snr.rows.size() == 10);
    int sbl_rows = 0;
    for (const auto& row : snr.rows) {
        CHECK(row.axis == "snr");
        CHECK(row.score.n_samples == 4);
        if (row.score.algo == "sbl") ++sbl_rows;
    }
    CHECK(sbl_rows == 5);

    SweepResult q = run_sweep("q", {1, 2, 3}, {algos[0]}, cfg, 3, {}, 1);
    REQUIRE(q.rows.size() == 3);
    CHECK(q.rows[0].score.flops_total < q.rows[2].score.flops_total);

    SweepResult again = run_sweep("q", {1, 2, 3}, {algos[0]}, cfg, 3, {}, 2);
    for (std::size_t i = 0; i < 3; ++i) CHECK(again.rows[i].score.nmse_db == q.rows[i].score.nmse_db);

    CHECK_THROWS_AS(run_sweep("bandwidth", {1}, algos, cfg, 3, {}), ConfigError);
    CHECK_THROWS_AS(run_sweep("q", {2.5}, algos, cfg, 3, {}), ConfigError);
    CHECK_THROWS_AS(run_sweep("snr", {0}, {{"amp-sbl-unfolding", 3, nullptr}}, cfg, 3, {}), ConfigError);

    testing::TempDir tmp;
    write_sweep_csv(snr, tmp / "s.csv", config_hash(cfg), cfg.rng_seed);
    std::ifstream in(tmp / "s.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line.rfind("# config_hash=", 0) == 0);
    std::getline(in, line);
    CHECK(line == "axis,value,algo,nmse_db,n_samples,flops_total,fail_rate");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 10);

    write_tradeoff_csv({snr.rows[0].score}, tmp / "t.csv", config_hash(cfg), cfg.rng_seed);
    std::ifstream tin(tmp / "t.csv");
    std::getline(tin, line);
    std::getline(tin, line);
    CHECK(line == "algo,flops,nmse_db,iterations");
}

}  // TEST_SUITE
