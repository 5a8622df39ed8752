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

#include "adsbl/channel.hpp"
#include "adsbl/config.hpp"
#include "adsbl/dataset.hpp"
#include "doctest.h"
#include "helpers.hpp"

#include <fstream>
#include <iterator>
#include <set>

using namespace adsbl;

namespace {

std::vector<char> slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Dataset make_dataset(const SystemConfig& cfg, int count, std::uint64_t seed) {
    Dataset ds;
    ds.split = Split::val;
    ds.config = cfg;
    std::mt19937_64 rng(seed);
    for (int i = 0; i < count; ++i) ds.samples.push_back(build_channel(cfg, draw_paths(cfg, rng)));
    return ds;
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("defaults") {
    SystemConfig cfg = default_config();
    CHECK(cfg.n_antennas == 32);
    CHECK(cfg.n_rf == 4);
    CHECK(cfg.n_uses == 4);
    CHECK(cfg.n_subcarriers == 32);
    CHECK(cfg.grid_angular == 64);
    CHECK(cfg.grid_delay == 64);
    CHECK(cfg.n_clusters == 3);
    CHECK(cfg.n_subpaths == 10);
    CHECK(cfg.subcarrier_spacing() == doctest::Approx(125e6).epsilon(1e-15));
    CHECK(cfg.snr_db() == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(cfg.n_measurements() == 512);
    CHECK(cfg.grid_size() == 4096);
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("subcarrier frequencies") {
    SystemConfig cfg = default_config();
    CHECK(subcarrier_freq(cfg, 1) == doctest::Approx(26.0625e9).epsilon(1e-15));
    CHECK(subcarrier_freq(cfg, 32) == doctest::Approx(29.9375e9).epsilon(1e-15));
    double sum = 0.0;
    for (int k = 1; k <= cfg.n_subcarriers; ++k) {
        sum += subcarrier_freq(cfg, k);
        if (k > 1) CHECK(subcarrier_freq(cfg, k) - subcarrier_freq(cfg, k - 1) == doctest::Approx(125e6));
    }
    CHECK(sum / cfg.n_subcarriers == doctest::Approx(cfg.center_freq).epsilon(1e-14));

    SystemConfig odd = cfg;
    odd.n_subcarriers = 5;
    CHECK(subcarrier_freq(odd, 3) == odd.center_freq);

    CHECK_THROWS_AS(subcarrier_freq(cfg, 0), ConfigError);
    CHECK_THROWS_AS(subcarrier_freq(cfg, 33), ConfigError);
}

TEST_CASE("validation") {
    auto bad = [](auto mutate) {
        SystemConfig cfg = default_config();
        mutate(cfg);
        return cfg;
    };
    CHECK_THROWS_AS(bad([](SystemConfig& c) { c.n_antennas = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](SystemConfig& c) { c.grid_delay = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](SystemConfig& c) { c.n_rf = 33; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](SystemConfig& c) { c.center_freq = 2e9; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](SystemConfig& c) { c.noise_var = 0.0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](SystemConfig& c) { c.angle_spread = -1.0; }).validate(), ConfigError);
    CHECK_NOTHROW(bad([](SystemConfig& c) { c.delay_spread = 0.0; }).validate());
}

TEST_CASE("snr round trip") {
    SystemConfig cfg;
    for (double snr : {-10.0, 0.0, 7.5, 30.0}) {
        cfg.set_snr_db(snr);
        CHECK(cfg.snr_db() == doctest::Approx(snr).epsilon(1e-12));
    }
}

TEST_CASE("config text parsing") {
    SystemConfig cfg = parse_config_text("# comment\n n_antennas = 16 \nsnr_db=20\nangle_spread_deg = 2 # trailing\n\n");
    CHECK(cfg.n_antennas == 16);
    CHECK(cfg.noise_var == doctest::Approx(0.01));
    CHECK(cfg.angle_spread == doctest::Approx(2.0 * kPi / 180.0));

    SystemConfig round = parse_config_text(to_config_text(cfg));
    CHECK(round == cfg);
    CHECK(config_hash(round) == config_hash(cfg));

    CHECK_THROWS_AS(parse_config_text("no_such_key = 1"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("n_antennas = 3.5"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("n_antennas 16"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("n_rf = 64"), ConfigError);
}

TEST_CASE("config hash covers every field") {
    SystemConfig base;
    std::set<std::uint64_t> hashes{config_hash(base)};
    for (const auto& key : config_keys()) {
        SystemConfig cfg = base;
        if (key == "rng_seed") cfg.rng_seed += 1;
        else if (key == "snr_db") cfg.set_snr_db(3.0);
        else if (key.find("_ghz") != std::string::npos || key.find("_ns") != std::string::npos ||
                 key.find("_deg") != std::string::npos) continue;
        else {
            std::string text = key + " = " + (key == "n_antennas" ? "40" : "5");
            if (key == "center_freq") text = "center_freq = 3e10";
            if (key == "bandwidth") text = "bandwidth = 2e9";
            if (key == "noise_var") text = "noise_var = 0.5";
            if (key.find("spread") != std::string::npos || key == "max_mean_delay") text = key + " = 1e-9";
            cfg = parse_config_text(text, base);
        }
        CHECK(hashes.insert(config_hash(cfg)).second);
    }
}

TEST_CASE("rng streams") {
    RngStreams a(7), b(7), c(8);
    auto s1 = a.stream("channel-train");
    auto s2 = b.stream("channel-train");
    auto s3 = a.stream("channel-val");
    auto s4 = c.stream("channel-train");
    auto s5 = a.stream("channel-train", 1);
    std::uint64_t v1 = s1();
    CHECK(v1 == s2());
    CHECK(v1 != s3());
    CHECK(v1 != s4());
    CHECK(v1 != s5());
}

TEST_CASE("laplacian draws have the requested variance") {
    std::mt19937_64 rng(3);
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        double v = laplacian(rng, 0.5);
        sum += v;
        sq += v * v;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(sq / n == doctest::Approx(0.25).epsilon(0.02));
}

TEST_CASE("complex normal variance and circularity") {
    std::mt19937_64 rng(4);
    const int n = 200000;
    double power = 0.0;
    cdouble pseudo = 0.0;
    for (int i = 0; i < n; ++i) {
        cdouble v = complex_normal(rng, 2.0);
        power += std::norm(v);
        pseudo += v * v;
    }
    CHECK(power / n == doctest::Approx(2.0).epsilon(0.02));
    CHECK(std::abs(pseudo / static_cast<double>(n)) < 0.03);
}

}  // TEST_SUITE

TEST_SUITE("dataset") {

TEST_CASE("round trip is exact") {
    testing::TempDir tmp;
    SystemConfig cfg = testing::tiny_config();
    Dataset ds = make_dataset(cfg, 10, 11);
    save_dataset(ds, tmp / "a.bin");
    Dataset back = load_dataset(tmp / "a.bin", cfg);
    CHECK(back.split == Split::val);
    CHECK(back.config == cfg);
    REQUIRE(back.samples.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK((back.samples[i].H - ds.samples[i].H).norm() == 0.0);
        CHECK(back.samples[i].paths.delay == ds.samples[i].paths.delay);
        CHECK(back.samples[i].paths.angle == ds.samples[i].paths.angle);
        CHECK(back.samples[i].paths.gain == ds.samples[i].paths.gain);
        CHECK(back.samples[i].paths.cluster_angle == ds.samples[i].paths.cluster_angle);
    }
    save_dataset(back, tmp / "b.bin");
    CHECK(slurp(tmp / "a.bin") == slurp(tmp / "b.bin"));
}

TEST_CASE("empty dataset") {
    testing::TempDir tmp;
    Dataset ds = make_dataset(testing::tiny_config(), 0, 1);
    save_dataset(ds, tmp / "e.bin");
    CHECK(load_dataset(tmp / "e.bin").samples.empty());
}

TEST_CASE("truncated and foreign files are rejected") {
    testing::TempDir tmp;
    SystemConfig cfg = testing::tiny_config();
    save_dataset(make_dataset(cfg, 3, 2), tmp / "a.bin");
    auto bytes = slurp(tmp / "a.bin");
    for (std::size_t cut : {std::size_t{4}, bytes.size() / 2, bytes.size() - 1}) {
        std::ofstream out(tmp / "t.bin", std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(cut));
        out.close();
        CHECK_THROWS_AS(load_dataset(tmp / "t.bin"), IoError);
    }
    {
        std::ofstream out(tmp / "x.bin", std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.put('!');
    }
    CHECK_THROWS_AS(load_dataset(tmp / "x.bin"), IoError);
    CHECK_THROWS_AS(load_dataset(tmp / "missing.bin"), IoError);

    SystemConfig other = cfg;
    other.noise_var = 0.5;
    CHECK_THROWS_AS(load_dataset(tmp / "a.bin", other), IoError);
}

TEST_CASE("split names") {
    for (Split s : {Split::train, Split::val, Split::test}) CHECK(parse_split(to_string(s)) == s);
    CHECK_THROWS_AS(parse_split("holdout"), ConfigError);
}

TEST_CASE("csv export") {
    testing::TempDir tmp;
    SystemConfig cfg = testing::tiny_config();
    Dataset ds = make_dataset(cfg, 2, 5);
    export_dataset_csv(ds, tmp / "d.csv");
    std::ifstream in(tmp / "d.csv");
    std::string line;
    int rows = 0;
    std::getline(in, line);
    CHECK(line.find("config_hash=") != std::string::npos);
    std::getline(in, line);
    CHECK(line == "sample,n,k,re,im");
    while (std::getline(in, line))
        if (!line.empty() && line[0] != '#') ++rows;
    CHECK(rows == 2 * cfg.n_antennas * cfg.n_subcarriers);
}

}  // TEST_SUITE
