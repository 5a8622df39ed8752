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

#ifndef ADSBL_CONFIG_HPP
#define ADSBL_CONFIG_HPP

#include "adsbl/common.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace adsbl {

// Every scalar parameter of one simulated system. Angles are radians, times
// seconds, frequencies Hz. The subcarrier spacing is derived from the
// bandwidth and never stored on its own.
struct SystemConfig {
    int n_antennas = 32;
    int n_rf = 4;
    int n_uses = 4;
    int n_subcarriers = 32;
    double center_freq = 28e9;
    double bandwidth = 4e9;
    int grid_angular = 64;
    int grid_delay = 64;
    double noise_var = 0.1;
    int n_clusters = 3;
    int n_subpaths = 10;
    double angle_spread = 4.0 * kPi / 180.0;
    double delay_spread = 0.06e-9;
    double max_mean_delay = 25e-9;
    int n_iterations = 30;
    std::uint64_t rng_seed = 20221114;

    double subcarrier_spacing() const { return bandwidth / n_subcarriers; }
    // Q * N_RF, rows of the per-subcarrier combiner.
    int measurements_per_subcarrier() const { return n_uses * n_rf; }
    // K * Q * N_RF, rows of the measurement matrix.
    int n_measurements() const { return n_subcarriers * n_uses * n_rf; }
    // G_A * G_D, length of the angular-delay vector.
    int grid_size() const { return grid_angular * grid_delay; }

    double snr_db() const;
    void set_snr_db(double snr_db);

    // Throws ConfigError naming the first violated constraint.
    void validate() const;

    bool operator==(const SystemConfig&) const = default;
};

SystemConfig default_config();

// Frequency of subcarrier k, 1-based.
double subcarrier_freq(const SystemConfig& cfg, int k);

// Stable 64-bit digest of every field, used to tie files to the config that
// produced them.
std::uint64_t config_hash(const SystemConfig& cfg);

// "key = value" lines, '#' comments. Keys are the snake_case field names;
// angle_spread_deg, delay_spread_ns, max_mean_delay_ns, center_freq_ghz,
// bandwidth_ghz and snr_db are accepted as unit-converted aliases.
SystemConfig parse_config_text(std::string_view text, SystemConfig base = default_config());
SystemConfig load_config_file(const std::filesystem::path& path, SystemConfig base = default_config());
void apply_config_key(SystemConfig& cfg, std::string_view key, std::string_view value);
std::string to_config_text(const SystemConfig& cfg);
std::vector<std::string> config_keys();

// One root seed spawns independent named sub-streams so that, for example,
// changing Q never perturbs channel draws.
class RngStreams {
public:
    explicit RngStreams(std::uint64_t root_seed) : root_(root_seed) {}
    std::mt19937_64 stream(std::string_view name, std::uint64_t index = 0) const;
    std::uint64_t root() const { return root_; }

private:
    std::uint64_t root_;
};

std::uint64_t splitmix64(std::uint64_t x);

// CN(0, variance) scalar.
cdouble complex_normal(std::mt19937_64& rng, double variance = 1.0);
// Zero-mean Laplacian parameterised by its standard deviation.
double laplacian(std::mt19937_64& rng, double std_dev);
double uniform(std::mt19937_64& rng, double lo, double hi);

}  // namespace adsbl

#endif
