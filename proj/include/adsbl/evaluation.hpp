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

#ifndef ADSBL_EVALUATION_HPP
#define ADSBL_EVALUATION_HPP

#include "adsbl/training.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace adsbl {

inline constexpr double kNmseFloorDb = -120.0;

// |H - H_hat|_F^2 / |H|_F^2. Throws ConfigError on shape mismatch or an
// all-zero truth.
double nmse(const CMat& truth, const CMat& estimate);
// 10 log10, floored at kNmseFloorDb.
double to_db(double linear);

// Shorthand of the complexity table: G = G_A G_D, M = Q N_RF.
struct FlopsDims {
    std::uint64_t k = 0, m = 0, g = 0, g_angular = 0, n = 0;
    static FlopsDims from(const SystemConfig& cfg);
};

// sbl, sbl-unfolding, amp-sbl-unfolding, sbl-af, sbl-af-fid, lista-reference,
// plus amp-sbl (the AMP E-step alone, 20 K M G). Throws ConfigError for
// anything else.
std::uint64_t flops_per_iteration(std::string_view algo, const SystemConfig& cfg);
std::vector<std::string> flops_algorithms();

enum class EstimatorFamily { angular_frequency, angular_delay };
std::uint64_t reconstruction_flops(EstimatorFamily family, const SystemConfig& cfg);

// Named estimator variants: sbl, sbl-unfolding, amp-sbl, amp-sbl-unfolding.
EstimatorSpec estimator_for(std::string_view algo, int iterations, const MStepNet* net);
bool is_learned(std::string_view algo);

struct AlgoScore {
    std::string algo;
    double nmse_db = 0.0;  // mean of linear ratios over non-failed samples
    int n_samples = 0;
    int failures = 0;
    std::uint64_t flops_total = 0;
    int iterations = 0;

    double fail_rate() const { return n_samples ? static_cast<double>(failures) / n_samples : 0.0; }
};

struct AlgoRequest {
    std::string algo;
    int iterations = 30;
    const MStepNet* net = nullptr;
};

// Scores every algorithm on identical channels and noise. A divergence of
// any estimator counts as a failure for that sample.
std::vector<AlgoScore> evaluate_algorithms(const Problem& problem, const std::vector<ChannelRealization>& channels,
                                           const std::vector<AlgoRequest>& algos, std::uint64_t noise_seed,
                                           int threads = 0);

struct SweepRow {
    std::string axis;
    double value = 0.0;
    AlgoScore score;
};

struct SweepResult {
    std::string axis;
    std::vector<SweepRow> rows;
};

// axis is "snr" (dB) or "q". Learned algorithms look up nets[value] and run
// at that net's depth.
SweepResult run_sweep(std::string_view axis, const std::vector<double>& points, const std::vector<AlgoRequest>& algos,
                      const SystemConfig& base, int n_samples, const std::map<double, const MStepNet*>& nets,
                      int threads = 0);

// axis,value,algo,nmse_db,n_samples,flops_total,fail_rate
void write_sweep_csv(const SweepResult& result, const std::filesystem::path& path, std::uint64_t cfg_hash,
                     std::uint64_t seed);
// algo,flops,nmse_db,iterations
void write_tradeoff_csv(const std::vector<AlgoScore>& scores, const std::filesystem::path& path,
                        std::uint64_t cfg_hash, std::uint64_t seed);

}  // namespace adsbl

#endif
