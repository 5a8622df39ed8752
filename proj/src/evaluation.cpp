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

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace adsbl {

double nmse(const CMat& truth, const CMat& estimate) {
    if (truth.rows() != estimate.rows() || truth.cols() != estimate.cols())
        throw ConfigError("NMSE: shape mismatch");
    const double energy = truth.squaredNorm();
    if (!(energy > 0.0)) throw ConfigError("NMSE: reference channel has zero norm");
    return (truth - estimate).squaredNorm() / energy;
}

double to_db(double linear) {
    if (std::isnan(linear)) return linear;
    if (linear <= 0.0) return kNmseFloorDb;
    return std::max(kNmseFloorDb, 10.0 * std::log10(linear));
}

FlopsDims FlopsDims::from(const SystemConfig& cfg) {
    FlopsDims d;
    d.k = static_cast<std::uint64_t>(cfg.n_subcarriers);
    d.m = static_cast<std::uint64_t>(cfg.n_uses) * static_cast<std::uint64_t>(cfg.n_rf);
    d.g_angular = static_cast<std::uint64_t>(cfg.grid_angular);
    d.g = d.g_angular * static_cast<std::uint64_t>(cfg.grid_delay);
    d.n = static_cast<std::uint64_t>(cfg.n_antennas);
    return d;
}

std::vector<std::string> flops_algorithms() {
    return {"sbl", "sbl-unfolding", "amp-sbl", "amp-sbl-unfolding", "sbl-af", "sbl-af-fid", "lista-reference"};
}

std::uint64_t flops_per_iteration(std::string_view algo, const SystemConfig& cfg) {
    const auto d = FlopsDims::from(cfg);
    const std::uint64_t km = d.k * d.m;
    if (algo == "sbl") return 16 * km * km * d.g;
    if (algo == "sbl-unfolding") return (16 * km * km + 432) * d.g;
    if (algo == "amp-sbl") return 20 * km * d.g;
    if (algo == "amp-sbl-unfolding") return (20 * km + 432) * d.g;
    if (algo == "sbl-af") return 16 * d.k * d.m * d.m * d.g_angular;
    if (algo == "sbl-af-fid") return 16 * d.m * d.m * d.g_angular + 8 * d.k * d.m * d.g_angular;
    if (algo == "lista-reference") return 4 * d.k * ((4 * d.m + 256) * d.n + 32768);
    throw ConfigError("unknown algorithm for FLOPs: " + std::string(algo));
}

std::uint64_t reconstruction_flops(EstimatorFamily family, const SystemConfig& cfg) {
    const auto d = FlopsDims::from(cfg);
    const std::uint64_t af = 8 * d.k * d.g_angular * d.n;
    return family == EstimatorFamily::angular_frequency ? af : af + 8 * d.k * d.g;
}

bool is_learned(std::string_view algo) { return algo == "sbl-unfolding" || algo == "amp-sbl-unfolding"; }

EstimatorSpec estimator_for(std::string_view algo, int iterations, const MStepNet* net) {
    EstimatorSpec spec;
    spec.iterations = iterations;
    if (algo == "sbl") {
        spec.e_step = EStepKind::exact;
    } else if (algo == "sbl-unfolding") {
        spec.e_step = EStepKind::exact;
        spec.m_step = MStepKind::learned;
    } else if (algo == "amp-sbl") {
        spec.e_step = EStepKind::amp;
    } else if (algo == "amp-sbl-unfolding") {
        spec.e_step = EStepKind::amp;
        spec.m_step = MStepKind::learned;
    } else {
        throw ConfigError("unknown estimator: " + std::string(algo));
    }
    if (spec.m_step == MStepKind::learned && !net) throw ConfigError(std::string(algo) + " needs a trained network");
    spec.net = net;
    return spec;
}

std::vector<AlgoScore> evaluate_algorithms(const Problem& problem, const std::vector<ChannelRealization>& channels,
                                           const std::vector<AlgoRequest>& algos, std::uint64_t noise_seed,
                                           int threads) {
    const std::size_t n = channels.size();
    const std::size_t a = algos.size();
    std::vector<EstimatorSpec> specs;
    for (const auto& req : algos) specs.push_back(estimator_for(req.algo, req.iterations, req.net));

    // ratio[i * a + j]; NaN marks a failure.
    std::vector<double> ratio(n * a, std::numeric_limits<double>::quiet_NaN());
    RngStreams streams(noise_seed);
    parallel_for(n, threads, [&](std::size_t i) {
        auto rng = streams.stream("eval-noise", i);
        Observation obs = simulate_observation(problem.cfg, problem.combiner, problem.op, channels[i], rng);
        for (std::size_t j = 0; j < a; ++j) {
            try {
                EstimateResult est = run_estimator(specs[j], problem.op, obs, problem.cfg.noise_var);
                ratio[i * a + j] = nmse(channels[i].H, reconstruct_channel(problem.dicts, est.x_hat));
            } catch (const NumericalError&) {
            }
        }
    });

    std::vector<AlgoScore> scores;
    for (std::size_t j = 0; j < a; ++j) {
        AlgoScore s;
        s.algo = algos[j].algo;
        s.iterations = algos[j].iterations;
        s.n_samples = static_cast<int>(n);
        double sum = 0.0;
        int ok = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double v = ratio[i * a + j];
            if (std::isnan(v)) {
                ++s.failures;
            } else {
                sum += v;
                ++ok;
            }
        }
        s.nmse_db = ok ? to_db(sum / ok) : std::numeric_limits<double>::quiet_NaN();
        s.flops_total = flops_per_iteration(s.algo, problem.cfg) * static_cast<std::uint64_t>(s.iterations) +
                        reconstruction_flops(EstimatorFamily::angular_delay, problem.cfg);
        scores.push_back(std::move(s));
    }
    return scores;
}

SweepResult run_sweep(std::string_view axis, const std::vector<double>& points, const std::vector<AlgoRequest>& algos,
                      const SystemConfig& base, int n_samples, const std::map<double, const MStepNet*>& nets,
                      int threads) {
    if (axis != "snr" && axis != "q") throw ConfigError("sweep axis must be 'snr' or 'q'");
    if (n_samples < 1) throw ConfigError("sweep needs at least one sample per point");
    SweepResult result;
    result.axis = std::string(axis);
    RngStreams streams(base.rng_seed);
    for (std::size_t p = 0; p < points.size(); ++p) {
        const double value = points[p];
        SystemConfig cfg = base;
        if (axis == "snr") {
            cfg.set_snr_db(value);
        } else {
            if (value < 1 || value != std::floor(value)) throw ConfigError("Q sweep points must be positive integers");
            cfg.n_uses = static_cast<int>(value);
        }
        std::vector<AlgoRequest> reqs = algos;
        for (auto& req : reqs) {
            if (!is_learned(req.algo)) continue;
            auto it = nets.find(value);
            if (it == nets.end() || !it->second)
                throw ConfigError("no trained network for " + req.algo + " at " + result.axis + " = " +
                                  std::to_string(value));
            req.net = it->second;
            req.iterations = it->second->depth();
        }
        Problem problem = make_problem(cfg);
        auto channels = generate_channels(cfg, n_samples, streams, "channel-sweep-" + std::to_string(p));
        auto scores = evaluate_algorithms(problem, channels, reqs, splitmix64(base.rng_seed + p), threads);
        for (auto& s : scores) result.rows.push_back(SweepRow{result.axis, value, std::move(s)});
    }
    return result;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path, std::uint64_t cfg_hash, std::uint64_t seed) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "# config_hash=" << std::hex << std::setw(16) << std::setfill('0') << cfg_hash << std::dec
        << std::setfill(' ') << " seed=" << seed << '\n';
    out << std::setprecision(8);
    return out;
}

}  // namespace

void write_sweep_csv(const SweepResult& result, const std::filesystem::path& path, std::uint64_t cfg_hash,
                     std::uint64_t seed) {
    auto out = open_csv(path, cfg_hash, seed);
    out << "axis,value,algo,nmse_db,n_samples,flops_total,fail_rate\n";
    for (const auto& row : result.rows)
        out << row.axis << ',' << row.value << ',' << row.score.algo << ',' << row.score.nmse_db << ','
            << row.score.n_samples << ',' << row.score.flops_total << ',' << row.score.fail_rate() << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

void write_tradeoff_csv(const std::vector<AlgoScore>& scores, const std::filesystem::path& path,
                        std::uint64_t cfg_hash, std::uint64_t seed) {
    auto out = open_csv(path, cfg_hash, seed);
    out << "algo,flops,nmse_db,iterations\n";
    for (const auto& s : scores)
        out << s.algo << ',' << s.flops_total << ',' << s.nmse_db << ',' << s.iterations << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace adsbl
