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

#include <cmath>

namespace adsbl {

CVec steering_vector(int order, double spatial_arg) {
    if (order < 1) throw ConfigError("steering vector order must be >= 1");
    CVec v(order);
    for (int m = 0; m < order; ++m) v[m] = std::polar(1.0 / order, -kPi * m * spatial_arg);
    return v;
}

PathSet draw_paths(const SystemConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    PathSet ps;
    ps.n_clusters = cfg.n_clusters;
    ps.n_subpaths = cfg.n_subpaths;
    const std::size_t total = static_cast<std::size_t>(cfg.n_clusters) * cfg.n_subpaths;
    ps.gain.reserve(total);
    ps.equivalent_gain.reserve(total);
    ps.delay.reserve(total);
    ps.angle.reserve(total);
    const double f1 = subcarrier_freq(cfg, 1);
    for (int i = 0; i < cfg.n_clusters; ++i) {
        double mean_angle = uniform(rng, 0.0, 2.0 * kPi);
        double mean_delay = uniform(rng, 0.0, cfg.max_mean_delay);
        ps.cluster_angle.push_back(mean_angle);
        ps.cluster_delay.push_back(mean_delay);
        for (int j = 0; j < cfg.n_subpaths; ++j) {
            double angle = mean_angle + laplacian(rng, cfg.angle_spread);
            double delay = std::max(0.0, mean_delay + laplacian(rng, cfg.delay_spread));
            cdouble gain = complex_normal(rng, 1.0);
            ps.angle.push_back(angle);
            ps.delay.push_back(delay);
            ps.gain.push_back(gain);
            ps.equivalent_gain.push_back(gain * std::polar(1.0, -2.0 * kPi * f1 * delay));
        }
    }
    return ps;
}

PathSet single_path(const SystemConfig& cfg, cdouble gain, double delay, double angle) {
    PathSet ps;
    ps.n_clusters = 1;
    ps.n_subpaths = 1;
    ps.gain = {gain};
    ps.equivalent_gain = {gain * std::polar(1.0, -2.0 * kPi * subcarrier_freq(cfg, 1) * delay)};
    ps.delay = {delay};
    ps.angle = {angle};
    ps.cluster_angle = {angle};
    ps.cluster_delay = {delay};
    return ps;
}

ChannelRealization build_channel(const SystemConfig& cfg, PathSet paths) {
    const int n = cfg.n_antennas;
    const int k_count = cfg.n_subcarriers;
    const double scale = std::sqrt(static_cast<double>(n) / (paths.n_clusters * paths.n_subpaths));
    CMat h = CMat::Zero(n, k_count);
    for (int k = 1; k <= k_count; ++k) {
        const double fk = subcarrier_freq(cfg, k);
        const double squint = fk / cfg.center_freq;
        for (std::size_t p = 0; p < paths.size(); ++p) {
            cdouble coeff = scale * paths.gain[p] * std::polar(1.0, -2.0 * kPi * fk * paths.delay[p]);
            h.col(k - 1) += coeff * steering_vector(n, squint * std::sin(paths.angle[p]));
        }
    }
    return ChannelRealization{std::move(paths), std::move(h)};
}

CMat squint_matrix(const SystemConfig& cfg, double angle) {
    const int n = cfg.n_antennas;
    const int k_count = cfg.n_subcarriers;
    const double s = std::sin(angle);
    const double ratio = cfg.subcarrier_spacing() / cfg.center_freq;
    CMat theta(n, k_count);
    for (int k = 0; k < k_count; ++k) {
        double offset = k - (k_count - 1) / 2.0;
        for (int m = 0; m < n; ++m) theta(m, k) = std::polar(1.0, -kPi * m * s * offset * ratio);
    }
    return theta;
}

CMat build_channel_matrix_form(const SystemConfig& cfg, const PathSet& paths) {
    const int n = cfg.n_antennas;
    const int k_count = cfg.n_subcarriers;
    const double eta = cfg.subcarrier_spacing();
    // a_K carries a 1/K normalisation that the per-subcarrier form does not,
    // hence the extra factor K.
    const double scale = k_count * std::sqrt(static_cast<double>(n) / (paths.n_clusters * paths.n_subpaths));
    CMat h = CMat::Zero(n, k_count);
    for (std::size_t p = 0; p < paths.size(); ++p) {
        CVec spatial = steering_vector(n, std::sin(paths.angle[p]));
        CVec spectral = steering_vector(k_count, 2.0 * eta * paths.delay[p]);
        CMat outer = spatial * spectral.transpose();
        h += (scale * paths.equivalent_gain[p]) * outer.cwiseProduct(squint_matrix(cfg, paths.angle[p]));
    }
    return h;
}

}  // namespace adsbl
