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

#include "adsbl/dictionaries.hpp"

#include "adsbl/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace adsbl {

RVec uniform_grid(int points) {
    RVec grid(points);
    for (int i = 1; i <= points; ++i) grid[i - 1] = -1.0 + (2.0 * i - 1.0) / points;
    return grid;
}

CMat DictionarySet::block_diagonal() const {
    CMat block = CMat::Zero(static_cast<Eigen::Index>(n_antennas) * n_subcarriers,
                            static_cast<Eigen::Index>(grid_angular) * n_subcarriers);
    for (int k = 0; k < n_subcarriers; ++k)
        block.block(k * n_antennas, k * grid_angular, n_antennas, grid_angular) = angular[k];
    return block;
}

DictionarySet build_dictionaries(const SystemConfig& cfg, AngularMode mode) {
    cfg.validate();
    DictionarySet d;
    d.mode = mode;
    d.n_antennas = cfg.n_antennas;
    d.n_subcarriers = cfg.n_subcarriers;
    d.grid_angular = cfg.grid_angular;
    d.grid_delay = cfg.grid_delay;

    d.delay_grid = uniform_grid(cfg.grid_delay);
    d.delay.resize(cfg.n_subcarriers, cfg.grid_delay);
    for (int i = 0; i < cfg.grid_delay; ++i) d.delay.col(i) = steering_vector(cfg.n_subcarriers, d.delay_grid[i]);

    const RVec base = uniform_grid(cfg.grid_angular);
    for (int k = 1; k <= cfg.n_subcarriers; ++k) {
        double factor = mode == AngularMode::frequency_dependent ? subcarrier_freq(cfg, k) / cfg.center_freq : 1.0;
        RVec grid = factor * base;
        CMat dict(cfg.n_antennas, cfg.grid_angular);
        for (int i = 0; i < cfg.grid_angular; ++i) dict.col(i) = steering_vector(cfg.n_antennas, grid[i]);
        d.angular_grids.push_back(std::move(grid));
        d.angular.push_back(std::move(dict));
    }
    return d;
}

CMat reconstruct_channel(const DictionarySet& dicts, const CVec& x) {
    if (x.size() != dicts.grid_size())
        throw ConfigError("angular-delay vector has length " + std::to_string(x.size()) + ", expected " +
                          std::to_string(dicts.grid_size()));
    Eigen::Map<const CMat> X(x.data(), dicts.grid_angular, dicts.grid_delay);
    CMat q = X * dicts.delay.transpose();  // G_A x K
    CMat h(dicts.n_antennas, dicts.n_subcarriers);
    for (int k = 0; k < dicts.n_subcarriers; ++k) h.col(k).noalias() = dicts.angular[k] * q.col(k);
    return h;
}

CVec reconstruct_adjoint(const DictionarySet& dicts, const CMat& h) {
    if (h.rows() != dicts.n_antennas || h.cols() != dicts.n_subcarriers)
        throw ConfigError("channel matrix shape does not match dictionaries");
    CMat q(dicts.grid_angular, dicts.n_subcarriers);
    for (int k = 0; k < dicts.n_subcarriers; ++k) q.col(k).noalias() = dicts.angular[k].adjoint() * h.col(k);
    CVec x(dicts.grid_size());
    Eigen::Map<CMat> X(x.data(), dicts.grid_angular, dicts.grid_delay);
    X.noalias() = q * dicts.delay.conjugate();
    return x;
}

DictionaryProjector::DictionaryProjector(const DictionarySet& dicts, double ridge_scale) : dicts_(dicts) {
    const int n = dicts.n_antennas;
    const int k_count = dicts.n_subcarriers;
    // Gram of the reconstruction map, block (k, k') = A_A^k A_A^{k'H} (A_D A_D^H)_{k,k'}.
    const CMat delay_gram = dicts.delay * dicts.delay.adjoint();
    CMat gram(static_cast<Eigen::Index>(n) * k_count, static_cast<Eigen::Index>(n) * k_count);
    for (int k = 0; k < k_count; ++k) {
        for (int kp = 0; kp <= k; ++kp) {
            CMat block = delay_gram(k, kp) * (dicts.angular[k] * dicts.angular[kp].adjoint());
            gram.block(k * n, kp * n, n, n) = block;
            if (kp != k) gram.block(kp * n, k * n, n, n) = block.adjoint();
        }
    }
    const double ridge = ridge_scale * gram.diagonal().real().sum() / gram.rows();
    gram.diagonal().array() += ridge;
    gram_.compute(gram);
    if (gram_.info() != Eigen::Success) throw NumericalError("dictionary Gram factorisation failed");
}

CVec DictionaryProjector::project(const CMat& h) const {
    if (h.rows() != dicts_.n_antennas || h.cols() != dicts_.n_subcarriers)
        throw ConfigError("channel matrix shape does not match dictionaries");
    Eigen::Map<const CVec> hv(h.data(), h.size());
    CVec z = gram_.solve(hv);
    Eigen::Map<const CMat> zm(z.data(), h.rows(), h.cols());
    return reconstruct_adjoint(dicts_, zm);
}

double concentration_score(const CVec& x, double top_fraction) {
    std::vector<double> energy(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) energy[i] = std::norm(x[i]);
    const double total = std::accumulate(energy.begin(), energy.end(), 0.0);
    if (total <= 0.0) return 0.0;
    auto top = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(top_fraction * energy.size())), 1, energy.size());
    std::partial_sort(energy.begin(), energy.begin() + top, energy.end(), std::greater<>());
    return std::accumulate(energy.begin(), energy.begin() + top, 0.0) / total;
}

double sparsity_score(const DictionaryProjector& projector, const CMat& h) {
    return concentration_score(projector.project(h));
}

double sparsity_score(const DictionarySet& dicts, const CMat& h) {
    return sparsity_score(DictionaryProjector(dicts), h);
}

}  // namespace adsbl
