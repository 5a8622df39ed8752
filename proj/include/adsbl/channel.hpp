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

#ifndef ADSBL_CHANNEL_HPP
#define ADSBL_CHANNEL_HPP

#include "adsbl/config.hpp"

#include <vector>

namespace adsbl {

// ULA response [1, e^{-j pi z}, ..., e^{-j pi (n-1) z}]^T / n.
CVec steering_vector(int order, double spatial_arg);

// Clustered multipath parameters. Path p = i * n_subpaths + j belongs to
// cluster i.
struct PathSet {
    int n_clusters = 0;
    int n_subpaths = 0;
    std::vector<cdouble> gain;             // alpha
    std::vector<cdouble> equivalent_gain;  // alpha * exp(-j 2 pi f_1 tau)
    std::vector<double> delay;             // seconds, >= 0
    std::vector<double> angle;             // physical angle, radians
    std::vector<double> cluster_angle;
    std::vector<double> cluster_delay;

    std::size_t size() const { return gain.size(); }
};

struct ChannelRealization {
    PathSet paths;
    CMat H;  // n_antennas x n_subcarriers
};

PathSet draw_paths(const SystemConfig& cfg, std::mt19937_64& rng);

// Single path with unit spreads removed; handy for on-grid constructions.
PathSet single_path(const SystemConfig& cfg, cdouble gain, double delay, double angle);

// Per-subcarrier construction, summing each path's delayed and squinted
// steering vector at the absolute subcarrier frequency.
ChannelRealization build_channel(const SystemConfig& cfg, PathSet paths);

// Matrix construction from equivalent gains, the delay response and the
// squint matrix. Independent of build_channel; the two must agree.
CMat build_channel_matrix_form(const SystemConfig& cfg, const PathSet& paths);

// Theta(theta)_{n,k} = exp(-j pi n sin(theta) (k-1-(K-1)/2) eta / f_c).
CMat squint_matrix(const SystemConfig& cfg, double angle);

}  // namespace adsbl

#endif
