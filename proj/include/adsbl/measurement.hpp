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

#ifndef ADSBL_MEASUREMENT_HPP
#define ADSBL_MEASUREMENT_HPP

#include "adsbl/channel.hpp"
#include "adsbl/dictionaries.hpp"

#include <filesystem>
#include <vector>

namespace adsbl {

// One-bit combiners for Q channel uses and the block-diagonal whitener D with
// R = sigma^2 D D^H.
struct PilotCombiner {
    std::vector<CMat> per_use;  // W_q, N_RF x N
    CMat stacked;               // W, Q N_RF x N
    CMat whitener;              // D, lower triangular, block diagonal
    CMat whitened;              // D^{-1} W
};

// Entries drawn i.i.d. from {+1, -1}/sqrt(N). A W_q whose Gram matrix is
// numerically singular is redrawn; after `max_retries` redraws a
// NumericalError is thrown.
PilotCombiner draw_combiner(const SystemConfig& cfg, std::mt19937_64& rng, int max_retries = 100);

// Builds the whitener for given per-use combiners. Throws NumericalError if a
// Gram matrix is not positive definite.
PilotCombiner make_combiner(std::vector<CMat> per_use);

// Phi = (I_K kron W_bar) A_A (A_D kron I_{G_A}) and its unitary-transformed
// form A = U^H Phi where U holds the left singular vectors of Phi.
struct MeasurementOperator {
    int n_subcarriers = 0;
    int per_subcarrier = 0;  // Q N_RF
    CMat phi;
    CMat unitary;        // U
    RVec singular_values;
    CMat transformed;    // A
    RMat transformed_sq; // |A|^.2; |A^H|^.2 is its transpose

    int rows() const { return static_cast<int>(phi.rows()); }
    int cols() const { return static_cast<int>(phi.cols()); }
};

MeasurementOperator assemble_operator(const SystemConfig& cfg, const PilotCombiner& comb,
                                      const DictionarySet& dicts);

struct Transformed {
    CVec r;
    const CMat& a;
};

// r = U^H y, alongside the cached A.
Transformed unitary_transform(const MeasurementOperator& op, const CVec& y);

struct Observation {
    CVec y;  // whitened, vec over subcarriers of Q N_RF blocks
    CVec r;  // U^H y
};

// W_bar H stacked over subcarriers, without noise.
CVec noiseless_measurement(const PilotCombiner& comb, const CMat& h);

// Whitened received pilots with s = 1 and per-use antenna noise CN(0, sigma^2 I).
Observation simulate_observation(const SystemConfig& cfg, const PilotCombiner& comb,
                                 const MeasurementOperator& op, const ChannelRealization& chan,
                                 std::mt19937_64& rng);

// Same, starting from a precomputed noiseless measurement.
Observation simulate_observation(const SystemConfig& cfg, const PilotCombiner& comb,
                                 const MeasurementOperator& op, const CVec& noiseless,
                                 std::mt19937_64& rng);

// Whitened noise only: D^{-1} [W_1 n_1; ...; W_Q n_Q] for one subcarrier.
CVec whitened_noise(const SystemConfig& cfg, const PilotCombiner& comb, std::mt19937_64& rng);

// Binary export of the combiner and operator, tied to the config hash.
void save_operator(const SystemConfig& cfg, const PilotCombiner& comb, const MeasurementOperator& op,
                   const std::filesystem::path& path);
struct LoadedOperator {
    PilotCombiner combiner;
    MeasurementOperator op;
};
LoadedOperator load_operator(const SystemConfig& cfg, const std::filesystem::path& path);

}  // namespace adsbl

#endif
