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

#ifndef ADSBL_DICTIONARIES_HPP
#define ADSBL_DICTIONARIES_HPP

#include "adsbl/config.hpp"

#include <memory>
#include <vector>

namespace adsbl {

enum class AngularMode { frequency_dependent, frequency_independent };

// -1 + (2i-1)/G for i = 1..G.
RVec uniform_grid(int points);

// Delay dictionary A_D (K x G_D) and one angular dictionary A_A^k (N x G_A)
// per subcarrier. The angular-delay vector x = vec(X) stacks the G_A x G_D
// matrix X column by column, so entry m sits at angle m % G_A, delay m / G_A.
struct DictionarySet {
    AngularMode mode = AngularMode::frequency_dependent;
    int n_antennas = 0;
    int n_subcarriers = 0;
    int grid_angular = 0;
    int grid_delay = 0;
    RVec delay_grid;
    CMat delay;
    std::vector<RVec> angular_grids;
    std::vector<CMat> angular;

    int grid_size() const { return grid_angular * grid_delay; }
    CMat block_diagonal() const;
};

DictionarySet build_dictionaries(const SystemConfig& cfg, AngularMode mode);

// H_hat with column k = A_A^k (X A_D^T)_{.k}.
CMat reconstruct_channel(const DictionarySet& dicts, const CVec& x);

// Adjoint of reconstruct_channel: maps an N x K matrix back to length G.
CVec reconstruct_adjoint(const DictionarySet& dicts, const CMat& h);

// Ridge least-squares projection of a channel onto the dictionary pair. The
// normal matrix is factored once per dictionary set.
class DictionaryProjector {
public:
    explicit DictionaryProjector(const DictionarySet& dicts, double ridge_scale = 1e-6);
    CVec project(const CMat& h) const;
    const DictionarySet& dictionaries() const { return dicts_; }

private:
    DictionarySet dicts_;
    Eigen::LLT<CMat> gram_;
};

// Fraction of the projected energy held by the top 1% of entries (at least
// one entry).
double concentration_score(const CVec& x, double top_fraction = 0.01);
double sparsity_score(const DictionaryProjector& projector, const CMat& h);
double sparsity_score(const DictionarySet& dicts, const CMat& h);

}  // namespace adsbl

#endif
