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

#ifndef ADSBL_TESTS_HELPERS_HPP
#define ADSBL_TESTS_HELPERS_HPP

#include "adsbl/config.hpp"

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

namespace adsbl::testing {

// Small system that keeps operator assembly and training fast.
inline SystemConfig small_config() {
    SystemConfig cfg;
    cfg.n_antennas = 16;
    cfg.n_rf = 2;
    cfg.n_uses = 2;
    cfg.n_subcarriers = 8;
    cfg.grid_angular = 16;
    cfg.grid_delay = 16;
    return cfg;
}

inline SystemConfig tiny_config() {
    SystemConfig cfg;
    cfg.n_antennas = 8;
    cfg.n_rf = 2;
    cfg.n_uses = 2;
    cfg.n_subcarriers = 4;
    cfg.grid_angular = 8;
    cfg.grid_delay = 8;
    cfg.n_clusters = 2;
    cfg.n_subpaths = 4;
    return cfg;
}

inline CMat random_cmat(int rows, int cols, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    CMat m(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) m(i, j) = cdouble(n(rng), n(rng));
    return m;
}

inline CVec random_cvec(int size, std::mt19937_64& rng) { return random_cmat(size, 1, rng).col(0); }

inline RVec random_positive(int size, std::mt19937_64& rng, double lo = 0.1, double hi = 2.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    RVec v(size);
    for (int i = 0; i < size; ++i) v(i) = u(rng);
    return v;
}

template <typename A, typename B>
double rel_err(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
    return (a.eval() - b.eval()).norm() / std::max(b.eval().norm(), 1e-300);
}

class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("adsbl-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace adsbl::testing

#endif
