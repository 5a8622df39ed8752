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

#ifndef ADSBL_COMMON_HPP
#define ADSBL_COMMON_HPP

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

namespace adsbl {

using cdouble = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

inline constexpr double kPi = 3.14159265358979323846;

// Bad parameters or inconsistent dimensions.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Reading or writing a file failed, or the file contents are malformed.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Any other numerical breakdown (singular system, failed factorisation).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An iterative estimator produced non-finite or runaway values.
class DivergenceError : public NumericalError {
public:
    DivergenceError(int iteration, const std::string& what)
        : NumericalError("diverged at iteration " + std::to_string(iteration) + ": " + what),
          iteration_(iteration) {}
    int iteration() const noexcept { return iteration_; }

private:
    int iteration_;
};

// Runs body(i) for i in [0, count) on up to `threads` workers. Each index is
// handled exactly once; callers store per-index results and reduce them in
// index order, so results never depend on the thread count.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body);

// Worker count used when a caller passes threads <= 0.
int default_threads();

}  // namespace adsbl

#endif
