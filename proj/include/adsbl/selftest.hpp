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

#ifndef ADSBL_SELFTEST_HPP
#define ADSBL_SELFTEST_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace adsbl {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

// Quick property checks of the whole pipeline on small problems, each with
// its own independent reference computation. A check that throws is
// reported as failed with the exception text.
std::vector<CheckResult> run_selftest(std::uint64_t seed = 7, int threads = 0);

}  // namespace adsbl

#endif
