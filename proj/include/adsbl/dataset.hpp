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

#ifndef ADSBL_DATASET_HPP
#define ADSBL_DATASET_HPP

#include "adsbl/channel.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace adsbl {

enum class Split : std::uint32_t { train = 0, val = 1, test = 2 };

std::string to_string(Split split);
Split parse_split(std::string_view name);

struct Dataset {
    Split split = Split::train;
    SystemConfig config;
    std::vector<ChannelRealization> samples;
};

// Binary layout (little endian):
//   "ADSBLDS\0" | u32 version | u32 split | config block | u64 config hash
//   | u64 count | u32 n_antennas | u32 n_subcarriers | u32 paths per sample
//   | per sample: cluster means, per-path (gain re/im, delay, angle),
//     H row-major as (re, im) f64 pairs
//   | "END\0"
void save_dataset(const Dataset& ds, const std::filesystem::path& path);

// Throws IoError on malformed or truncated files. When `expected` is given,
// a config mismatch is an IoError as well.
Dataset load_dataset(const std::filesystem::path& path,
                     const std::optional<SystemConfig>& expected = std::nullopt);

// One row per (sample, antenna, subcarrier): sample,n,k,re,im.
void export_dataset_csv(const Dataset& ds, const std::filesystem::path& path);

}  // namespace adsbl

#endif
