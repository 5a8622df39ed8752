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

#include "adsbl/dataset.hpp"

#include "binary_io.hpp"

#include <fstream>
#include <iomanip>

namespace adsbl {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'S', 'B', 'L', 'D', 'S', '\0'};
constexpr char kTrailer[4] = {'E', 'N', 'D', '\0'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::string to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "unknown";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw ConfigError("unknown split: " + std::string(name));
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    const auto& cfg = ds.config;
    const std::uint32_t paths_per_sample = static_cast<std::uint32_t>(cfg.n_clusters * cfg.n_subpaths);
    for (const auto& s : ds.samples) {
        if (s.H.rows() != cfg.n_antennas || s.H.cols() != cfg.n_subcarriers)
            throw ConfigError("dataset sample has H of wrong shape");
        if (s.paths.size() != paths_per_sample || s.paths.cluster_angle.size() != static_cast<std::size_t>(cfg.n_clusters))
            throw ConfigError("dataset sample has path set of wrong size");
    }

    detail::BinaryWriter w(path);
    w.put_bytes(kMagic, sizeof kMagic);
    w.put(kVersion);
    w.put(static_cast<std::uint32_t>(ds.split));
    detail::write_config(w, cfg);
    w.put(config_hash(cfg));
    w.put(static_cast<std::uint64_t>(ds.samples.size()));
    w.put(static_cast<std::uint32_t>(cfg.n_antennas));
    w.put(static_cast<std::uint32_t>(cfg.n_subcarriers));
    w.put(paths_per_sample);
    for (const auto& s : ds.samples) {
        for (int i = 0; i < cfg.n_clusters; ++i) {
            w.put(s.paths.cluster_angle[i]);
            w.put(s.paths.cluster_delay[i]);
        }
        for (std::size_t p = 0; p < s.paths.size(); ++p) {
            w.put_complex(s.paths.gain[p]);
            w.put_complex(s.paths.equivalent_gain[p]);
            w.put(s.paths.delay[p]);
            w.put(s.paths.angle[p]);
        }
        for (int n = 0; n < cfg.n_antennas; ++n)
            for (int k = 0; k < cfg.n_subcarriers; ++k) w.put_complex(s.H(n, k));
    }
    w.put_bytes(kTrailer, sizeof kTrailer);
    w.finish();
}

Dataset load_dataset(const std::filesystem::path& path, const std::optional<SystemConfig>& expected) {
    detail::BinaryReader r(path);
    r.expect_bytes(kMagic, sizeof kMagic, "magic");
    if (auto version = r.get<std::uint32_t>(); version != kVersion)
        throw IoError("unsupported dataset version " + std::to_string(version));
    auto split_raw = r.get<std::uint32_t>();
    if (split_raw > 2) throw IoError("bad split tag in " + path.string());

    Dataset ds;
    ds.split = static_cast<Split>(split_raw);
    ds.config = detail::read_config(r);
    if (r.get<std::uint64_t>() != config_hash(ds.config)) throw IoError("config hash mismatch in " + path.string());
    if (expected && config_hash(*expected) != config_hash(ds.config))
        throw IoError("dataset " + path.string() + " was generated under a different config");
    try {
        ds.config.validate();
    } catch (const ConfigError& e) {
        throw IoError(std::string("dataset config invalid: ") + e.what());
    }

    auto count = r.get<std::uint64_t>();
    auto n = r.get<std::uint32_t>();
    auto k_count = r.get<std::uint32_t>();
    auto paths_per_sample = r.get<std::uint32_t>();
    const auto& cfg = ds.config;
    if (n != static_cast<std::uint32_t>(cfg.n_antennas) || k_count != static_cast<std::uint32_t>(cfg.n_subcarriers) ||
        paths_per_sample != static_cast<std::uint32_t>(cfg.n_clusters * cfg.n_subpaths))
        throw IoError("dataset header inconsistent with its config: " + path.string());

    ds.samples.resize(count);
    for (auto& s : ds.samples) {
        auto& ps = s.paths;
        ps.n_clusters = cfg.n_clusters;
        ps.n_subpaths = cfg.n_subpaths;
        for (int i = 0; i < cfg.n_clusters; ++i) {
            ps.cluster_angle.push_back(r.get<double>());
            ps.cluster_delay.push_back(r.get<double>());
        }
        for (std::uint32_t p = 0; p < paths_per_sample; ++p) {
            ps.gain.push_back(r.get_complex());
            ps.equivalent_gain.push_back(r.get_complex());
            ps.delay.push_back(r.get<double>());
            ps.angle.push_back(r.get<double>());
        }
        s.H.resize(n, k_count);
        for (std::uint32_t row = 0; row < n; ++row)
            for (std::uint32_t col = 0; col < k_count; ++col) s.H(row, col) = r.get_complex();
    }
    r.expect_bytes(kTrailer, sizeof kTrailer, "trailer");
    if (!r.at_end()) throw IoError("trailing bytes after dataset payload: " + path.string());
    return ds;
}

void export_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "# split=" << to_string(ds.split) << " config_hash=" << std::hex << config_hash(ds.config) << std::dec
        << " seed=" << ds.config.rng_seed << '\n';
    out << "sample,n,k,re,im\n" << std::setprecision(17);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& h = ds.samples[i].H;
        for (int n = 0; n < h.rows(); ++n)
            for (int k = 0; k < h.cols(); ++k)
                out << i << ',' << n << ',' << k << ',' << h(n, k).real() << ',' << h(n, k).imag() << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace adsbl
