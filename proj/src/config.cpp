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

#include "adsbl/config.hpp"

#include "binary_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <variant>

namespace adsbl {

namespace {

using IntField = int SystemConfig::*;
using RealField = double SystemConfig::*;

struct FieldEntry {
    const char* key;
    std::variant<IntField, RealField, std::uint64_t SystemConfig::*> field;
};

// Order defines the canonical serialisation and hash input.
const std::vector<FieldEntry>& field_table() {
    static const std::vector<FieldEntry> table = {
        {"n_antennas", &SystemConfig::n_antennas},
        {"n_rf", &SystemConfig::n_rf},
        {"n_uses", &SystemConfig::n_uses},
        {"n_subcarriers", &SystemConfig::n_subcarriers},
        {"center_freq", &SystemConfig::center_freq},
        {"bandwidth", &SystemConfig::bandwidth},
        {"grid_angular", &SystemConfig::grid_angular},
        {"grid_delay", &SystemConfig::grid_delay},
        {"noise_var", &SystemConfig::noise_var},
        {"n_clusters", &SystemConfig::n_clusters},
        {"n_subpaths", &SystemConfig::n_subpaths},
        {"angle_spread", &SystemConfig::angle_spread},
        {"delay_spread", &SystemConfig::delay_spread},
        {"max_mean_delay", &SystemConfig::max_mean_delay},
        {"n_iterations", &SystemConfig::n_iterations},
        {"rng_seed", &SystemConfig::rng_seed},
    };
    return table;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

double parse_real(std::string_view key, std::string_view value) {
    std::string buf(value);
    try {
        std::size_t used = 0;
        double v = std::stod(buf, &used);
        if (used != buf.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("invalid number for " + std::string(key) + ": '" + buf + "'");
    }
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view value) {
    Int v{};
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size())
        throw ConfigError("invalid integer for " + std::string(key) + ": '" + std::string(value) + "'");
    return v;
}

}  // namespace

double SystemConfig::snr_db() const { return -10.0 * std::log10(noise_var); }

void SystemConfig::set_snr_db(double snr) { noise_var = std::pow(10.0, -snr / 10.0); }

void SystemConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string("invalid config: ") + what);
    };
    require(n_antennas >= 1, "n_antennas >= 1");
    require(n_rf >= 1, "n_rf >= 1");
    require(n_uses >= 1, "n_uses >= 1");
    require(n_subcarriers >= 1, "n_subcarriers >= 1");
    require(grid_angular >= 1, "grid_angular >= 1");
    require(grid_delay >= 1, "grid_delay >= 1");
    require(n_clusters >= 1, "n_clusters >= 1");
    require(n_subpaths >= 1, "n_subpaths >= 1");
    require(n_iterations >= 0, "n_iterations >= 0");
    require(n_rf <= n_antennas, "n_rf <= n_antennas");
    require(std::isfinite(bandwidth) && bandwidth > 0.0, "bandwidth > 0");
    require(std::isfinite(center_freq) && center_freq > bandwidth / 2.0, "center_freq > bandwidth / 2");
    require(std::isfinite(noise_var) && noise_var > 0.0, "noise_var > 0");
    require(angle_spread >= 0.0, "angle_spread >= 0");
    require(delay_spread >= 0.0, "delay_spread >= 0");
    require(max_mean_delay >= 0.0, "max_mean_delay >= 0");
}

SystemConfig default_config() { return SystemConfig{}; }

double subcarrier_freq(const SystemConfig& cfg, int k) {
    if (k < 1 || k > cfg.n_subcarriers)
        throw ConfigError("subcarrier index " + std::to_string(k) + " outside 1.." + std::to_string(cfg.n_subcarriers));
    double offset = (k - 1) - (cfg.n_subcarriers - 1) / 2.0;
    return cfg.center_freq + offset * cfg.subcarrier_spacing();
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

namespace {

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

std::uint64_t config_hash(const SystemConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& entry : field_table()) {
        h = fnv1a(entry.key, std::char_traits<char>::length(entry.key), h);
        std::visit(
            [&](auto member) {
                auto value = cfg.*member;
                h = fnv1a(&value, sizeof(value), h);
            },
            entry.field);
    }
    return h;
}

std::mt19937_64 RngStreams::stream(std::string_view name, std::uint64_t index) const {
    std::uint64_t h = fnv1a(name.data(), name.size());
    std::uint64_t s = splitmix64(root_ ^ splitmix64(h));
    s = splitmix64(s ^ splitmix64(index + 0x632be59bd9b4e019ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(index)};
    return std::mt19937_64(seq);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
    // 53 random bits mapped to [0, 1).
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

cdouble complex_normal(std::mt19937_64& rng, double variance) {
    // Box-Muller on two open-interval uniforms.
    double u1 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
    double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    double radius = std::sqrt(-variance * std::log(u1));
    return {radius * std::cos(2.0 * kPi * u2), radius * std::sin(2.0 * kPi * u2)};
}

double laplacian(std::mt19937_64& rng, double std_dev) {
    if (std_dev == 0.0) {
        rng();
        return 0.0;
    }
    double b = std_dev / std::sqrt(2.0);
    double u = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53 - 0.5;
    return -b * (u < 0 ? -1.0 : 1.0) * std::log(1.0 - 2.0 * std::abs(u));
}

void apply_config_key(SystemConfig& cfg, std::string_view key, std::string_view value) {
    key = trim(key);
    value = trim(value);
    if (key == "snr_db") return cfg.set_snr_db(parse_real(key, value));
    if (key == "angle_spread_deg") {
        cfg.angle_spread = parse_real(key, value) * kPi / 180.0;
        return;
    }
    if (key == "delay_spread_ns") {
        cfg.delay_spread = parse_real(key, value) * 1e-9;
        return;
    }
    if (key == "max_mean_delay_ns") {
        cfg.max_mean_delay = parse_real(key, value) * 1e-9;
        return;
    }
    if (key == "center_freq_ghz") {
        cfg.center_freq = parse_real(key, value) * 1e9;
        return;
    }
    if (key == "bandwidth_ghz") {
        cfg.bandwidth = parse_real(key, value) * 1e9;
        return;
    }
    for (const auto& entry : field_table()) {
        if (key != entry.key) continue;
        std::visit(
            [&](auto member) {
                using T = std::remove_cvref_t<decltype(cfg.*member)>;
                if constexpr (std::is_same_v<T, double>)
                    cfg.*member = parse_real(key, value);
                else
                    cfg.*member = parse_int<T>(key, value);
            },
            entry.field);
        return;
    }
    throw ConfigError("unknown config key: " + std::string(key));
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& entry : field_table()) keys.emplace_back(entry.key);
    for (const char* alias : {"snr_db", "angle_spread_deg", "delay_spread_ns", "max_mean_delay_ns",
                              "center_freq_ghz", "bandwidth_ghz"})
        keys.emplace_back(alias);
    return keys;
}

SystemConfig parse_config_text(std::string_view text, SystemConfig base) {
    std::size_t line_no = 0;
    while (!text.empty()) {
        auto eol = text.find('\n');
        std::string_view line = text.substr(0, eol);
        text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        apply_config_key(base, line.substr(0, eq), line.substr(eq + 1));
    }
    base.validate();
    return base;
}

SystemConfig load_config_file(const std::filesystem::path& path, SystemConfig base) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), base);
}

std::string to_config_text(const SystemConfig& cfg) {
    std::ostringstream out;
    out << std::setprecision(17);
    for (const auto& entry : field_table()) {
        out << entry.key << " = ";
        std::visit([&](auto member) { out << cfg.*member; }, entry.field);
        out << '\n';
    }
    return out.str();
}

namespace detail {

void write_config(BinaryWriter& w, const SystemConfig& cfg) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(field_table().size()));
    for (const auto& entry : field_table()) {
        std::visit(
            [&](auto member) {
                using T = std::remove_cvref_t<decltype(cfg.*member)>;
                if constexpr (std::is_same_v<T, double>)
                    w.put<double>(cfg.*member);
                else
                    w.put<std::int64_t>(static_cast<std::int64_t>(cfg.*member));
            },
            entry.field);
    }
}

SystemConfig read_config(BinaryReader& r) {
    auto count = r.get<std::uint32_t>();
    if (count != field_table().size()) throw IoError("config block has unexpected field count in " + r.path().string());
    SystemConfig cfg;
    for (const auto& entry : field_table()) {
        std::visit(
            [&](auto member) {
                using T = std::remove_cvref_t<decltype(cfg.*member)>;
                if constexpr (std::is_same_v<T, double>)
                    cfg.*member = r.get<double>();
                else
                    cfg.*member = static_cast<T>(r.get<std::int64_t>());
            },
            entry.field);
    }
    return cfg;
}

}  // namespace detail

}  // namespace adsbl
