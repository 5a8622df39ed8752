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

#include "adsbl/measurement.hpp"

#include "binary_io.hpp"

#include <cmath>
#include <optional>

namespace adsbl {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'S', 'B', 'L', 'O', 'P', '\0'};
constexpr char kTrailer[4] = {'E', 'N', 'D', '\0'};
constexpr std::uint32_t kVersion = 1;

// Cholesky factor of W_q W_q^H, or nothing if it is not safely positive
// definite.
std::optional<CMat> gram_factor(const CMat& wq) {
    CMat gram = wq * wq.adjoint();
    Eigen::LLT<CMat> llt(gram);
    if (llt.info() != Eigen::Success) return std::nullopt;
    CMat l = llt.matrixL();
    const double scale = gram.diagonal().real().maxCoeff();
    for (Eigen::Index i = 0; i < l.rows(); ++i)
        if (!(l(i, i).real() > 1e-6 * std::sqrt(scale))) return std::nullopt;
    return l;
}

void write_matrix(detail::BinaryWriter& w, const CMat& m) {
    w.put(static_cast<std::uint64_t>(m.rows()));
    w.put(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) w.put_complex(m(i, j));
}

CMat read_matrix(detail::BinaryReader& r, Eigen::Index rows, Eigen::Index cols) {
    auto rr = r.get<std::uint64_t>();
    auto cc = r.get<std::uint64_t>();
    if (rr != static_cast<std::uint64_t>(rows) || cc != static_cast<std::uint64_t>(cols))
        throw IoError("operator matrix has unexpected shape in " + r.path().string());
    CMat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = r.get_complex();
    return m;
}

}  // namespace

PilotCombiner make_combiner(std::vector<CMat> per_use) {
    if (per_use.empty()) throw ConfigError("combiner needs at least one channel use");
    const Eigen::Index rf = per_use.front().rows();
    const Eigen::Index n = per_use.front().cols();
    const Eigen::Index q_count = static_cast<Eigen::Index>(per_use.size());
    PilotCombiner comb;
    comb.stacked.resize(rf * q_count, n);
    comb.whitener = CMat::Zero(rf * q_count, rf * q_count);
    comb.whitened.resize(rf * q_count, n);
    for (Eigen::Index q = 0; q < q_count; ++q) {
        const CMat& wq = per_use[q];
        if (wq.rows() != rf || wq.cols() != n) throw ConfigError("combiner blocks differ in shape");
        auto l = gram_factor(wq);
        if (!l) throw NumericalError("combiner Gram matrix of use " + std::to_string(q + 1) + " is singular");
        comb.stacked.middleRows(q * rf, rf) = wq;
        comb.whitener.block(q * rf, q * rf, rf, rf) = *l;
        comb.whitened.middleRows(q * rf, rf) = l->triangularView<Eigen::Lower>().solve(wq);
    }
    comb.per_use = std::move(per_use);
    return comb;
}

PilotCombiner draw_combiner(const SystemConfig& cfg, std::mt19937_64& rng, int max_retries) {
    cfg.validate();
    const double amp = 1.0 / std::sqrt(static_cast<double>(cfg.n_antennas));
    std::vector<CMat> per_use;
    for (int q = 0; q < cfg.n_uses; ++q) {
        for (int attempt = 0;; ++attempt) {
            CMat wq(cfg.n_rf, cfg.n_antennas);
            for (int i = 0; i < cfg.n_rf; ++i)
                for (int n = 0; n < cfg.n_antennas; ++n) wq(i, n) = (rng() >> 63) ? amp : -amp;
            if (gram_factor(wq)) {
                per_use.push_back(std::move(wq));
                break;
            }
            if (attempt >= max_retries)
                throw NumericalError("could not draw a full-rank combiner after " + std::to_string(max_retries) +
                                     " retries");
        }
    }
    return make_combiner(std::move(per_use));
}

MeasurementOperator assemble_operator(const SystemConfig& cfg, const PilotCombiner& comb, const DictionarySet& dicts) {
    if (dicts.n_antennas != cfg.n_antennas || dicts.n_subcarriers != cfg.n_subcarriers ||
        dicts.grid_angular != cfg.grid_angular || dicts.grid_delay != cfg.grid_delay)
        throw ConfigError("dictionaries were built under a different config");
    if (comb.whitened.rows() != cfg.measurements_per_subcarrier() || comb.whitened.cols() != cfg.n_antennas)
        throw ConfigError("combiner shape does not match config");

    const int mq = cfg.measurements_per_subcarrier();
    const int ga = dicts.grid_angular;
    MeasurementOperator op;
    op.n_subcarriers = cfg.n_subcarriers;
    op.per_subcarrier = mq;
    op.phi.resize(cfg.n_measurements(), dicts.grid_size());
    for (int k = 0; k < cfg.n_subcarriers; ++k) {
        CMat combined = comb.whitened * dicts.angular[k];
        for (int d = 0; d < dicts.grid_delay; ++d)
            op.phi.block(k * mq, d * ga, mq, ga) = dicts.delay(k, d) * combined;
    }

    // Left singular vectors from the eigen-decomposition of Phi Phi^H,
    // ordered by decreasing singular value.
    Eigen::SelfAdjointEigenSolver<CMat> eig(op.phi * op.phi.adjoint());
    if (eig.info() != Eigen::Success) throw NumericalError("eigen-decomposition of Phi Phi^H failed");
    const Eigen::Index m = op.phi.rows();
    op.unitary.resize(m, m);
    op.singular_values.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        op.unitary.col(i) = eig.eigenvectors().col(m - 1 - i);
        op.singular_values[i] = std::sqrt(std::max(0.0, eig.eigenvalues()[m - 1 - i]));
    }
    op.transformed.noalias() = op.unitary.adjoint() * op.phi;
    op.transformed_sq = op.transformed.cwiseAbs2();
    return op;
}

Transformed unitary_transform(const MeasurementOperator& op, const CVec& y) {
    if (y.size() != op.rows()) throw ConfigError("observation length does not match operator");
    return Transformed{op.unitary.adjoint() * y, op.transformed};
}

CVec noiseless_measurement(const PilotCombiner& comb, const CMat& h) {
    CMat combined = comb.whitened * h;
    return Eigen::Map<const CVec>(combined.data(), combined.size());
}

CVec whitened_noise(const SystemConfig& cfg, const PilotCombiner& comb, std::mt19937_64& rng) {
    const int rf = cfg.n_rf;
    CVec out(cfg.measurements_per_subcarrier());
    CVec antenna_noise(cfg.n_antennas);
    for (int q = 0; q < cfg.n_uses; ++q) {
        for (int n = 0; n < cfg.n_antennas; ++n) antenna_noise[n] = complex_normal(rng, cfg.noise_var);
        CVec combined = comb.per_use[q] * antenna_noise;
        out.segment(q * rf, rf) =
            comb.whitener.block(q * rf, q * rf, rf, rf).triangularView<Eigen::Lower>().solve(combined);
    }
    return out;
}

Observation simulate_observation(const SystemConfig& cfg, const PilotCombiner& comb, const MeasurementOperator& op,
                                 const CVec& noiseless, std::mt19937_64& rng) {
    const int mq = cfg.measurements_per_subcarrier();
    if (noiseless.size() != static_cast<Eigen::Index>(mq) * cfg.n_subcarriers)
        throw ConfigError("noiseless measurement has wrong length");
    Observation obs;
    obs.y = noiseless;
    for (int k = 0; k < cfg.n_subcarriers; ++k) obs.y.segment(k * mq, mq) += whitened_noise(cfg, comb, rng);
    obs.r = unitary_transform(op, obs.y).r;
    return obs;
}

Observation simulate_observation(const SystemConfig& cfg, const PilotCombiner& comb, const MeasurementOperator& op,
                                 const ChannelRealization& chan, std::mt19937_64& rng) {
    if (chan.H.rows() != cfg.n_antennas || chan.H.cols() != cfg.n_subcarriers)
        throw ConfigError("channel shape does not match config");
    return simulate_observation(cfg, comb, op, noiseless_measurement(comb, chan.H), rng);
}

void save_operator(const SystemConfig& cfg, const PilotCombiner& comb, const MeasurementOperator& op,
                   const std::filesystem::path& path) {
    detail::BinaryWriter w(path);
    w.put_bytes(kMagic, sizeof kMagic);
    w.put(kVersion);
    w.put(config_hash(cfg));
    w.put(static_cast<std::uint32_t>(comb.per_use.size()));
    for (const auto& wq : comb.per_use) write_matrix(w, wq);
    write_matrix(w, op.phi);
    write_matrix(w, op.unitary);
    for (Eigen::Index i = 0; i < op.singular_values.size(); ++i) w.put(op.singular_values[i]);
    write_matrix(w, op.transformed);
    w.put_bytes(kTrailer, sizeof kTrailer);
    w.finish();
}

LoadedOperator load_operator(const SystemConfig& cfg, const std::filesystem::path& path) {
    detail::BinaryReader r(path);
    r.expect_bytes(kMagic, sizeof kMagic, "magic");
    if (r.get<std::uint32_t>() != kVersion) throw IoError("unsupported operator version in " + path.string());
    if (r.get<std::uint64_t>() != config_hash(cfg))
        throw IoError("operator file " + path.string() + " was built under a different config");
    auto uses = r.get<std::uint32_t>();
    if (uses != static_cast<std::uint32_t>(cfg.n_uses)) throw IoError("operator file has wrong number of uses");
    std::vector<CMat> per_use;
    for (std::uint32_t q = 0; q < uses; ++q) per_use.push_back(read_matrix(r, cfg.n_rf, cfg.n_antennas));
    LoadedOperator out{make_combiner(std::move(per_use)), {}};
    const Eigen::Index m = cfg.n_measurements();
    out.op.n_subcarriers = cfg.n_subcarriers;
    out.op.per_subcarrier = cfg.measurements_per_subcarrier();
    out.op.phi = read_matrix(r, m, cfg.grid_size());
    out.op.unitary = read_matrix(r, m, m);
    out.op.singular_values.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) out.op.singular_values[i] = r.get<double>();
    out.op.transformed = read_matrix(r, m, cfg.grid_size());
    out.op.transformed_sq = out.op.transformed.cwiseAbs2();
    r.expect_bytes(kTrailer, sizeof kTrailer, "trailer");
    return out;
}

}  // namespace adsbl
