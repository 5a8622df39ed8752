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

#include "adsbl/selftest.hpp"

#include "adsbl/channel.hpp"
#include "adsbl/dictionaries.hpp"
#include "adsbl/evaluation.hpp"
#include "adsbl/measurement.hpp"
#include "adsbl/mstep_net.hpp"
#include "adsbl/sbl.hpp"
#include "adsbl/training.hpp"

#include <cmath>
#include <functional>
#include <sstream>

namespace adsbl {
namespace {

SystemConfig small_system() {
    SystemConfig cfg;
    cfg.n_antennas = 16;
    cfg.n_rf = 2;
    cfg.n_uses = 2;
    cfg.n_subcarriers = 8;
    cfg.grid_angular = 16;
    cfg.grid_delay = 16;
    return cfg;
}

CMat gaussian(int rows, int cols, std::mt19937_64& rng) {
    CMat m(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) m(i, j) = complex_normal(rng, 2.0);
    return m;
}

RVec positive(int size, std::mt19937_64& rng) {
    RVec v(size);
    for (int i = 0; i < size; ++i) v(i) = uniform(rng, 0.1, 2.0);
    return v;
}

double rel(const auto& a, const auto& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

std::string fmt(const char* label, double value) {
    std::ostringstream os;
    os << label << ' ' << value;
    return os.str();
}

CheckResult config_round_trip(std::uint64_t) {
    SystemConfig cfg = small_system();
    cfg.set_snr_db(17.5);
    cfg.angle_spread = 0.05;
    SystemConfig back = parse_config_text(to_config_text(cfg));
    bool ok = back == cfg && config_hash(back) == config_hash(cfg) && config_hash(cfg) != config_hash(default_config());
    return {"config-round-trip", ok, ok ? "text form reproduces every field" : "text form lost a field"};
}

// Information form: Sigma = (Phi^H Phi / s2 + diag(1/gamma))^{-1}.
CheckResult exact_posterior(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        int m = 4 + trial % 9, g = 2 * m + trial % 5;
        CMat phi = gaussian(m, g, rng);
        CVec y = gaussian(m, 1, rng).col(0);
        RVec gamma = positive(g, rng);
        double s2 = uniform(rng, 0.05, 1.0);
        CMat info = phi.adjoint() * phi / s2;
        info.diagonal() += gamma.cwiseInverse().cast<cdouble>();
        CMat sigma = info.inverse();
        CVec mean = sigma * phi.adjoint() * y / s2;
        Posterior post = exact_e_step(phi, y, s2, gamma);
        worst = std::max({worst, rel(post.mean, mean), rel(post.variance, sigma.diagonal().real().eval())});
    }
    return {"exact-e-step-posterior", worst < 1e-9, fmt("max relative error", worst)};
}

// Algorithm 1 evaluated entry by entry.
CheckResult amp_lines(std::uint64_t seed) {
    std::mt19937_64 rng(seed + 1);
    const int m = 6, g = 11;
    CMat a = gaussian(m, g, rng) / std::sqrt(2.0 * m);
    CVec r = gaussian(m, 1, rng).col(0);
    SblState prev = init_state(g, m);
    prev.mean = gaussian(g, 1, rng).col(0);
    prev.variance = positive(g, rng);
    prev.residual = gaussian(m, 1, rng).col(0);
    prev.gamma = positive(g, rng);
    const double s2 = 0.3;

    std::vector<cdouble> s(m);
    std::vector<double> tau_s(m);
    for (int i = 0; i < m; ++i) {
        double tau_p = 0.0;
        cdouble p = 0.0;
        for (int j = 0; j < g; ++j) {
            tau_p += std::norm(a(i, j)) * prev.variance(j);
            p += a(i, j) * prev.mean(j);
        }
        p -= tau_p * prev.residual(i);
        tau_s[i] = 1.0 / (tau_p + s2);
        s[i] = tau_s[i] * (r(i) - p);
    }
    CVec mean(g);
    RVec var(g);
    for (int j = 0; j < g; ++j) {
        double inv = 0.0;
        cdouble back = 0.0;
        for (int i = 0; i < m; ++i) {
            inv += std::norm(a(i, j)) * tau_s[i];
            back += std::conj(a(i, j)) * s[i];
        }
        double tau_q = 1.0 / inv;
        cdouble q = prev.mean(j) + tau_q * back;
        double denom = 1.0 + tau_q * prev.gamma(j);
        mean(j) = q / denom;
        var(j) = tau_q / denom;
    }
    CVec s_vec = Eigen::Map<CVec>(s.data(), m);
    AmpOutput out = amp_e_step(a, a.cwiseAbs2(), r, s2, prev, 1);
    double err = std::max({rel(out.mean, mean), rel(out.variance, var), rel(out.residual, s_vec)});
    return {"amp-e-step-lines", err < 1e-13, fmt("max relative error", err)};
}

// With unit gamma both readings of the prior coincide, so the AMP fixed
// point must be the exact posterior mean on an i.i.d. matrix.
CheckResult amp_fixed_point(std::uint64_t seed) {
    std::mt19937_64 rng(seed + 2);
    int agree = 0;
    const int trials = 10;
    for (int trial = 0; trial < trials; ++trial) {
        CMat a = gaussian(48, 96, rng);
        for (int j = 0; j < a.cols(); ++j) a.col(j).normalize();
        CVec r = gaussian(48, 1, rng).col(0);
        SblState st = init_state(96, 48);
        st.variance = RVec::Ones(96);
        RMat a_sq = a.cwiseAbs2();
        for (int it = 1; it <= 60; ++it) {
            AmpOutput out = amp_e_step(a, a_sq, r, 0.1, st, it);
            st.mean = out.mean;
            st.variance = out.variance;
            st.residual = out.residual;
        }
        if (rel(st.mean, exact_e_step(a, r, 0.1, RVec::Ones(96)).mean) < 1e-2) ++agree;
    }
    return {"amp-fixed-point", agree >= 9, fmt("trials in agreement of 10:", agree)};
}

CheckResult channel_energy(std::uint64_t seed) {
    SystemConfig cfg = small_system();
    RngStreams streams(seed);
    const int draws = 2000;
    double total = 0.0;
    for (int i = 0; i < draws; ++i) {
        std::mt19937_64 rng = streams.stream("selftest-channel", i);
        total += build_channel(cfg, draw_paths(cfg, rng)).H.squaredNorm() / cfg.n_subcarriers;
    }
    double mean = total / draws;
    return {"channel-energy", std::abs(mean - 1.0) < 0.06, fmt("mean |H|_F^2 / K", mean)};
}

CheckResult whitening(std::uint64_t seed) {
    SystemConfig cfg = small_system();
    std::mt19937_64 rng(seed + 3);
    PilotCombiner comb = draw_combiner(cfg, rng);
    const int per = cfg.n_rf;
    CMat gram = CMat::Zero(comb.stacked.rows(), comb.stacked.rows());
    for (int q = 0; q < cfg.n_uses; ++q)
        gram.block(q * per, q * per, per, per) = comb.per_use[q] * comb.per_use[q].adjoint();
    CMat d_inv = comb.whitener.inverse();
    double err = (d_inv * gram * d_inv.adjoint() - CMat::Identity(gram.rows(), gram.cols())).norm();
    bool entries = (comb.stacked.cwiseAbs().array() - 1.0 / std::sqrt(cfg.n_antennas)).abs().maxCoeff() < 1e-15;
    return {"whitening", err < 1e-10 && entries, fmt("|D^-1 W W^H D^-H - I|", err)};
}

CheckResult master_operator(std::uint64_t seed) {
    SystemConfig cfg = small_system();
    std::mt19937_64 rng(seed + 4);
    Problem p = make_problem(cfg);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        CVec x = gaussian(cfg.grid_size(), 1, rng).col(0);
        CVec direct = p.op.phi * x;
        CVec pipeline = noiseless_measurement(p.combiner, reconstruct_channel(p.dicts, x));
        worst = std::max(worst, rel(direct, pipeline));
    }
    CMat u = p.op.unitary;
    double unit = (u.adjoint() * u - CMat::Identity(u.cols(), u.cols())).norm();
    double transformed = rel(p.op.transformed, (u.adjoint() * p.op.phi).eval());
    bool ok = worst < 1e-10 && unit < 1e-9 && transformed < 1e-10;
    return {"measurement-operator", ok, fmt("max relative error", std::max({worst, unit, transformed}))};
}

CheckResult dictionary_adjoint(std::uint64_t seed) {
    SystemConfig cfg = small_system();
    std::mt19937_64 rng(seed + 5);
    DictionarySet dicts = build_dictionaries(cfg, AngularMode::frequency_dependent);
    CVec x = gaussian(cfg.grid_size(), 1, rng).col(0);
    CMat h = gaussian(cfg.n_antennas, cfg.n_subcarriers, rng);
    cdouble lhs = (reconstruct_channel(dicts, x).conjugate().cwiseProduct(h)).sum();
    cdouble rhs = x.dot(reconstruct_adjoint(dicts, h));
    double err = std::abs(lhs - rhs) / std::abs(rhs);
    return {"dictionary-adjoint", err < 1e-12, fmt("relative mismatch", err)};
}

// Central differences on a scalar loss sum(c .* gamma_out).
CheckResult mstep_gradient(std::uint64_t seed) {
    std::mt19937_64 rng(seed + 6);
    const int ga = 6, gd = 5, g = ga * gd;
    IterationWeights w;
    w.he_init(rng);
    for (int i = 0; i < 8; ++i) w.b1(i) = 0.3;
    w.b2() = 0.5;
    CVec mean = gaussian(g, 1, rng).col(0);
    RVec var = positive(g, rng), prev = positive(g, rng), c = positive(g, rng);
    FeatureTensor f = build_features(mean, var, ga, gd);
    auto loss = [&](const IterationWeights& weights) { return c.dot(mstep_forward(weights, f, prev)); };
    MStepCache cache;
    mstep_forward(w, f, prev, &cache);
    MStepGradients grads = mstep_backward(w, cache, c);
    double worst = 0.0;
    const double h = 1e-6;
    for (int k = 0; k < IterationWeights::kSize; k += 7) {
        IterationWeights up = w, down = w;
        up.values()[k] += h;
        down.values()[k] -= h;
        double fd = (loss(up) - loss(down)) / (2.0 * h);
        double an = grads.weights.values()[k];
        worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(fd)));
    }
    return {"mstep-gradient", worst < 1e-6, fmt("max scaled error", worst)};
}

CheckResult flops_table(std::uint64_t) {
    SystemConfig cfg = default_config();
    bool ok = flops_per_iteration("amp-sbl-unfolding", cfg) == 43712512ULL &&
              flops_per_iteration("sbl", cfg) == 17179869184ULL &&
              flops_per_iteration("sbl-unfolding", cfg) - flops_per_iteration("sbl", cfg) == 1769472ULL;
    return {"flops-table", ok, "defaults: amp-sbl-unfolding, sbl, sbl-unfolding"};
}

CheckResult noiseless_recovery(std::uint64_t seed) {
    SystemConfig cfg = small_system();
    cfg.rng_seed = seed;
    Problem p = make_problem(cfg);
    RVec ga = uniform_grid(cfg.grid_angular), gd = uniform_grid(cfg.grid_delay);
    double delay = (gd[9] < 0 ? gd[9] + 2.0 : gd[9]) / (2.0 * cfg.subcarrier_spacing());
    CMat h = build_channel(cfg, single_path(cfg, 1.0, delay, std::asin(ga[5]))).H;
    Observation obs;
    obs.y = noiseless_measurement(p.combiner, h);
    obs.r = p.op.unitary.adjoint() * obs.y;
    EstimateResult res = run_estimator(estimator_for("sbl", 30, nullptr), p.op, obs, 1e-8);
    double db = to_db(nmse(h, reconstruct_channel(p.dicts, res.x_hat)));
    return {"noiseless-recovery", db < -40.0, fmt("NMSE dB", db)};
}

// Evaluation must not depend on the worker count.
CheckResult thread_independence(std::uint64_t seed, int threads) {
    SystemConfig cfg = small_system();
    cfg.rng_seed = seed;
    Problem p = make_problem(cfg);
    auto channels = generate_channels(cfg, 6, RngStreams(seed), "selftest-eval");
    std::vector<AlgoRequest> algos{{"sbl", 5, nullptr}};
    auto one = evaluate_algorithms(p, channels, algos, seed, 1);
    auto many = evaluate_algorithms(p, channels, algos, seed, std::max(threads, 3));
    bool ok = one[0].nmse_db == many[0].nmse_db;
    return {"thread-independence", ok, fmt("NMSE dB", one[0].nmse_db)};
}

}  // namespace

std::vector<CheckResult> run_selftest(std::uint64_t seed, int threads) {
    std::vector<std::function<CheckResult()>> checks{
        [&] { return config_round_trip(seed); },   [&] { return exact_posterior(seed); },
        [&] { return amp_lines(seed); },           [&] { return amp_fixed_point(seed); },
        [&] { return channel_energy(seed); },      [&] { return whitening(seed); },
        [&] { return master_operator(seed); },     [&] { return dictionary_adjoint(seed); },
        [&] { return mstep_gradient(seed); },      [&] { return flops_table(seed); },
        [&] { return noiseless_recovery(seed); },  [&] { return thread_independence(seed, threads); },
    };
    const char* names[] = {"config-round-trip", "exact-e-step-posterior", "amp-e-step-lines", "amp-fixed-point",
                           "channel-energy",    "whitening",              "measurement-operator",
                           "dictionary-adjoint", "mstep-gradient",        "flops-table",
                           "noiseless-recovery", "thread-independence"};
    std::vector<CheckResult> results;
    for (std::size_t i = 0; i < checks.size(); ++i) {
        try {
            results.push_back(checks[i]());
        } catch (const std::exception& e) {
            results.push_back({names[i], false, e.what()});
        }
    }
    return results;
}

}  // namespace adsbl
