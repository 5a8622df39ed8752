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

#include "adsbl/channel.hpp"
#include "adsbl/sbl.hpp"
#include "doctest.h"
#include "helpers.hpp"

#include <Eigen/LU>

using namespace adsbl;

namespace {

// Information-form posterior: Sigma = (Phi^H Phi / s2 + Gamma^{-1})^{-1}.
Posterior information_form(const CMat& phi, const CVec& y, double s2, const RVec& gamma) {
    const Eigen::Index g = phi.cols();
    CMat precision = phi.adjoint() * phi / s2;
    for (Eigen::Index i = 0; i < g; ++i) precision(i, i) += 1.0 / gamma[i];
    CMat sigma = precision.inverse();
    return Posterior{sigma * phi.adjoint() * y / s2, sigma.diagonal().real()};
}

SblState state_from(const CVec& mean, const RVec& variance, const CVec& residual, const RVec& gamma) {
    SblState s;
    s.mean = mean;
    s.variance = variance;
    s.residual = residual;
    s.gamma = gamma;
    return s;
}

struct AmpInstance {
    CMat a;
    RMat a_sq;
    CVec r;
    double s2;
    SblState prev;
};

AmpInstance random_amp_instance(int m, int g, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    AmpInstance in;
    in.a = testing::random_cmat(m, g, rng) / std::sqrt(static_cast<double>(m));
    in.a_sq = in.a.cwiseAbs2();
    in.r = testing::random_cvec(m, rng);
    in.s2 = 0.3;
    in.prev = state_from(testing::random_cvec(g, rng) * 0.5, testing::random_positive(g, rng),
                         testing::random_cvec(m, rng) * 0.3, testing::random_positive(g, rng));
    return in;
}

}  // namespace

TEST_SUITE("sbl") {

TEST_CASE("initial state") {
    SblState s = init_state(12, 5);
    CHECK(s.gamma == RVec::Ones(12));
    CHECK(s.variance == RVec::Ones(12));
    CHECK(s.mean.norm() == 0.0);
    CHECK(s.residual.size() == 5);
    CHECK(s.residual.norm() == 0.0);
}

TEST_CASE("exact E-step scalar cases") {
    CMat phi = CMat::Identity(1, 1);
    CVec y(1);
    y << 2.0;
    Posterior p = exact_e_step(phi, y, 1.0, RVec::Ones(1));
    CHECK(std::abs(p.mean[0] - cdouble(1.0)) < 1e-15);
    CHECK(p.variance[0] == doctest::Approx(0.5));
    Posterior z = exact_e_step(phi, y, 1.0, RVec::Zero(1));
    CHECK(z.mean[0] == cdouble(0.0));
    CHECK(z.variance[0] == 0.0);

    CHECK_THROWS_AS(exact_e_step(phi, y, 0.0, RVec::Ones(1)), ConfigError);
    CHECK_THROWS_AS(exact_e_step(phi, y, 1.0, -RVec::Ones(1)), ConfigError);
    CHECK_THROWS_AS(exact_e_step(phi, CVec::Zero(2), 1.0, RVec::Ones(1)), ConfigError);
}

TEST_CASE("exact E-step equals the information-form posterior") {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<int> dim(2, 64);
    for (int trial = 0; trial < 40; ++trial) {
        int g = trial == 0 ? 16 : dim(rng);
        int m = trial == 0 ? 8 : std::uniform_int_distribution<int>(1, g)(rng);
        CMat phi = testing::random_cmat(m, g, rng);
        CVec y = testing::random_cvec(m, rng);
        RVec gamma = testing::random_positive(g, rng, 0.05, 3.0);
        double s2 = std::uniform_real_distribution<double>(0.05, 2.0)(rng);
        Posterior p = exact_e_step(phi, y, s2, gamma);
        Posterior o = information_form(phi, y, s2, gamma);
        CHECK(testing::rel_err(p.mean, o.mean) < 1e-10);
        CHECK(testing::rel_err(p.variance, o.variance) < 1e-10);
        CHECK((p.variance.array() >= 0.0).all());
        CHECK((p.variance.array() <= gamma.array()).all());
    }
}

TEST_CASE("AMP E-step reproduces a hand evaluation of the five lines") {
    // 2 x 3 instance, evaluated with scalar arithmetic only.
    CMat a(2, 3);
    a << cdouble(0.5, 0.1), cdouble(-0.3, 0.4), cdouble(0.2, -0.6),
         cdouble(0.1, -0.2), cdouble(0.7, 0.0), cdouble(-0.4, 0.3);
    RMat a_sq = a.cwiseAbs2();
    CVec r(2);
    r << cdouble(1.0, -0.5), cdouble(-0.25, 0.75);
    const double s2 = 0.2;

    for (int call = 0; call < 2; ++call) {
        SblState prev = init_state(3, 2);
        prev.gamma << 1.0, 0.5, 2.0;
        if (call == 1) {
            prev.mean << cdouble(0.3, -0.1), cdouble(0.0, 0.2), cdouble(-0.5, 0.05);
            prev.variance << 0.4, 0.9, 0.25;
            prev.residual << cdouble(0.2, 0.1), cdouble(-0.1, 0.3);
        } else {
            prev.variance = prev.gamma;
        }

        double tau_p[2], tau_s[2], tau_q[3], tau_x[3];
        cdouble p[2], s[2], q[3], mu[3];
        for (int i = 0; i < 2; ++i) {
            tau_p[i] = 0.0;
            cdouble am = 0.0;
            for (int j = 0; j < 3; ++j) {
                double mag = a(i, j).real() * a(i, j).real() + a(i, j).imag() * a(i, j).imag();
                tau_p[i] += mag * prev.variance[j];
                am += a(i, j) * prev.mean[j];
            }
            p[i] = am - tau_p[i] * prev.residual[i];
            tau_s[i] = 1.0 / (tau_p[i] + s2);
            s[i] = tau_s[i] * (r[i] - p[i]);
        }
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            cdouble back = 0.0;
            for (int i = 0; i < 2; ++i) {
                acc += std::norm(a(i, j)) * tau_s[i];
                back += std::conj(a(i, j)) * s[i];
            }
            tau_q[j] = 1.0 / acc;
            q[j] = prev.mean[j] + tau_q[j] * back;
            mu[j] = q[j] / (1.0 + tau_q[j] * prev.gamma[j]);
            tau_x[j] = tau_q[j] / (1.0 + tau_q[j] * prev.gamma[j]);
        }

        AmpCache cache;
        AmpOutput out = amp_e_step(a, a_sq, r, s2, prev, 1, &cache);
        const double tol = 1e-15;
        for (int i = 0; i < 2; ++i) {
            CHECK(std::abs(cache.tau_p[i] - tau_p[i]) <= tol * tau_p[i]);
            CHECK(std::abs(cache.p[i] - p[i]) <= tol * std::abs(p[i]) + 1e-16);
            CHECK(std::abs(cache.tau_s[i] - tau_s[i]) <= tol * tau_s[i]);
            CHECK(std::abs(out.residual[i] - s[i]) <= tol * std::abs(s[i]) + 1e-16);
        }
        for (int j = 0; j < 3; ++j) {
            CHECK(std::abs(cache.tau_q[j] - tau_q[j]) <= tol * tau_q[j]);
            CHECK(std::abs(cache.q[j] - q[j]) <= tol * std::abs(q[j]) + 1e-16);
            CHECK(std::abs(out.mean[j] - mu[j]) <= tol * std::abs(mu[j]) + 1e-16);
            CHECK(std::abs(out.variance[j] - tau_x[j]) <= tol * tau_x[j]);
        }
    }
}

TEST_CASE("AMP E-step with a huge prior parameter pins the mean at zero") {
    AmpInstance in = random_amp_instance(4, 6, 1);
    in.prev.gamma = RVec::Constant(6, 1e12);
    AmpOutput out = amp_e_step(in.a, in.a_sq, in.r, in.s2, in.prev, 1);
    CHECK(out.mean.norm() < 1e-9);
    CHECK(out.variance.maxCoeff() < 1e-9);
}

TEST_CASE("AMP fixed point on an i.i.d. Gaussian matrix") {
    // Line 5 reads gamma as a precision, so the AMP mean under gamma matches
    // the exact posterior under 1 / gamma; the two coincide at gamma = 1.
    int agree_unit = 0, agree_inverse = 0;
    const int trials = 50;
    for (int trial = 0; trial < trials; ++trial) {
        std::mt19937_64 rng(1000 + trial);
        CMat a = testing::random_cmat(64, 128, rng);
        for (int j = 0; j < 128; ++j) a.col(j) /= a.col(j).norm();
        RMat a_sq = a.cwiseAbs2();
        CVec r = testing::random_cvec(64, rng);
        const double s2 = 0.1;
        for (int variant = 0; variant < 2; ++variant) {
            RVec gamma = variant == 0 ? RVec::Ones(128) : testing::random_positive(128, rng, 0.5, 2.0);
            SblState st = init_state(128, 64);
            st.gamma = gamma;
            st.variance = RVec::Ones(128);
            for (int it = 1; it <= 50; ++it) {
                AmpOutput out = amp_e_step(a, a_sq, r, s2, st, it);
                st.mean = out.mean;
                st.variance = out.variance;
                st.residual = out.residual;
            }
            Posterior exact = exact_e_step(a, r, s2, gamma.cwiseInverse());
            if (testing::rel_err(st.mean, exact.mean) < 1e-2) ++(variant == 0 ? agree_unit : agree_inverse);
        }
    }
    CHECK(agree_unit >= 45);
    CHECK(agree_inverse >= 45);
}

TEST_CASE("AMP pre-noise variance is constant for orthonormal rows and constant variances") {
    std::mt19937_64 rng(8);
    CMat g = testing::random_cmat(32, 8, rng);
    Eigen::HouseholderQR<CMat> qr(g);
    CMat q = qr.householderQ() * CMat::Identity(32, 8);
    CMat a = q.adjoint();  // 8 x 32, orthonormal rows
    SblState st = init_state(32, 8);
    st.variance = RVec::Constant(32, 0.7);
    AmpCache cache;
    amp_e_step(a, a.cwiseAbs2(), testing::random_cvec(8, rng), 0.1, st, 1, &cache);
    // Each row of |A|^2 sums to a squared row norm, here 1.
    CHECK((cache.tau_p.array() - 0.7).abs().maxCoeff() < 1e-12);
}

TEST_CASE("AMP divergence is reported with its iteration") {
    AmpInstance in = random_amp_instance(3, 5, 2);
    in.r[0] = cdouble(std::numeric_limits<double>::quiet_NaN(), 0.0);
    try {
        amp_e_step(in.a, in.a_sq, in.r, in.s2, in.prev, 7);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.iteration() == 7);
    }
    CHECK_THROWS_AS(amp_e_step(in.a, in.a_sq, CVec::Zero(2), in.s2, in.prev, 1), ConfigError);
}

TEST_CASE("AMP backward matches finite differences") {
    AmpInstance in = random_amp_instance(6, 10, 5);
    std::mt19937_64 rng(77);
    CVec c_mean = testing::random_cvec(10, rng);
    RVec c_var = testing::random_positive(10, rng, -1.0, 1.0);
    CVec c_res = testing::random_cvec(6, rng);
    auto objective = [&](const SblState& st) {
        AmpOutput o = amp_e_step(in.a, in.a_sq, in.r, in.s2, st, 1);
        return c_mean.dot(o.mean).real() + c_var.dot(o.variance) + c_res.dot(o.residual).real();
    };
    AmpCache cache;
    amp_e_step(in.a, in.a_sq, in.r, in.s2, in.prev, 1, &cache);
    AmpGradients g = amp_e_step_backward(in.a, in.a_sq, cache, c_mean, c_var, c_res);

    const double h = 1e-6;
    auto fd = [&](auto mutate) {
        SblState plus = in.prev, minus = in.prev;
        mutate(plus, h);
        mutate(minus, -h);
        return (objective(plus) - objective(minus)) / (2.0 * h);
    };
    auto close = [](double analytic, double numeric) {
        return std::abs(analytic - numeric) <= 1e-6 * std::max(1.0, std::abs(numeric));
    };
    for (int j = 0; j < 10; ++j) {
        CHECK(close(g.mean[j].real(), fd([&](SblState& s, double e) { s.mean[j] += e; })));
        CHECK(close(g.mean[j].imag(), fd([&](SblState& s, double e) { s.mean[j] += cdouble(0.0, e); })));
        CHECK(close(g.variance[j], fd([&](SblState& s, double e) { s.variance[j] += e; })));
        CHECK(close(g.gamma[j], fd([&](SblState& s, double e) { s.gamma[j] += e; })));
    }
    for (int i = 0; i < 6; ++i) {
        CHECK(close(g.residual[i].real(), fd([&](SblState& s, double e) { s.residual[i] += e; })));
        CHECK(close(g.residual[i].imag(), fd([&](SblState& s, double e) { s.residual[i] += cdouble(0.0, e); })));
    }
}

TEST_CASE("exact E-step backward matches finite differences") {
    std::mt19937_64 rng(31);
    CMat phi = testing::random_cmat(6, 12, rng);
    CVec y = testing::random_cvec(6, rng);
    RVec gamma = testing::random_positive(12, rng);
    CVec c_mean = testing::random_cvec(12, rng);
    RVec c_var = testing::random_positive(12, rng, -1.0, 1.0);
    auto objective = [&](const RVec& g) {
        Posterior p = exact_e_step(phi, y, 0.4, g);
        return c_mean.dot(p.mean).real() + c_var.dot(p.variance);
    };
    ExactEStepCache cache;
    exact_e_step(phi, y, 0.4, gamma, &cache);
    RVec grad = exact_e_step_backward(cache, c_mean, c_var);
    const double h = 1e-6;
    for (int j = 0; j < 12; ++j) {
        RVec plus = gamma, minus = gamma;
        plus[j] += h;
        minus[j] -= h;
        double numeric = (objective(plus) - objective(minus)) / (2.0 * h);
        CHECK(std::abs(grad[j] - numeric) <= 1e-6 * std::max(1.0, std::abs(numeric)));
    }
}

TEST_CASE("classic M-step") {
    CVec mu(3);
    mu << cdouble(1.0, 0.0), cdouble(0.0, 0.0), cdouble(3.0, 4.0);
    RVec tau(3);
    tau << 0.5, 0.0, 0.0;
    RVec g = classic_m_step(mu, tau);
    CHECK(g[0] == doctest::Approx(1.5));
    CHECK(g[1] == 0.0);
    CHECK(g[2] == doctest::Approx(25.0));
    std::mt19937_64 rng(3);
    CVec m = testing::random_cvec(20, rng);
    RVec t = testing::random_positive(20, rng);
    CHECK((classic_m_step(m, t) - classic_m_step(m * std::polar(1.0, 1.234), t)).norm() < 1e-13);
    CHECK_THROWS_AS(classic_m_step(m, RVec::Zero(3)), ConfigError);
}

TEST_CASE("estimator on a noiseless on-grid path") {
    SystemConfig cfg = testing::small_config();
    std::mt19937_64 prng(1);
    PilotCombiner comb = draw_combiner(cfg, prng);
    DictionarySet dicts = build_dictionaries(cfg, AngularMode::frequency_dependent);
    MeasurementOperator op = assemble_operator(cfg, comb, dicts);
    // Unit-gain path on grid point (5, 9); delay phase wrapped into [0, 2).
    RVec ga = uniform_grid(cfg.grid_angular), gd = uniform_grid(cfg.grid_delay);
    double delay = (gd[9] < 0 ? gd[9] + 2.0 : gd[9]) / (2.0 * cfg.subcarrier_spacing());
    CMat h = build_channel(cfg, single_path(cfg, 1.0, delay, std::asin(ga[5]))).H;
    Observation obs;
    obs.y = noiseless_measurement(comb, h);
    obs.r = op.unitary.adjoint() * obs.y;

    EstimatorSpec spec;
    spec.e_step = EStepKind::exact;
    spec.iterations = 30;
    EstimateResult res = run_estimator(spec, op, obs, 1e-8, [&](const CVec& m) {
        return (reconstruct_channel(dicts, m) - h).squaredNorm() / h.squaredNorm();
    });
    REQUIRE(res.trace.size() == 30);
    double nmse = (reconstruct_channel(dicts, res.x_hat) - h).squaredNorm() / h.squaredNorm();
    CHECK(10.0 * std::log10(nmse) < -40.0);
    CHECK(res.trace.back().nmse == doctest::Approx(nmse));
    CHECK((res.state.gamma.array() >= 0.0).all());

    EstimateResult again = run_estimator(spec, op, obs, 1e-8);
    CHECK((again.x_hat - res.x_hat).norm() == 0.0);
    CHECK(std::isnan(again.trace.front().nmse));

    spec.iterations = 0;
    EstimateResult none = run_estimator(spec, op, obs, 1e-8);
    CHECK(none.x_hat.norm() == 0.0);
    CHECK(none.trace.empty());

    spec.m_step = MStepKind::learned;
    spec.iterations = 2;
    CHECK_THROWS_AS(run_estimator(spec, op, obs, 1e-8), ConfigError);
}

TEST_CASE("estimator names") {
    EstimatorSpec s;
    CHECK(estimator_name(s) == "sbl");
    s.e_step = EStepKind::amp;
    CHECK(estimator_name(s) == "amp-sbl");
    s.m_step = MStepKind::learned;
    CHECK(estimator_name(s) == "amp-sbl-unfolding");
}

TEST_CASE("divergence keeps the partial trace") {
    SystemConfig cfg = testing::tiny_config();
    std::mt19937_64 prng(1);
    PilotCombiner comb = draw_combiner(cfg, prng);
    DictionarySet dicts = build_dictionaries(cfg, AngularMode::frequency_dependent);
    MeasurementOperator op = assemble_operator(cfg, comb, dicts);
    Observation obs;
    obs.y = testing::random_cvec(op.rows(), prng);
    obs.r = op.unitary.adjoint() * obs.y;
    obs.r[op.rows() - 1] = cdouble(std::numeric_limits<double>::infinity(), 0.0);
    EstimatorSpec spec;
    spec.e_step = EStepKind::amp;
    spec.iterations = 5;
    try {
        run_estimator(spec, op, obs, 0.1);
        FAIL("expected divergence");
    } catch (const EstimatorDivergence& e) {
        CHECK(e.iteration() == 1);
        CHECK(e.trace().empty());
    }
}

}  // TEST_SUITE
