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

#include "adsbl/sbl.hpp"

#include "adsbl/mstep_net.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace adsbl {

namespace {

bool all_finite(const CVec& v) { return v.allFinite(); }
bool all_finite(const RVec& v) { return v.allFinite(); }

void check_gamma(const RVec& gamma) {
    if (!gamma.allFinite() || (gamma.array() < 0.0).any())
        throw ConfigError("variance parameters must be finite and non-negative");
}

}  // namespace

SblState init_state(int grid_size, int n_measurements) {
    SblState s;
    s.gamma = RVec::Ones(grid_size);
    s.mean = CVec::Zero(grid_size);
    s.variance = s.gamma;
    s.residual = CVec::Zero(n_measurements);
    return s;
}

SblState init_state(const SystemConfig& cfg) { return init_state(cfg.grid_size(), cfg.n_measurements()); }

Posterior exact_e_step(const CMat& phi, const CVec& y, double noise_var, const RVec& gamma, ExactEStepCache* cache) {
    if (phi.cols() != gamma.size() || phi.rows() != y.size())
        throw ConfigError("exact E-step: dimension mismatch");
    if (!(noise_var > 0.0)) throw ConfigError("exact E-step: noise variance must be positive");
    check_gamma(gamma);

    const Eigen::Index m = phi.rows();
    CMat scaled = phi * gamma.cwiseSqrt().asDiagonal();
    CMat c = CMat::Zero(m, m);
    c.selfadjointView<Eigen::Lower>().rankUpdate(scaled);
    c.diagonal().array() += noise_var;
    Eigen::LLT<CMat, Eigen::Lower> llt(c);
    if (llt.info() != Eigen::Success) throw NumericalError("exact E-step: covariance factorisation failed");

    CVec z = llt.solve(y);
    CVec u = phi.adjoint() * z;
    CMat t = llt.matrixL().solve(phi);
    RVec d = t.colwise().squaredNorm().transpose();

    Posterior post;
    post.mean = gamma.cast<cdouble>().cwiseProduct(u);
    post.variance = (gamma.array() - gamma.array().square() * d.array()).max(0.0).matrix();
    if (!all_finite(post.mean) || !all_finite(post.variance))
        throw NumericalError("exact E-step produced non-finite values");
    if (cache) {
        cache->gamma = gamma;
        cache->projected = std::move(u);
        cache->quad_diag = std::move(d);
        cache->whitened_phi = std::move(t);
    }
    return post;
}

RVec exact_e_step_backward(const ExactEStepCache& cache, const CVec& grad_mean, const RVec& grad_variance) {
    const RVec& gamma = cache.gamma;
    const CVec& u = cache.projected;
    const CMat& t = cache.whitened_phi;

    // Mean path: d mean = dgamma .* u - gamma .* S (dgamma .* u), S = T^H T.
    CVec v = gamma.cast<cdouble>().cwiseProduct(grad_mean);
    CVec w = t.adjoint() * (t * v);
    RVec grad = (grad_mean.conjugate().cwiseProduct(u)).real() - (w.conjugate().cwiseProduct(u)).real();

    // Variance path: tau_i = gamma_i - gamma_i^2 d_i, d d_i = -sum_j dgamma_j |S_ij|^2.
    grad.array() += grad_variance.array() * (1.0 - 2.0 * gamma.array() * cache.quad_diag.array());
    RVec a = grad_variance.cwiseProduct(gamma.cwiseAbs2());
    CMat p = t * a.cast<cdouble>().asDiagonal() * t.adjoint();
    CMat pt = p * t;
    grad += t.conjugate().cwiseProduct(pt).colwise().sum().real().transpose();
    return grad;
}

AmpOutput amp_e_step(const CMat& a, const RMat& a_sq, const CVec& r, double noise_var, const SblState& prev,
                     int iteration, AmpCache* cache, double damping) {
    if (a.rows() != r.size() || a.cols() != prev.mean.size() || prev.residual.size() != a.rows() ||
        prev.variance.size() != a.cols() || prev.gamma.size() != a.cols() || a_sq.rows() != a.rows() ||
        a_sq.cols() != a.cols())
        throw ConfigError("AMP E-step: dimension mismatch");
    if (!(damping > 0.0 && damping <= 1.0)) throw ConfigError("AMP damping must lie in (0, 1]");

    const CVec& mean = prev.mean;
    const RVec& tau_x = prev.variance;
    const CVec& s_prev = prev.residual;
    const RVec& gamma = prev.gamma;

    // Line 1
    RVec tau_p = a_sq * tau_x;
    // Line 2
    CVec p = a * mean - tau_p.cast<cdouble>().cwiseProduct(s_prev);
    RVec tau_s = (tau_p.array() + noise_var).inverse().matrix();
    // Line 3
    CVec s = tau_s.cast<cdouble>().cwiseProduct(r - p);
    if (damping != 1.0) s = damping * s + (1.0 - damping) * s_prev;
    RVec tau_q = (a_sq.transpose() * tau_s).array().inverse().matrix();
    // Line 4
    CVec back = a.adjoint() * s;
    CVec q = mean + tau_q.cast<cdouble>().cwiseProduct(back);
    // Line 5
    RVec denom = (1.0 + tau_q.array() * gamma.array()).matrix();
    CVec mean_out = q.cwiseQuotient(denom.cast<cdouble>());
    if (damping != 1.0) mean_out = damping * mean_out + (1.0 - damping) * mean;
    RVec tau_out = tau_q.cwiseQuotient(denom);

    if (!all_finite(tau_p) || !all_finite(tau_s) || !all_finite(s) || !all_finite(tau_q) || !all_finite(mean_out) ||
        !all_finite(tau_out))
        throw DivergenceError(iteration, "non-finite AMP quantities");
    if (mean_out.norm() > 1e6 * r.norm()) throw DivergenceError(iteration, "posterior mean magnitude runaway");

    if (cache) {
        cache->mean_in = mean;
        cache->variance_in = tau_x;
        cache->residual_in = s_prev;
        cache->gamma = gamma;
        cache->tau_p = tau_p;
        cache->p = p;
        cache->tau_s = tau_s;
        cache->residual_out = s;
        cache->tau_q = tau_q;
        cache->back_proj = back;
        cache->q = q;
        cache->denom = denom;
        cache->mean_out = mean_out;
        cache->variance_out = tau_out;
    }
    return AmpOutput{std::move(mean_out), std::move(tau_out), std::move(s)};
}

AmpGradients amp_e_step_backward(const CMat& a, const RMat& a_sq, const AmpCache& c, const CVec& grad_mean,
                                 const RVec& grad_variance, const CVec& grad_residual) {
    // Complex gradients follow d/dRe + j d/dIm, so for z = alpha .* w with
    // alpha real: grad_alpha = Re(conj(grad_z) .* w), grad_w = alpha .* grad_z.
    auto re_dot = [](const CVec& g, const CVec& z) -> RVec { return g.conjugate().cwiseProduct(z).real(); };
    auto scale = [](const RVec& alpha, const CVec& z) -> CVec { return alpha.cast<cdouble>().cwiseProduct(z); };

    AmpGradients out;
    // Line 5: mean_out = q / denom, tau_out = tau_q / denom, denom = 1 + tau_q gamma.
    CVec g_q = grad_mean.cwiseQuotient(c.denom.cast<cdouble>());
    RVec g_denom = -(re_dot(grad_mean, c.mean_out).array() + grad_variance.array() * c.variance_out.array()) /
                   c.denom.array();
    RVec g_tau_q = grad_variance.cwiseQuotient(c.denom) + g_denom.cwiseProduct(c.gamma);
    out.gamma = g_denom.cwiseProduct(c.tau_q);

    // Line 4: q = mean + tau_q .* (A^H s).
    CVec g_mean = g_q;
    g_tau_q += re_dot(g_q, c.back_proj);
    CVec g_s = grad_residual + a * scale(c.tau_q, g_q);

    // Line 3: tau_q = 1 / (|A^H|^2 tau_s), s = tau_s .* (r - p).
    RVec g_tau_s = a_sq * (-g_tau_q.cwiseProduct(c.tau_q.cwiseAbs2()));
    RVec r_minus_p_dot = re_dot(g_s, c.residual_out.cwiseQuotient(c.tau_s.cast<cdouble>()));
    g_tau_s += r_minus_p_dot;
    CVec g_p = -scale(c.tau_s, g_s);

    // Line 2: tau_s = 1 / (tau_p + sigma^2), p = A mean - tau_p .* s_prev.
    RVec g_tau_p = -g_tau_s.cwiseProduct(c.tau_s.cwiseAbs2());
    g_mean += a.adjoint() * g_p;
    g_tau_p -= re_dot(g_p, c.residual_in);
    out.residual = -scale(c.tau_p, g_p);

    // Line 1: tau_p = |A|^2 tau_x.
    out.variance = a_sq.transpose() * g_tau_p;
    out.mean = std::move(g_mean);
    return out;
}

RVec classic_m_step(const CVec& mean, const RVec& variance) {
    if (mean.size() != variance.size()) throw ConfigError("M-step: dimension mismatch");
    return mean.cwiseAbs2() + variance;
}

std::string estimator_name(const EstimatorSpec& spec) {
    std::string name = spec.e_step == EStepKind::amp ? "amp-sbl" : "sbl";
    if (spec.m_step == MStepKind::learned) name += "-unfolding";
    return name;
}

EstimateResult run_estimator(const EstimatorSpec& spec, const MeasurementOperator& op, const Observation& obs,
                             double noise_var, const MeanScorer& scorer) {
    if (spec.iterations < 0) throw ConfigError("iteration count must be >= 0");
    if (spec.m_step == MStepKind::learned) {
        if (!spec.net) throw ConfigError("learned M-step requires a trained network");
        if (spec.net->depth() < spec.iterations)
            throw ConfigError("network depth " + std::to_string(spec.net->depth()) + " is below the iteration count " +
                              std::to_string(spec.iterations));
        if (spec.net->grid_angular() * spec.net->grid_delay() != op.cols())
            throw ConfigError("network grid does not match the measurement operator");
    }

    EstimateResult result;
    result.state = init_state(op.cols(), op.rows());
    SblState& st = result.state;
    for (int l = 1; l <= spec.iterations; ++l) {
        try {
            if (spec.e_step == EStepKind::exact) {
                Posterior post = exact_e_step(op.phi, obs.y, noise_var, st.gamma);
                st.mean = std::move(post.mean);
                st.variance = std::move(post.variance);
            } else {
                AmpOutput out = amp_e_step(op.transformed, op.transformed_sq, obs.r, noise_var, st, l, nullptr,
                                           spec.damping);
                st.mean = std::move(out.mean);
                st.variance = std::move(out.variance);
                st.residual = std::move(out.residual);
            }
            if (spec.m_step == MStepKind::classic) {
                st.gamma = classic_m_step(st.mean, st.variance);
            } else {
                const MStepNet& net = *spec.net;
                FeatureTensor f =
                    build_features(st.mean, st.variance, net.grid_angular(), net.grid_delay(), net.feature_kind());
                st.gamma = mstep_forward(net.weights(l - 1), f, st.gamma);
            }
            if (spec.gamma_floor > 0.0) st.gamma = st.gamma.cwiseMax(spec.gamma_floor);
            if (!st.gamma.allFinite()) throw DivergenceError(l, "non-finite variance parameters");
        } catch (const DivergenceError& e) {
            throw EstimatorDivergence(e, std::move(result.trace));
        } catch (const NumericalError& e) {
            throw EstimatorDivergence(DivergenceError(l, e.what()), std::move(result.trace));
        }
        st.iteration = l;
        IterationRecord rec;
        rec.iteration = l;
        rec.nmse = scorer ? scorer(st.mean) : std::numeric_limits<double>::quiet_NaN();
        rec.gamma_l1 = st.gamma.lpNorm<1>();
        result.trace.push_back(rec);
    }
    result.x_hat = st.mean;
    return result;
}

void write_trace_csv(const std::vector<IterationRecord>& trace, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "iteration,nmse_db,gamma_l1\n" << std::setprecision(10);
    for (const auto& rec : trace) {
        double db = std::isnan(rec.nmse) ? rec.nmse : std::max(-120.0, 10.0 * std::log10(rec.nmse));
        out << rec.iteration << ',' << db << ',' << rec.gamma_l1 << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace adsbl
