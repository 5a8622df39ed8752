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

#ifndef ADSBL_SBL_HPP
#define ADSBL_SBL_HPP

#include "adsbl/measurement.hpp"

#include <functional>
#include <vector>

namespace adsbl {

class MStepNet;

enum class EStepKind { exact, amp };
enum class MStepKind { classic, learned };

// Iteration state shared by both E-steps. `residual` is only touched by the
// AMP E-step.
struct SblState {
    int iteration = 0;
    CVec mean;
    RVec variance;
    RVec gamma;
    CVec residual;
};

// gamma = 1, mean = 0, residual = 0, variance = gamma (prior variance).
SblState init_state(int grid_size, int n_measurements);
SblState init_state(const SystemConfig& cfg);

struct Posterior {
    CVec mean;
    RVec variance;
};

// Values kept by exact_e_step for exact_e_step_backward.
struct ExactEStepCache {
    RVec gamma;
    CVec projected;     // u = Phi^H C^{-1} y, mean = gamma .* u
    RVec quad_diag;     // d_i = phi_i^H C^{-1} phi_i
    CMat whitened_phi;  // T = L^{-1} Phi with L L^H = C
};

// Gaussian posterior of x under prior CN(0, diag(gamma)) and white noise.
// C = Phi diag(gamma) Phi^H + sigma^2 I is handled through its Cholesky
// factor; a failed factorisation is a NumericalError.
Posterior exact_e_step(const CMat& phi, const CVec& y, double noise_var, const RVec& gamma,
                       ExactEStepCache* cache = nullptr);

// Gradient with respect to gamma given gradients on the posterior mean
// (complex, d/dRe + j d/dIm) and variance.
RVec exact_e_step_backward(const ExactEStepCache& cache, const CVec& grad_mean, const RVec& grad_variance);

// All intermediates of one AMP E-step, in the order they are produced.
struct AmpCache {
    CVec mean_in;
    RVec variance_in;
    CVec residual_in;
    RVec gamma;
    RVec tau_p;
    CVec p;
    RVec tau_s;
    CVec residual_out;  // s^l
    RVec tau_q;
    CVec back_proj;     // A^H s^l
    CVec q;
    RVec denom;         // 1 + tau_q .* gamma
    CVec mean_out;
    RVec variance_out;
};

struct AmpOutput {
    CVec mean;
    RVec variance;
    CVec residual;
};

// One E-step of AMP-SBL on the unitary-transformed model r = A x + w.
// `damping` = 1 disables damping. Throws DivergenceError (with `iteration`)
// on non-finite values or when |mean| exceeds 1e6 |r|.
AmpOutput amp_e_step(const CMat& a, const RMat& a_sq, const CVec& r, double noise_var,
                     const SblState& prev, int iteration, AmpCache* cache = nullptr,
                     double damping = 1.0);

struct AmpGradients {
    CVec mean;      // w.r.t. mean_in
    RVec variance;  // w.r.t. variance_in
    CVec residual;  // w.r.t. residual_in
    RVec gamma;
};

// Reverse pass through the five lines of the AMP E-step (undamped).
AmpGradients amp_e_step_backward(const CMat& a, const RMat& a_sq, const AmpCache& cache,
                                 const CVec& grad_mean, const RVec& grad_variance,
                                 const CVec& grad_residual);

// gamma = |mean|^2 + variance.
RVec classic_m_step(const CVec& mean, const RVec& variance);

struct EstimatorSpec {
    EStepKind e_step = EStepKind::exact;
    MStepKind m_step = MStepKind::classic;
    int iterations = 30;
    const MStepNet* net = nullptr;
    double damping = 1.0;
    double gamma_floor = 0.0;
};

std::string estimator_name(const EstimatorSpec& spec);

struct IterationRecord {
    int iteration = 0;
    double nmse = 0.0;  // linear, NaN when no scorer was supplied
    double gamma_l1 = 0.0;
};

struct EstimateResult {
    CVec x_hat;
    SblState state;
    std::vector<IterationRecord> trace;
};

// Thrown by run_estimator; keeps the iterations completed before the failure.
class EstimatorDivergence : public DivergenceError {
public:
    EstimatorDivergence(const DivergenceError& cause, std::vector<IterationRecord> trace)
        : DivergenceError(cause), trace_(std::move(trace)) {}
    const std::vector<IterationRecord>& trace() const { return trace_; }

private:
    std::vector<IterationRecord> trace_;
};

// Optional per-iteration scorer: maps the current mean to a linear NMSE.
using MeanScorer = std::function<double(const CVec&)>;

// Alternates E-step and M-step `spec.iterations` times from init_state and
// returns mean^L. The exact E-step reads obs.y and op.phi, the AMP E-step
// obs.r and op.transformed.
EstimateResult run_estimator(const EstimatorSpec& spec, const MeasurementOperator& op,
                             const Observation& obs, double noise_var, const MeanScorer& scorer = {});

// iteration,nmse_db,gamma_l1
void write_trace_csv(const std::vector<IterationRecord>& trace, const std::filesystem::path& path);

}  // namespace adsbl

#endif
