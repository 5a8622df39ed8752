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

#ifndef ADSBL_MSTEP_NET_HPP
#define ADSBL_MSTEP_NET_HPP

#include "adsbl/config.hpp"

#include <array>
#include <filesystem>
#include <vector>

namespace adsbl {

// How the complex posterior mean becomes a real input channel.
enum class FeatureKind : std::uint32_t { squared_magnitude = 0, magnitude = 1 };

// Image-like (G_A, G_D, 2) input. Storage is channel-major and each channel
// uses the vec order of the angular-delay vector, so pixel (a, d) of channel
// c sits at c * G + a + G_A * d.
struct FeatureTensor {
    int grid_angular = 0;
    int grid_delay = 0;
    std::vector<double> data;

    int pixels() const { return grid_angular * grid_delay; }
    double at(int channel, int a, int d) const { return data[channel * pixels() + a + grid_angular * d]; }
};

FeatureTensor build_features(const CVec& mean, const RVec& variance, int grid_angular, int grid_delay,
                             FeatureKind kind = FeatureKind::squared_magnitude);

// Weights of one iteration's network: conv 2->8 (3x3), ReLU, conv 8->1
// (3x3), residual add onto gamma^{l-1}, ReLU. Flat parameter vector with
// named accessors.
class IterationWeights {
public:
    static constexpr int kInputs = 2;
    static constexpr int kHidden = 8;
    static constexpr int kKernel = 3;
    static constexpr int kConv1Weights = kHidden * kInputs * kKernel * kKernel;
    static constexpr int kConv1Bias = kConv1Weights;
    static constexpr int kConv2Weights = kConv1Bias + kHidden;
    static constexpr int kConv2Bias = kConv2Weights + kHidden * kKernel * kKernel;
    static constexpr int kSize = kConv2Bias + 1;

    IterationWeights() : values_(kSize, 0.0) {}

    double& w1(int out, int in, int ky, int kx) { return values_[((out * kInputs + in) * kKernel + ky) * kKernel + kx]; }
    double w1(int out, int in, int ky, int kx) const { return values_[((out * kInputs + in) * kKernel + ky) * kKernel + kx]; }
    double& b1(int out) { return values_[kConv1Bias + out]; }
    double b1(int out) const { return values_[kConv1Bias + out]; }
    double& w2(int in, int ky, int kx) { return values_[kConv2Weights + (in * kKernel + ky) * kKernel + kx]; }
    double w2(int in, int ky, int kx) const { return values_[kConv2Weights + (in * kKernel + ky) * kKernel + kx]; }
    double& b2() { return values_[kConv2Bias]; }
    double b2() const { return values_[kConv2Bias]; }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    // He-normal conv weights, zero biases.
    void he_init(std::mt19937_64& rng);
    void set_zero() { std::fill(values_.begin(), values_.end(), 0.0); }
    void add_scaled(const IterationWeights& other, double scale);
    bool all_finite() const;

private:
    std::vector<double> values_;
};

// Activations kept for the backward pass.
struct MStepCache {
    FeatureTensor features;
    std::vector<double> hidden_pre;  // kHidden * G, before ReLU
    std::vector<double> residual_sum;  // gamma_prev + conv2 output, before ReLU
};

// gamma^l from the iteration-l features and gamma^{l-1}.
RVec mstep_forward(const IterationWeights& weights, const FeatureTensor& features, const RVec& gamma_prev,
                   MStepCache* cache = nullptr);

struct MStepGradients {
    IterationWeights weights;
    std::vector<double> features;  // same layout as FeatureTensor::data
    RVec gamma_prev;
};

MStepGradients mstep_backward(const IterationWeights& weights, const MStepCache& cache, const RVec& upstream);

// Gradient of build_features back onto the complex mean (d/dRe + j d/dIm)
// and the variance.
void features_backward(const CVec& mean, const std::vector<double>& grad_features, FeatureKind kind,
                       CVec& grad_mean, RVec& grad_variance);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Per-iteration networks with Adam moment slots. Iteration l (1-based) of the
// estimator uses weights(l - 1).
class MStepNet {
public:
    MStepNet() = default;
    MStepNet(int grid_angular, int grid_delay, int depth, FeatureKind kind = FeatureKind::squared_magnitude);

    int depth() const { return static_cast<int>(weights_.size()); }
    int grid_angular() const { return grid_angular_; }
    int grid_delay() const { return grid_delay_; }
    FeatureKind feature_kind() const { return kind_; }

    IterationWeights& weights(int index) { return weights_.at(index); }
    const IterationWeights& weights(int index) const { return weights_.at(index); }
    std::vector<IterationWeights>& all_weights() { return weights_; }
    const std::vector<IterationWeights>& all_weights() const { return weights_; }

    void he_init(std::mt19937_64& rng);
    void set_zero();
    // Appends one iteration whose weights are a copy of `source` and resets
    // the optimiser moments.
    void append_copy(int source);
    void reset_moments();

    void adam_update(const std::vector<IterationWeights>& grads, int step, double lr, const AdamConfig& cfg = {});

    std::uint64_t config_hash = 0;
    int epochs_trained = 0;
    double final_val_loss = 0.0;

private:
    int grid_angular_ = 0;
    int grid_delay_ = 0;
    FeatureKind kind_ = FeatureKind::squared_magnitude;
    std::vector<IterationWeights> weights_;
    std::vector<IterationWeights> first_moment_;
    std::vector<IterationWeights> second_moment_;
};

// Free-function form used by the trainer.
void adam_update(MStepNet& net, const std::vector<IterationWeights>& grads, int step, double lr,
                 const AdamConfig& cfg = {});

// "ADSBLNET" | u32 version | u64 config hash | u32 G_A | u32 G_D | u32 feature
// kind | u32 depth | u32 epochs | f64 val loss | per iteration: 225 f64
// weights | "END\0". Optimiser moments are not stored.
void save_checkpoint(const MStepNet& net, const std::filesystem::path& path);
// Throws IoError when the file is malformed or was trained under another config.
MStepNet load_checkpoint(const std::filesystem::path& path, const SystemConfig& cfg);

}  // namespace adsbl

#endif
