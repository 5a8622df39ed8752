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

#include "adsbl/mstep_net.hpp"

#include "binary_io.hpp"

#include <cmath>

namespace adsbl {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'S', 'B', 'L', 'N', 'E', 'T'};
constexpr char kTrailer[4] = {'E', 'N', 'D', '\0'};
constexpr std::uint32_t kVersion = 1;
constexpr int K = IterationWeights::kKernel;

// Image geometry; pixel (a, d) lives at a + rows * d.
struct Grid {
    int rows;
    int cols;
    int pixels() const { return rows * cols; }
};

// out[o] += sum_c w(o, c, ky, kx) * in[c](a + ky - 1, d + kx - 1), zero padded.
template <typename WeightFn>
void conv3x3_accumulate(const Grid& g, const double* in, int in_ch, double* out, int out_ch, WeightFn weight) {
    const int px = g.pixels();
    for (int o = 0; o < out_ch; ++o) {
        double* dst = out + static_cast<std::size_t>(o) * px;
        for (int c = 0; c < in_ch; ++c) {
            const double* src = in + static_cast<std::size_t>(c) * px;
            for (int ky = 0; ky < K; ++ky) {
                const int da = ky - 1;
                const int a_lo = std::max(0, -da), a_hi = std::min(g.rows, g.rows - da);
                for (int kx = 0; kx < K; ++kx) {
                    const int dd = kx - 1;
                    const int d_lo = std::max(0, -dd), d_hi = std::min(g.cols, g.cols - dd);
                    const double w = weight(o, c, ky, kx);
                    if (w == 0.0) continue;
                    for (int d = d_lo; d < d_hi; ++d) {
                        double* drow = dst + g.rows * d;
                        const double* srow = src + g.rows * (d + dd) + da;
                        for (int a = a_lo; a < a_hi; ++a) drow[a] += w * srow[a];
                    }
                }
            }
        }
    }
}

// Reverse of conv3x3_accumulate: weight gradients via grad_weight(o, c, ky,
// kx) += ..., and input gradients into grad_in when non-null.
template <typename WeightFn, typename GradWeightFn>
void conv3x3_backward(const Grid& g, const double* in, int in_ch, const double* grad_out, int out_ch,
                      WeightFn weight, GradWeightFn grad_weight, double* grad_in) {
    const int px = g.pixels();
    for (int o = 0; o < out_ch; ++o) {
        const double* go = grad_out + static_cast<std::size_t>(o) * px;
        for (int c = 0; c < in_ch; ++c) {
            const double* src = in + static_cast<std::size_t>(c) * px;
            double* gi = grad_in ? grad_in + static_cast<std::size_t>(c) * px : nullptr;
            for (int ky = 0; ky < K; ++ky) {
                const int da = ky - 1;
                const int a_lo = std::max(0, -da), a_hi = std::min(g.rows, g.rows - da);
                for (int kx = 0; kx < K; ++kx) {
                    const int dd = kx - 1;
                    const int d_lo = std::max(0, -dd), d_hi = std::min(g.cols, g.cols - dd);
                    const double w = weight(o, c, ky, kx);
                    double acc = 0.0;
                    for (int d = d_lo; d < d_hi; ++d) {
                        const double* grow = go + g.rows * d;
                        const double* srow = src + g.rows * (d + dd) + da;
                        for (int a = a_lo; a < a_hi; ++a) acc += grow[a] * srow[a];
                        if (gi) {
                            double* girow = gi + g.rows * (d + dd) + da;
                            for (int a = a_lo; a < a_hi; ++a) girow[a] += w * grow[a];
                        }
                    }
                    grad_weight(o, c, ky, kx) += acc;
                }
            }
        }
    }
}

double standard_normal(std::mt19937_64& rng) { return complex_normal(rng, 2.0).real(); }

}  // namespace

FeatureTensor build_features(const CVec& mean, const RVec& variance, int grid_angular, int grid_delay,
                             FeatureKind kind) {
    const Eigen::Index g = static_cast<Eigen::Index>(grid_angular) * grid_delay;
    if (mean.size() != g || variance.size() != g)
        throw ConfigError("feature vectors must have length G_A * G_D = " + std::to_string(g));
    FeatureTensor f;
    f.grid_angular = grid_angular;
    f.grid_delay = grid_delay;
    f.data.resize(2 * static_cast<std::size_t>(g));
    for (Eigen::Index i = 0; i < g; ++i) {
        f.data[i] = kind == FeatureKind::squared_magnitude ? std::norm(mean[i]) : std::abs(mean[i]);
        f.data[g + i] = variance[i];
    }
    return f;
}

void features_backward(const CVec& mean, const std::vector<double>& grad_features, FeatureKind kind, CVec& grad_mean,
                       RVec& grad_variance) {
    const Eigen::Index g = mean.size();
    grad_mean.resize(g);
    grad_variance.resize(g);
    for (Eigen::Index i = 0; i < g; ++i) {
        const double gf = grad_features[i];
        if (kind == FeatureKind::squared_magnitude) {
            grad_mean[i] = 2.0 * gf * mean[i];
        } else {
            const double mag = std::abs(mean[i]);
            grad_mean[i] = mag > 0.0 ? gf * mean[i] / mag : cdouble(0.0);
        }
        grad_variance[i] = grad_features[g + i];
    }
}

void IterationWeights::he_init(std::mt19937_64& rng) {
    const double std1 = std::sqrt(2.0 / (kInputs * kKernel * kKernel));
    const double std2 = std::sqrt(2.0 / (kHidden * kKernel * kKernel));
    for (int i = 0; i < kConv1Weights; ++i) values_[i] = std1 * standard_normal(rng);
    for (int i = kConv1Bias; i < kConv2Weights; ++i) values_[i] = 0.0;
    for (int i = kConv2Weights; i < kConv2Bias; ++i) values_[i] = std2 * standard_normal(rng);
    values_[kConv2Bias] = 0.0;
}

void IterationWeights::add_scaled(const IterationWeights& other, double scale) {
    for (int i = 0; i < kSize; ++i) values_[i] += scale * other.values_[i];
}

bool IterationWeights::all_finite() const {
    for (double v : values_)
        if (!std::isfinite(v)) return false;
    return true;
}

RVec mstep_forward(const IterationWeights& w, const FeatureTensor& f, const RVec& gamma_prev, MStepCache* cache) {
    const Grid g{f.grid_angular, f.grid_delay};
    const int px = g.pixels();
    if (gamma_prev.size() != px || f.data.size() != 2 * static_cast<std::size_t>(px))
        throw ConfigError("M-step input sizes do not match the feature grid");
    constexpr int H = IterationWeights::kHidden;

    std::vector<double> hidden(static_cast<std::size_t>(H) * px);
    for (int o = 0; o < H; ++o) std::fill_n(hidden.begin() + static_cast<std::ptrdiff_t>(o) * px, px, w.b1(o));
    conv3x3_accumulate(g, f.data.data(), IterationWeights::kInputs, hidden.data(), H,
                       [&](int o, int c, int ky, int kx) { return w.w1(o, c, ky, kx); });
    std::vector<double> activated(hidden.size());
    for (std::size_t i = 0; i < hidden.size(); ++i) activated[i] = hidden[i] > 0.0 ? hidden[i] : 0.0;

    std::vector<double> sum(px);
    for (int i = 0; i < px; ++i) sum[i] = gamma_prev[i] + w.b2();
    conv3x3_accumulate(g, activated.data(), H, sum.data(), 1,
                       [&](int, int c, int ky, int kx) { return w.w2(c, ky, kx); });

    RVec gamma(px);
    for (int i = 0; i < px; ++i) gamma[i] = sum[i] > 0.0 ? sum[i] : 0.0;
    if (cache) {
        cache->features = f;
        cache->hidden_pre = std::move(hidden);
        cache->residual_sum = std::move(sum);
    }
    return gamma;
}

MStepGradients mstep_backward(const IterationWeights& w, const MStepCache& cache, const RVec& upstream) {
    const FeatureTensor& f = cache.features;
    const Grid g{f.grid_angular, f.grid_delay};
    const int px = g.pixels();
    constexpr int H = IterationWeights::kHidden;
    if (upstream.size() != px) throw ConfigError("upstream gradient has wrong length");

    MStepGradients out;
    out.gamma_prev.resize(px);
    std::vector<double> g_sum(px);
    for (int i = 0; i < px; ++i) {
        g_sum[i] = cache.residual_sum[i] > 0.0 ? upstream[i] : 0.0;
        out.gamma_prev[i] = g_sum[i];
        out.weights.b2() += g_sum[i];
    }

    std::vector<double> activated(cache.hidden_pre.size());
    for (std::size_t i = 0; i < activated.size(); ++i) activated[i] = cache.hidden_pre[i] > 0.0 ? cache.hidden_pre[i] : 0.0;
    std::vector<double> g_hidden(activated.size(), 0.0);
    conv3x3_backward(
        g, activated.data(), H, g_sum.data(), 1, [&](int, int c, int ky, int kx) { return w.w2(c, ky, kx); },
        [&](int, int c, int ky, int kx) -> double& { return out.weights.w2(c, ky, kx); }, g_hidden.data());

    for (std::size_t i = 0; i < g_hidden.size(); ++i)
        if (!(cache.hidden_pre[i] > 0.0)) g_hidden[i] = 0.0;
    for (int o = 0; o < H; ++o)
        for (int i = 0; i < px; ++i) out.weights.b1(o) += g_hidden[static_cast<std::size_t>(o) * px + i];

    out.features.assign(f.data.size(), 0.0);
    conv3x3_backward(
        g, f.data.data(), IterationWeights::kInputs, g_hidden.data(), H,
        [&](int o, int c, int ky, int kx) { return w.w1(o, c, ky, kx); },
        [&](int o, int c, int ky, int kx) -> double& { return out.weights.w1(o, c, ky, kx); }, out.features.data());
    return out;
}

MStepNet::MStepNet(int grid_angular, int grid_delay, int depth, FeatureKind kind)
    : grid_angular_(grid_angular), grid_delay_(grid_delay), kind_(kind) {
    if (grid_angular < 1 || grid_delay < 1 || depth < 0) throw ConfigError("invalid network shape");
    weights_.resize(depth);
    first_moment_.resize(depth);
    second_moment_.resize(depth);
}

void MStepNet::he_init(std::mt19937_64& rng) {
    for (auto& w : weights_) w.he_init(rng);
    reset_moments();
}

void MStepNet::set_zero() {
    for (auto& w : weights_) w.set_zero();
    reset_moments();
}

void MStepNet::append_copy(int source) {
    IterationWeights copy = weights_.at(source);
    weights_.push_back(std::move(copy));
    first_moment_.emplace_back();
    second_moment_.emplace_back();
    reset_moments();
}

void MStepNet::reset_moments() {
    for (auto& m : first_moment_) m.set_zero();
    for (auto& v : second_moment_) v.set_zero();
}

void MStepNet::adam_update(const std::vector<IterationWeights>& grads, int step, double lr, const AdamConfig& cfg) {
    if (step < 1) throw ConfigError("Adam step must be >= 1");
    if (grads.size() != weights_.size()) throw ConfigError("gradient count does not match network depth");
    const double c1 = 1.0 - std::pow(cfg.beta1, step);
    const double c2 = 1.0 - std::pow(cfg.beta2, step);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        auto& w = weights_[l].values();
        auto& m = first_moment_[l].values();
        auto& v = second_moment_[l].values();
        const auto& gr = grads[l].values();
        for (int i = 0; i < IterationWeights::kSize; ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gr[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gr[i] * gr[i];
            w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
        }
    }
}

void adam_update(MStepNet& net, const std::vector<IterationWeights>& grads, int step, double lr, const AdamConfig& cfg) {
    net.adam_update(grads, step, lr, cfg);
}

void save_checkpoint(const MStepNet& net, const std::filesystem::path& path) {
    detail::BinaryWriter w(path);
    w.put_bytes(kMagic, sizeof kMagic);
    w.put(kVersion);
    w.put(net.config_hash);
    w.put(static_cast<std::uint32_t>(net.grid_angular()));
    w.put(static_cast<std::uint32_t>(net.grid_delay()));
    w.put(static_cast<std::uint32_t>(net.feature_kind()));
    w.put(static_cast<std::uint32_t>(net.depth()));
    w.put(static_cast<std::uint32_t>(net.epochs_trained));
    w.put(net.final_val_loss);
    for (int l = 0; l < net.depth(); ++l)
        for (double v : net.weights(l).values()) w.put(v);
    w.put_bytes(kTrailer, sizeof kTrailer);
    w.finish();
}

MStepNet load_checkpoint(const std::filesystem::path& path, const SystemConfig& cfg) {
    detail::BinaryReader r(path);
    r.expect_bytes(kMagic, sizeof kMagic, "magic");
    if (r.get<std::uint32_t>() != kVersion) throw IoError("unsupported checkpoint version in " + path.string());
    auto hash = r.get<std::uint64_t>();
    if (hash != config_hash(cfg)) throw IoError("checkpoint " + path.string() + " was trained under a different config");
    auto ga = r.get<std::uint32_t>();
    auto gd = r.get<std::uint32_t>();
    auto kind = r.get<std::uint32_t>();
    auto depth = r.get<std::uint32_t>();
    if (ga != static_cast<std::uint32_t>(cfg.grid_angular) || gd != static_cast<std::uint32_t>(cfg.grid_delay) || kind > 1)
        throw IoError("checkpoint header inconsistent with config: " + path.string());
    MStepNet net(static_cast<int>(ga), static_cast<int>(gd), static_cast<int>(depth), static_cast<FeatureKind>(kind));
    net.config_hash = hash;
    net.epochs_trained = static_cast<int>(r.get<std::uint32_t>());
    net.final_val_loss = r.get<double>();
    for (std::uint32_t l = 0; l < depth; ++l)
        for (double& v : net.weights(static_cast<int>(l)).values()) v = r.get<double>();
    r.expect_bytes(kTrailer, sizeof kTrailer, "trailer");
    if (!r.at_end()) throw IoError("trailing bytes after checkpoint: " + path.string());
    return net;
}

}  // namespace adsbl
