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

#include "adsbl/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace adsbl {

void TrainConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string("invalid training config: ") + what);
    };
    require(batch_size >= 1, "batch_size >= 1");
    require(lr_patience >= 1, "lr_patience >= 1");
    require(early_stop_patience >= 1, "early_stop_patience >= 1");
    require(max_epochs >= 1, "max_epochs >= 1");
    require(depth >= 2, "depth >= 2");
    require(learning_rate > 0.0, "learning_rate > 0");
    require(lr_decay_factor > 0.0 && lr_decay_factor < 1.0, "0 < lr_decay_factor < 1");
    require(gamma_floor >= 0.0, "gamma_floor >= 0");
}

std::vector<ChannelRealization> generate_channels(const SystemConfig& cfg, int count, const RngStreams& streams,
                                                  std::string_view stream_name) {
    if (count < 0) throw ConfigError("sample count must be >= 0");
    std::vector<ChannelRealization> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        auto rng = streams.stream(stream_name, static_cast<std::uint64_t>(i));
        out.push_back(build_channel(cfg, draw_paths(cfg, rng)));
    }
    return out;
}

Splits generate_splits(const SystemConfig& cfg, const SplitSizes& sizes, const RngStreams& streams) {
    if (sizes.train < 1 || sizes.val < 1 || sizes.test < 1) throw ConfigError("split sizes must be positive");
    cfg.validate();
    Splits s;
    s.train = {Split::train, cfg, generate_channels(cfg, sizes.train, streams, "channel-train")};
    s.val = {Split::val, cfg, generate_channels(cfg, sizes.val, streams, "channel-val")};
    s.test = {Split::test, cfg, generate_channels(cfg, sizes.test, streams, "channel-test")};
    return s;
}

Problem make_problem(const SystemConfig& cfg, AngularMode mode) {
    cfg.validate();
    RngStreams streams(cfg.rng_seed);
    auto rng = streams.stream("pilot");
    Problem p;
    p.cfg = cfg;
    p.combiner = draw_combiner(cfg, rng);
    p.dicts = build_dictionaries(cfg, mode);
    p.op = assemble_operator(cfg, p.combiner, p.dicts);
    return p;
}

std::vector<PreparedSample> prepare_samples(const Problem& problem, const Dataset& ds, LossDomain loss) {
    std::vector<PreparedSample> out;
    out.reserve(ds.samples.size());
    std::optional<DictionaryProjector> projector;
    if (loss == LossDomain::sparse) projector.emplace(problem.dicts);
    for (const auto& s : ds.samples) {
        PreparedSample p;
        p.h = s.H;
        p.noiseless = noiseless_measurement(problem.combiner, s.H);
        p.energy = s.H.squaredNorm();
        if (!(p.energy > 0.0)) throw ConfigError("training sample with zero channel energy");
        if (projector) p.label = projector->project(s.H);
        out.push_back(std::move(p));
    }
    return out;
}

double estimate_loss(const Problem& problem, const PreparedSample& sample, const CVec& x_hat, LossDomain loss) {
    if (loss == LossDomain::channel)
        return (reconstruct_channel(problem.dicts, x_hat) - sample.h).squaredNorm() / sample.energy;
    if (sample.label.size() != x_hat.size()) throw ConfigError("sample has no sparse label");
    return (x_hat - sample.label).squaredNorm();
}

namespace {

struct IterationCache {
    AmpCache amp;
    ExactEStepCache exact;
    MStepCache mstep;
    CVec mean;                     // mean^l, input of the l-th M-step
    std::vector<char> floor_pass;  // 1 where the gamma floor was inactive
};

}  // namespace

double unfolded_loss(const MStepNet& net, int depth, const Problem& problem, const PreparedSample& sample,
                     const Observation& obs, const TrainConfig& tc, std::vector<IterationWeights>* grads) {
    const auto& op = problem.op;
    const double noise_var = problem.cfg.noise_var;
    const int ga = net.grid_angular(), gd = net.grid_delay();
    if (depth < 1 || depth > net.depth()) throw ConfigError("unfolded depth outside network depth");

    std::vector<IterationCache> caches(grads ? depth : 0);
    SblState st = init_state(op.cols(), op.rows());
    for (int l = 1; l <= depth; ++l) {
        IterationCache* c = grads ? &caches[l - 1] : nullptr;
        if (tc.e_step == EStepKind::amp) {
            AmpOutput out = amp_e_step(op.transformed, op.transformed_sq, obs.r, noise_var, st, l, c ? &c->amp : nullptr);
            st.mean = std::move(out.mean);
            st.variance = std::move(out.variance);
            st.residual = std::move(out.residual);
        } else {
            Posterior post = exact_e_step(op.phi, obs.y, noise_var, st.gamma, c ? &c->exact : nullptr);
            st.mean = std::move(post.mean);
            st.variance = std::move(post.variance);
        }
        // The last iteration's M-step does not reach the estimate.
        if (l == depth) break;
        if (c) c->mean = st.mean;
        FeatureTensor f = build_features(st.mean, st.variance, ga, gd, net.feature_kind());
        RVec gamma = mstep_forward(net.weights(l - 1), f, st.gamma, c ? &c->mstep : nullptr);
        if (tc.gamma_floor > 0.0) {
            if (c) c->floor_pass.resize(gamma.size());
            for (Eigen::Index i = 0; i < gamma.size(); ++i) {
                bool pass = gamma[i] >= tc.gamma_floor;
                if (c) c->floor_pass[i] = pass;
                if (!pass) gamma[i] = tc.gamma_floor;
            }
        }
        if (!gamma.allFinite()) throw DivergenceError(l, "non-finite variance parameters");
        st.gamma = std::move(gamma);
    }

    double loss;
    CVec grad_mean;
    if (tc.loss == LossDomain::channel) {
        CMat err = reconstruct_channel(problem.dicts, st.mean) - sample.h;
        loss = err.squaredNorm() / sample.energy;
        if (grads) grad_mean = reconstruct_adjoint(problem.dicts, err) * (2.0 / sample.energy);
    } else {
        CVec err = st.mean - sample.label;
        loss = err.squaredNorm();
        if (grads) grad_mean = 2.0 * err;
    }
    if (!std::isfinite(loss)) throw DivergenceError(depth, "non-finite loss");
    if (!grads) return loss;

    grads->assign(net.depth(), IterationWeights{});
    const Eigen::Index g = op.cols();
    RVec grad_variance = RVec::Zero(g);
    CVec grad_residual = CVec::Zero(op.rows());
    RVec grad_gamma = RVec::Zero(g);  // gradient on gamma^l, l = current iteration
    for (int l = depth; l >= 1; --l) {
        IterationCache& c = caches[l - 1];
        if (l < depth) {
            if (tc.gamma_floor > 0.0)
                for (Eigen::Index i = 0; i < g; ++i)
                    if (!c.floor_pass[i]) grad_gamma[i] = 0.0;
            MStepGradients mg = mstep_backward(net.weights(l - 1), c.mstep, grad_gamma);
            (*grads)[l - 1].add_scaled(mg.weights, 1.0);
            CVec gm;
            RVec gv;
            features_backward(c.mean, mg.features, net.feature_kind(), gm, gv);
            grad_mean += gm;
            grad_variance += gv;
            grad_gamma = std::move(mg.gamma_prev);
        } else {
            grad_gamma.setZero();
        }
        if (l == 1) break;  // gamma^0, mean^0, ... are constants
        if (tc.e_step == EStepKind::amp) {
            AmpGradients ag = amp_e_step_backward(op.transformed, op.transformed_sq, c.amp, grad_mean, grad_variance,
                                                  grad_residual);
            grad_gamma += ag.gamma;
            if (tc.through_state) {
                grad_mean = std::move(ag.mean);
                grad_variance = std::move(ag.variance);
                grad_residual = std::move(ag.residual);
            } else {
                grad_mean.setZero();
                grad_variance.setZero();
                grad_residual.setZero();
            }
        } else {
            grad_gamma += exact_e_step_backward(c.exact, grad_mean, grad_variance);
            grad_mean.setZero();
            grad_variance.setZero();
        }
    }
    return loss;
}

}  // namespace adsbl

namespace adsbl {

namespace {

std::uint64_t noise_index(int depth, int epoch, int batch, int position) {
    return splitmix64((static_cast<std::uint64_t>(depth) << 48) ^ (static_cast<std::uint64_t>(epoch) << 32) ^
                      (static_cast<std::uint64_t>(batch) << 16) ^ static_cast<std::uint64_t>(position));
}

}  // namespace

std::mt19937_64 training_noise_rng(const RngStreams& streams, int depth, int epoch, int batch, int position) {
    return streams.stream("train-noise", noise_index(depth, epoch, batch, position));
}

double validate(const MStepNet& net, int depth, const Problem& problem, const std::vector<PreparedSample>& samples,
                const TrainConfig& tc, std::uint64_t noise_seed) {
    if (samples.empty()) throw ConfigError("validation split is empty");
    RngStreams streams(noise_seed);
    std::vector<double> losses(samples.size());
    parallel_for(samples.size(), tc.threads, [&](std::size_t i) {
        auto rng = streams.stream("eval-noise", i);
        Observation obs = simulate_observation(problem.cfg, problem.combiner, problem.op, samples[i].noiseless, rng);
        try {
            losses[i] = unfolded_loss(net, depth, problem, samples[i], obs, tc, nullptr);
        } catch (const DivergenceError&) {
            losses[i] = std::numeric_limits<double>::infinity();
        } catch (const NumericalError&) {
            losses[i] = std::numeric_limits<double>::infinity();
        }
    });
    return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

std::pair<MStepNet, TrainReport> train_layerwise(const TrainConfig& tc, const Problem& problem, const Dataset& train,
                                                 const Dataset& val, const Dataset* test, const ProgressFn& progress,
                                                 std::optional<MStepNet> resume) {
    tc.validate();
    const auto& cfg = problem.cfg;
    if (train.samples.empty() || val.samples.empty()) throw ConfigError("training and validation splits must be non-empty");
    RngStreams streams(cfg.rng_seed);

    MStepNet net;
    int start_depth = 2;
    if (resume) {
        net = std::move(*resume);
        if (net.grid_angular() != cfg.grid_angular || net.grid_delay() != cfg.grid_delay)
            throw ConfigError("resumed network grid does not match config");
        if (net.depth() < 2) throw ConfigError("resumed network must have depth >= 2");
        start_depth = net.depth() + 1;
    } else {
        net = MStepNet(cfg.grid_angular, cfg.grid_delay, 2, tc.features);
        auto init_rng = streams.stream("net-init");
        net.he_init(init_rng);
    }
    net.config_hash = config_hash(cfg);

    const auto train_samples = prepare_samples(problem, train, tc.loss);
    const auto val_samples = prepare_samples(problem, val, tc.loss);
    const std::uint64_t val_seed = splitmix64(cfg.rng_seed ^ 0x76616cULL);

    TrainReport report;
    for (int depth = start_depth; depth <= tc.depth; ++depth) {
        if (depth > net.depth()) {
            // The newly active iteration and the new (inert) last iteration
            // both start from the last trained iteration.
            const int last_trained = net.depth() - 2;
            net.weights(net.depth() - 1) = net.weights(last_trained);
            net.append_copy(last_trained);
        }
        net.reset_moments();

        StageReport stage;
        stage.depth = depth;
        MStepNet best = net;
        double lr = tc.learning_rate;
        int since_improve_lr = 0, since_improve_stop = 0, step = 0;
        std::vector<std::size_t> order(train_samples.size());

        for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
            std::iota(order.begin(), order.end(), 0);
            auto shuffle_rng = streams.stream("shuffle", noise_index(depth, epoch, 0, 0));
            std::shuffle(order.begin(), order.end(), shuffle_rng);

            double loss_sum = 0.0;
            std::size_t loss_count = 0;
            int diverged = 0;
            const int n_batches = static_cast<int>((order.size() + tc.batch_size - 1) / tc.batch_size);
            for (int b = 0; b < n_batches; ++b) {
                const std::size_t lo = static_cast<std::size_t>(b) * tc.batch_size;
                const std::size_t hi = std::min(order.size(), lo + tc.batch_size);
                const std::size_t n = hi - lo;
                std::vector<double> losses(n, std::numeric_limits<double>::quiet_NaN());
                std::vector<std::vector<IterationWeights>> sample_grads(n);
                parallel_for(n, tc.threads, [&](std::size_t j) {
                    const auto& sample = train_samples[order[lo + j]];
                    auto rng = training_noise_rng(streams, depth, epoch, b, static_cast<int>(j));
                    Observation obs = simulate_observation(cfg, problem.combiner, problem.op, sample.noiseless, rng);
                    try {
                        losses[j] = unfolded_loss(net, depth, problem, sample, obs, tc, &sample_grads[j]);
                    } catch (const NumericalError&) {
                        sample_grads[j].clear();
                    }
                });
                std::vector<IterationWeights> grad(net.depth());
                std::size_t used = 0;
                for (std::size_t j = 0; j < n; ++j) {
                    if (sample_grads[j].empty() || !std::isfinite(losses[j])) {
                        ++diverged;
                        continue;
                    }
                    bool finite = true;
                    for (const auto& w : sample_grads[j]) finite = finite && w.all_finite();
                    if (!finite) {
                        ++diverged;
                        continue;
                    }
                    for (int l = 0; l < net.depth(); ++l) grad[l].add_scaled(sample_grads[j][l], 1.0);
                    loss_sum += losses[j];
                    ++loss_count;
                    ++used;
                }
                if (used == 0) continue;
                for (auto& w : grad)
                    for (double& v : w.values()) v /= static_cast<double>(used);
                net.adam_update(grad, ++step, lr, tc.adam);
            }

            EpochRecord rec;
            rec.depth = depth;
            rec.epoch = epoch;
            rec.lr = lr;
            rec.diverged = diverged;
            rec.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count)
                                        : std::numeric_limits<double>::quiet_NaN();
            if (loss_count == 0) {
                stage.aborted = true;
                stage.epochs.push_back(rec);
                if (progress) progress(rec);
                break;
            }
            rec.val_loss = validate(net, depth, problem, val_samples, tc, val_seed);
            if (rec.val_loss < stage.best_val_loss) {
                rec.improved = true;
                stage.best_val_loss = rec.val_loss;
                stage.best_epoch = epoch;
                best = net;
                since_improve_lr = 0;
                since_improve_stop = 0;
            } else {
                ++since_improve_lr;
                ++since_improve_stop;
                if (since_improve_lr >= tc.lr_patience) {
                    lr *= tc.lr_decay_factor;
                    rec.lr_decayed = true;
                    since_improve_lr = 0;
                }
            }
            stage.epochs.push_back(rec);
            if (progress) progress(rec);
            if (since_improve_stop >= tc.early_stop_patience) {
                stage.early_stopped = true;
                break;
            }
        }
        if (stage.best_epoch == 0 && stage.aborted)
            throw NumericalError("training at depth " + std::to_string(depth) +
                                 " produced no finite loss; every sample diverged");
        if (stage.best_epoch > 0) net = best;
        net.epochs_trained += static_cast<int>(stage.epochs.size());
        net.final_val_loss = stage.best_val_loss;
        report.stages.push_back(std::move(stage));
    }

    if (test && !test->samples.empty()) {
        TrainConfig eval_cfg = tc;
        eval_cfg.loss = LossDomain::channel;
        const auto test_samples = prepare_samples(problem, *test, LossDomain::channel);
        const double loss = validate(net, tc.depth, problem, test_samples, eval_cfg,
                                     splitmix64(cfg.rng_seed ^ 0x74657374ULL));
        report.test_nmse_db = std::isfinite(loss) ? std::max(-120.0, 10.0 * std::log10(loss)) : loss;
    }
    return {std::move(net), std::move(report)};
}

void write_report_csv(const TrainReport& report, const std::filesystem::path& path, std::uint64_t cfg_hash,
                      std::uint64_t seed) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "# config_hash=" << std::hex << std::setw(16) << std::setfill('0') << cfg_hash << std::dec
        << std::setfill(' ') << " seed=" << seed << '\n';
    out << "depth,epoch,train_loss,val_loss,lr,improved,lr_decayed,diverged\n" << std::setprecision(10);
    for (const auto& stage : report.stages)
        for (const auto& e : stage.epochs)
            out << e.depth << ',' << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.lr << ','
                << e.improved << ',' << e.lr_decayed << ',' << e.diverged << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace adsbl
