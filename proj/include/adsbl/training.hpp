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

#ifndef ADSBL_TRAINING_HPP
#define ADSBL_TRAINING_HPP

#include "adsbl/dataset.hpp"
#include "adsbl/mstep_net.hpp"
#include "adsbl/sbl.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace adsbl {

// channel: mean |H_hat - H|_F^2 / |H|_F^2. sparse: mean |x_hat - x_ls|^2
// where x_ls is the ridge projection of H onto the dictionaries.
enum class LossDomain { channel, sparse };

struct TrainConfig {
    int batch_size = 128;
    double learning_rate = 1e-3;
    double lr_decay_factor = 0.1;
    int lr_patience = 4;
    int early_stop_patience = 10;
    int max_epochs = 200;
    int depth = 6;
    LossDomain loss = LossDomain::channel;
    EStepKind e_step = EStepKind::amp;
    // false: the carried E-step state (mean, variance, residual) is treated
    // as a constant, only gamma carries gradient between iterations.
    bool through_state = true;
    double gamma_floor = 1e-12;
    FeatureKind features = FeatureKind::squared_magnitude;
    AdamConfig adam;
    int threads = 0;

    void validate() const;
};

struct SplitSizes {
    int train = 2000;
    int val = 250;
    int test = 250;

    static SplitSizes full() { return {8000, 1000, 1000}; }
    static SplitSizes desk() { return {2000, 250, 250}; }
};

struct Splits {
    Dataset train;
    Dataset val;
    Dataset test;
};

// Channels only; each split draws from its own sub-stream, each sample from
// its own index within it.
Splits generate_splits(const SystemConfig& cfg, const SplitSizes& sizes, const RngStreams& streams);
std::vector<ChannelRealization> generate_channels(const SystemConfig& cfg, int count, const RngStreams& streams,
                                                  std::string_view stream_name);

// Combiner, operator and dictionaries shared by every sample of a run. The
// combiner comes from the "pilot" sub-stream, so a given seed and config
// always rebuild the same operator.
struct Problem {
    SystemConfig cfg;
    PilotCombiner combiner;
    DictionarySet dicts;
    MeasurementOperator op;
};

Problem make_problem(const SystemConfig& cfg, AngularMode mode = AngularMode::frequency_dependent);

// Channel sample with everything that does not depend on the noise draw.
struct PreparedSample {
    CMat h;
    CVec noiseless;
    CVec label;  // ridge projection, only filled for the sparse loss
    double energy = 0.0;
};

std::vector<PreparedSample> prepare_samples(const Problem& problem, const Dataset& ds, LossDomain loss);

// Loss of an estimate x_hat for one sample under the chosen domain.
double estimate_loss(const Problem& problem, const PreparedSample& sample, const CVec& x_hat, LossDomain loss);

// Noise stream of one training sample; distinct for every (depth, epoch,
// batch, position).
std::mt19937_64 training_noise_rng(const RngStreams& streams, int depth, int epoch, int batch, int position);

// Loss of one sample through the unrolled estimator, and its gradient with
// respect to every iteration's weights when `grads` is non-null.
double unfolded_loss(const MStepNet& net, int depth, const Problem& problem, const PreparedSample& sample,
                     const Observation& obs, const TrainConfig& tc, std::vector<IterationWeights>* grads);

// Mean loss over a split with noise drawn from a fixed per-sample stream.
// Infinite if any sample diverges.
double validate(const MStepNet& net, int depth, const Problem& problem, const std::vector<PreparedSample>& samples,
                const TrainConfig& tc, std::uint64_t noise_seed);

struct EpochRecord {
    int depth = 0;
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
    bool improved = false;
    bool lr_decayed = false;
    int diverged = 0;  // training samples dropped from this epoch's gradient
};

struct StageReport {
    int depth = 0;
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    bool early_stopped = false;
    bool aborted = false;  // an epoch produced no finite training loss
};

struct TrainReport {
    std::vector<StageReport> stages;
    double test_nmse_db = std::numeric_limits<double>::quiet_NaN();
};

using ProgressFn = std::function<void(const EpochRecord&)>;

// Layer-wise schedule: depth 2 from He init, then one iteration appended at a
// time (copying the last trained iteration) and the whole stack retrained,
// up to tc.depth. When `resume` holds a net of depth d, training continues
// with depth d + 1. Noise is redrawn per batch.
std::pair<MStepNet, TrainReport> train_layerwise(const TrainConfig& tc, const Problem& problem,
                                                 const Dataset& train, const Dataset& val,
                                                 const Dataset* test = nullptr,
                                                 const ProgressFn& progress = {},
                                                 std::optional<MStepNet> resume = std::nullopt);

// "# config_hash=<hex> seed=<n>" line, then
// depth,epoch,train_loss,val_loss,lr,improved,lr_decayed,diverged
void write_report_csv(const TrainReport& report, const std::filesystem::path& path, std::uint64_t cfg_hash,
                      std::uint64_t seed);

}  // namespace adsbl

#endif
