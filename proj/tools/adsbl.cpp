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
//
// adsbl: data generation, training, evaluation, sweeps and complexity
// reports for angular-delay SBL channel estimation.
//
// Exit codes: 0 ok, 1 usage or configuration error, 2 numerical failure,
// 3 file error.

#include "adsbl/dataset.hpp"
#include "adsbl/evaluation.hpp"
#include "adsbl/selftest.hpp"
#include "adsbl/training.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using namespace adsbl;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitIo = 3;

std::string hex(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

// FNV-1a over the file bytes; only used to make manifests comparable.
std::uint64_t file_digest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

// Config sources, lowest precedence first: defaults, --config file, one flag
// per config key.
struct ConfigSource {
    std::string file;
    std::map<std::string, std::string> flags;

    void attach(CLI::App& app) {
        app.add_option("--config", file, "key = value config file")->check(CLI::ExistingFile);
        for (const auto& key : config_keys()) {
            auto* opt = app.add_option_function<std::string>(
                "--" + key, [this, key](const std::string& v) { flags[key] = v; }, "config key " + key);
            opt->group("Config keys");
        }
    }

    SystemConfig resolve(const std::string& fallback_file = {}) const {
        SystemConfig cfg = default_config();
        const std::string& path = file.empty() ? fallback_file : file;
        if (!path.empty()) cfg = load_config_file(path, cfg);
        for (const auto& [key, value] : flags) apply_config_key(cfg, key, value);
        cfg.validate();
        return cfg;
    }
};

std::vector<double> parse_points(const std::string& text) {
    std::vector<double> points;
    auto colon = text.find(':');
    if (colon != std::string::npos) {
        auto second = text.find(':', colon + 1);
        if (second == std::string::npos) throw ConfigError("points range must be start:stop:step");
        double start = std::stod(text.substr(0, colon));
        double stop = std::stod(text.substr(colon + 1, second - colon - 1));
        double step = std::stod(text.substr(second + 1));
        if (!(step > 0.0) || stop < start) throw ConfigError("points range needs step > 0 and stop >= start");
        for (int i = 0; start + i * step <= stop + 1e-9 * step; ++i) points.push_back(start + i * step);
    } else {
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) points.push_back(std::stod(item));
    }
    if (points.empty()) throw ConfigError("no sweep points given");
    return points;
}

std::string point_label(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

SplitSizes sizes_for(const std::string& scale) {
    if (scale == "full") return SplitSizes::full();
    if (scale == "desk") return SplitSizes::desk();
    throw ConfigError("unknown scale: " + scale);
}

// ---- gen-data -------------------------------------------------------------

struct GenDataArgs {
    std::string out;
    std::string scale = "full";
    int train = -1, val = -1, test = -1;
    bool csv = false;
};

void print_energy(const Dataset& ds) {
    double sum = 0.0, sum_sq = 0.0;
    for (const auto& s : ds.samples) {
        double e = s.H.squaredNorm() / s.H.cols();
        sum += e;
        sum_sq += e * e;
    }
    double n = static_cast<double>(ds.samples.size());
    double mean = n > 0 ? sum / n : 0.0;
    double sd = n > 1 ? std::sqrt(std::max(0.0, (sum_sq - n * mean * mean) / (n - 1))) : 0.0;
    std::cout << to_string(ds.split) << ": " << ds.samples.size() << " samples, |H|_F^2/K mean " << mean << " sd "
              << sd << '\n';
}

int run_gen_data(const ConfigSource& src, const GenDataArgs& args) {
    SystemConfig cfg = src.resolve();
    SplitSizes sizes = sizes_for(args.scale);
    if (args.train >= 0) sizes.train = args.train;
    if (args.val >= 0) sizes.val = args.val;
    if (args.test >= 0) sizes.test = args.test;

    fs::path out(args.out);
    fs::create_directories(out);
    Splits splits = generate_splits(cfg, sizes, RngStreams(cfg.rng_seed));
    std::ofstream manifest(out / "manifest.txt");
    if (!manifest) throw IoError("cannot write manifest in " + out.string());
    {
        std::ofstream conf(out / "config.txt");
        conf << "# config_hash=" << hex(config_hash(cfg)) << " seed=" << cfg.rng_seed << '\n' << to_config_text(cfg);
        if (!conf) throw IoError("cannot write config in " + out.string());
    }
    manifest << "config_hash=" << hex(config_hash(cfg)) << "\nseed=" << cfg.rng_seed << '\n';
    for (const Dataset* ds : {&splits.train, &splits.val, &splits.test}) {
        std::string name = to_string(ds->split);
        save_dataset(*ds, out / (name + ".bin"));
        if (args.csv) export_dataset_csv(*ds, out / (name + ".csv"));
        manifest << name << ".bin samples=" << ds->samples.size() << " fnv1a64=" << hex(file_digest(out / (name + ".bin")))
                 << '\n';
        print_energy(*ds);
    }
    if (!manifest) throw IoError("manifest write failed");
    std::cout << "config_hash " << hex(config_hash(cfg)) << " -> " << out.string() << '\n';
    return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string out;
    int depth = 6;
    std::string e_step = "amp";
    std::string loss = "channel";
    bool truncated = false;
    bool resume = false;
    int epochs = 200;
    int batch = 128;
    double lr = 1e-3;
};

int run_train(const ConfigSource& src, const TrainArgs& args, int threads) {
    fs::path data(args.data);
    SystemConfig cfg = src.resolve(fs::exists(data / "config.txt") ? (data / "config.txt").string() : "");
    TrainConfig tc;
    tc.depth = args.depth;
    tc.e_step = args.e_step == "exact" ? EStepKind::exact : EStepKind::amp;
    tc.loss = args.loss == "sparse" ? LossDomain::sparse : LossDomain::channel;
    tc.through_state = !args.truncated;
    tc.max_epochs = args.epochs;
    tc.batch_size = args.batch;
    tc.learning_rate = args.lr;
    tc.threads = threads;
    tc.validate();

    Dataset train = load_dataset(data / "train.bin", cfg);
    Dataset val = load_dataset(data / "val.bin", cfg);
    std::optional<Dataset> test;
    if (fs::exists(data / "test.bin")) test = load_dataset(data / "test.bin", cfg);

    fs::path out(args.out);
    fs::create_directories(out);
    std::optional<MStepNet> resume;
    if (args.resume && fs::exists(out / "net.ckpt")) {
        resume = load_checkpoint(out / "net.ckpt", cfg);
        std::cout << "resuming from depth " << resume->depth() << '\n';
    }

    Problem problem = make_problem(cfg);
    auto progress = [](const EpochRecord& e) {
        std::cout << "depth " << e.depth << " epoch " << e.epoch << " train_loss " << e.train_loss << " val_loss "
                  << e.val_loss << " lr " << e.lr << (e.diverged ? " diverged " + std::to_string(e.diverged) : "")
                  << std::endl;
    };
    auto [net, report] = train_layerwise(tc, problem, train, val, test ? &*test : nullptr, progress, resume);
    save_checkpoint(net, out / "net.ckpt");
    write_report_csv(report, out / "report.csv", config_hash(cfg), cfg.rng_seed);
    std::cout << "stages " << report.stages.size() << ", depth " << net.depth() << ", val_loss "
              << net.final_val_loss;
    if (test) std::cout << ", test NMSE " << report.test_nmse_db << " dB";
    std::cout << '\n';
    for (const auto& stage : report.stages)
        if (stage.aborted) throw NumericalError("stage at depth " + std::to_string(stage.depth) + " diverged");
    return 0;
}

// ---- evaluate / sweep -----------------------------------------------------

struct EvalArgs {
    std::vector<std::string> algos{"sbl", "amp-sbl"};
    std::string net;
    std::string data;
    std::string out;
    int samples = 200;
    int iterations = -1;
};

void check_algo(const std::string& algo) {
    const std::vector<std::string> known{"sbl", "amp-sbl", "sbl-unfolding", "amp-sbl-unfolding"};
    if (std::find(known.begin(), known.end(), algo) == known.end()) throw ConfigError("unknown estimator: " + algo);
}

std::vector<AlgoRequest> requests(const std::vector<std::string>& algos, int iterations, const MStepNet* net) {
    std::vector<AlgoRequest> reqs;
    for (const auto& a : algos) {
        check_algo(a);
        if (is_learned(a)) {
            if (!net) throw ConfigError(a + " needs a trained net (--net)");
            reqs.push_back({a, net->depth(), net});
        } else {
            reqs.push_back({a, iterations, nullptr});
        }
    }
    return reqs;
}

bool any_learned(const std::vector<std::string>& algos) {
    return std::any_of(algos.begin(), algos.end(), [](const std::string& a) { return is_learned(a); });
}

int run_evaluate(const ConfigSource& src, const EvalArgs& args, int threads) {
    SystemConfig cfg = src.resolve();
    std::optional<MStepNet> net;
    if (!args.net.empty()) net = load_checkpoint(args.net, cfg);
    int iterations = args.iterations > 0 ? args.iterations : cfg.n_iterations;
    auto reqs = requests(args.algos, iterations, net ? &*net : nullptr);

    std::vector<ChannelRealization> channels;
    if (!args.data.empty()) {
        Dataset test = load_dataset(fs::path(args.data) / "test.bin", cfg);
        if (static_cast<int>(test.samples.size()) < args.samples)
            throw ConfigError("test split holds only " + std::to_string(test.samples.size()) + " samples");
        channels.assign(test.samples.begin(), test.samples.begin() + args.samples);
    } else {
        channels = generate_channels(cfg, args.samples, RngStreams(cfg.rng_seed), "channel-eval");
    }
    Problem problem = make_problem(cfg);
    auto scores = evaluate_algorithms(problem, channels, reqs, splitmix64(cfg.rng_seed ^ 0x6576616cULL), threads);
    for (const auto& s : scores)
        std::cout << s.algo << " L=" << s.iterations << " nmse_db=" << s.nmse_db << " fail_rate=" << s.fail_rate()
                  << " flops=" << s.flops_total << " samples=" << s.n_samples << '\n';
    if (!args.out.empty()) write_tradeoff_csv(scores, args.out, config_hash(cfg), cfg.rng_seed);
    for (const auto& s : scores)
        if (s.failures > 0 && s.algo != "amp-sbl")
            throw NumericalError(s.algo + " diverged on " + std::to_string(s.failures) + " samples");
    return 0;
}

struct SweepArgs {
    std::string axis = "snr";
    std::string points = "0:20:5";
    std::vector<std::string> algos{"sbl", "amp-sbl"};
    std::string net_dir;
    std::string out = "sweep.csv";
    int samples = 200;
    int iterations = -1;
};

int run_sweep_cmd(const ConfigSource& src, const SweepArgs& args, int threads) {
    SystemConfig cfg = src.resolve();
    if (args.axis != "snr" && args.axis != "q") throw ConfigError("axis must be snr or q");
    std::vector<double> points = parse_points(args.points);
    int iterations = args.iterations > 0 ? args.iterations : cfg.n_iterations;

    // One net per point, trained under that point's config, stored as
    // <net-dir>/<axis>-<value>.ckpt.
    std::vector<MStepNet> storage;
    storage.reserve(points.size());
    std::map<double, const MStepNet*> nets;
    if (any_learned(args.algos)) {
        if (args.net_dir.empty()) throw ConfigError("learned algorithms need --net-dir");
        for (double p : points) {
            SystemConfig pc = cfg;
            if (args.axis == "snr") pc.set_snr_db(p);
            else pc.n_uses = static_cast<int>(std::lround(p));
            storage.push_back(load_checkpoint(fs::path(args.net_dir) / (args.axis + "-" + point_label(p) + ".ckpt"), pc));
            nets[p] = &storage.back();
        }
    }
    std::vector<AlgoRequest> reqs;
    for (const auto& a : args.algos) {
        check_algo(a);
        reqs.push_back({a, iterations, nullptr});
    }
    SweepResult result = run_sweep(args.axis, points, reqs, cfg, args.samples, nets, threads);
    write_sweep_csv(result, args.out, config_hash(cfg), cfg.rng_seed);
    for (const auto& row : result.rows)
        std::cout << row.axis << '=' << row.value << ' ' << row.score.algo << " nmse_db=" << row.score.nmse_db
                  << " fail_rate=" << row.score.fail_rate() << '\n';
    std::cout << "wrote " << args.out << '\n';
    return 0;
}

// ---- flops ----------------------------------------------------------------

int run_flops(const ConfigSource& src, bool defaults, const std::string& out_path) {
    SystemConfig cfg = defaults ? default_config() : src.resolve();
    FlopsDims d = FlopsDims::from(cfg);
    std::ostringstream table;
    table << "# config_hash=" << hex(config_hash(cfg)) << " seed=" << cfg.rng_seed << '\n'
          << "# K=" << d.k << " M=" << d.m << " G=" << d.g << " G_A=" << d.g_angular << " N=" << d.n << '\n'
          << "algo,flops_per_iteration\n";
    for (const auto& a : flops_algorithms()) table << a << ',' << flops_per_iteration(a, cfg) << '\n';
    table << "reconstruction-af," << reconstruction_flops(EstimatorFamily::angular_frequency, cfg) << '\n'
          << "reconstruction-ad," << reconstruction_flops(EstimatorFamily::angular_delay, cfg) << '\n';
    std::cout << table.str();
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << table.str();
        if (!out) throw IoError("cannot write " + out_path);
    }
    return 0;
}

int run_selftest_cmd(std::uint64_t seed, int threads) {
    int failed = 0;
    for (const auto& r : run_selftest(seed, threads)) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  " << r.detail << '\n';
        failed += !r.passed;
    }
    std::cout << (failed ? std::to_string(failed) + " check(s) failed" : "all checks passed") << '\n';
    return failed ? kExitNumerical : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Angular-delay SBL channel estimation: data, training, evaluation"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);

    auto* gen = app.add_subcommand("gen-data", "generate train/val/test channel datasets");
    ConfigSource gen_src;
    gen_src.attach(*gen);
    GenDataArgs gen_args;
    gen->add_option("--out", gen_args.out, "output directory")->required();
    gen->add_option("--scale", gen_args.scale, "split sizes: full 8000/1000/1000, desk 2000/250/250")
        ->check(CLI::IsMember({"full", "desk"}));
    gen->add_option("--train-size", gen_args.train)->check(CLI::NonNegativeNumber);
    gen->add_option("--val-size", gen_args.val)->check(CLI::NonNegativeNumber);
    gen->add_option("--test-size", gen_args.test)->check(CLI::NonNegativeNumber);
    gen->add_flag("--csv", gen_args.csv, "also export each split as CSV");

    auto* train = app.add_subcommand("train", "layer-wise training of the learned M-step");
    ConfigSource train_src;
    train_src.attach(*train);
    TrainArgs train_args;
    train->add_option("--data", train_args.data, "directory written by gen-data")->required();
    train->add_option("--out", train_args.out, "output directory for net.ckpt and report.csv")->required();
    train->add_option("--depth", train_args.depth, "unrolled iterations L (>= 2)");
    train->add_option("--e-step", train_args.e_step)->check(CLI::IsMember({"amp", "exact"}));
    train->add_option("--loss", train_args.loss)->check(CLI::IsMember({"channel", "sparse"}));
    train->add_flag("--truncated", train_args.truncated, "stop gradients through the carried E-step state");
    train->add_flag("--resume", train_args.resume, "continue from <out>/net.ckpt, appending iterations");
    train->add_option("--max-epochs", train_args.epochs, "epoch cap per stage");
    train->add_option("--batch-size", train_args.batch);
    train->add_option("--lr", train_args.lr, "initial Adam learning rate");

    auto* eval = app.add_subcommand("evaluate", "NMSE of estimators on paired samples");
    ConfigSource eval_src;
    eval_src.attach(*eval);
    EvalArgs eval_args;
    eval->add_option("--algos", eval_args.algos, "sbl, amp-sbl, sbl-unfolding, amp-sbl-unfolding")->delimiter(',');
    eval->add_option("--net", eval_args.net, "checkpoint for learned algorithms");
    eval->add_option("--data", eval_args.data, "use test.bin from this directory instead of fresh channels");
    eval->add_option("--samples", eval_args.samples)->check(CLI::PositiveNumber);
    eval->add_option("--iterations", eval_args.iterations, "iterations of classic estimators");
    eval->add_option("--out", eval_args.out, "tradeoff CSV");

    auto* sweep = app.add_subcommand("sweep", "NMSE versus SNR or Q");
    ConfigSource sweep_src;
    sweep_src.attach(*sweep);
    SweepArgs sweep_args;
    sweep->add_option("--axis", sweep_args.axis)->check(CLI::IsMember({"snr", "q"}));
    sweep->add_option("--points", sweep_args.points, "start:stop:step or a comma list");
    sweep->add_option("--algos", sweep_args.algos)->delimiter(',');
    sweep->add_option("--net-dir", sweep_args.net_dir, "holds <axis>-<value>.ckpt per point");
    sweep->add_option("--samples", sweep_args.samples)->check(CLI::PositiveNumber);
    sweep->add_option("--iterations", sweep_args.iterations);
    sweep->add_option("--out", sweep_args.out, "sweep CSV");

    auto* flops = app.add_subcommand("flops", "per-iteration and reconstruction FLOPs");
    ConfigSource flops_src;
    flops_src.attach(*flops);
    bool flops_defaults = false;
    std::string flops_out;
    flops->add_flag("--defaults", flops_defaults, "ignore config sources and use the default system");
    flops->add_option("--out", flops_out, "also write the table to this file");

    auto* self = app.add_subcommand("selftest", "run the built-in property checks");
    std::uint64_t self_seed = 7;
    self->add_option("--seed", self_seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*gen) return run_gen_data(gen_src, gen_args);
        if (*train) return run_train(train_src, train_args, threads);
        if (*eval) return run_evaluate(eval_src, eval_args, threads);
        if (*sweep) return run_sweep_cmd(sweep_src, sweep_args, threads);
        if (*flops) return run_flops(flops_src, flops_defaults, flops_out);
        if (*self) return run_selftest_cmd(self_seed, threads);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kExitIo;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kExitIo;
    }
    return kExitUsage;
}
