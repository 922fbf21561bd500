#include "ghostseg/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "ghostseg/text_format.hpp"

namespace ghostseg {

namespace {

/// Runs fn(i) for i in [0, n) on up to `workers` threads, statically striped.
template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
    const auto w = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n)));
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(w);
    for (unsigned t = 0; t < w; ++t)
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += w) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

ClassProportions compute_proportions(std::span<const std::uint64_t> counts, const Setup& setup) {
    if (counts.size() != setup.class_count()) throw std::invalid_argument("compute_proportions: count size mismatch");
    std::string missing;
    for (std::size_t c = 0; c < counts.size(); ++c)
        if (counts[c] == 0) missing += (missing.empty() ? "" : ", ") + std::string(train_class_name(setup.classes[c]));
    if (!missing.empty())
        throw std::invalid_argument("setup " + std::to_string(setup.id) + ": no training points for class(es) " +
                                    missing);
    ClassProportions p;
    p.counts.assign(counts.begin(), counts.end());
    const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}));
    for (auto c : counts) p.s.push_back(static_cast<double>(c) / total);
    return p;
}

ClassProportions compute_proportions(std::span<const Sample> samples, const Setup& setup) {
    std::vector<std::uint64_t> counts(setup.class_count(), 0);
    for (const auto& s : samples)
        for (Label l : s.labels) ++counts[static_cast<std::size_t>(remap_label(l, setup))];
    return compute_proportions(counts, setup);
}

void TrainConfig::validate() const {
    setup_by_id(setup);
    if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw std::invalid_argument("train: moment coefficients must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("train: epsilon must be > 0");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw std::invalid_argument("train: val_fraction must lie in (0, 1)");
    if (!(init_scale > 0.0)) throw std::invalid_argument("train: init_scale must be > 0");
}

NetworkConfig network_for(const TrainConfig& config, std::size_t channels) {
    NetworkConfig n = config.network;
    n.num_classes = setup_by_id(config.setup).class_count();
    n.fc[2] = n.num_classes;
    n.input_channels = channels;
    n.validate();
    return n;
}

ValSplit split_train_val(std::size_t n, double fraction, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("split_train_val: need at least 2 samples, got " + std::to_string(n));
    if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("split_train_val: fraction must lie in (0, 1)");
    auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(seed, 0x7a1));
    std::shuffle(idx.begin(), idx.end(), rng);
    ValSplit s;
    s.val.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.train.begin(), s.train.end());
    return s;
}

ValSplit split_train_val_by_recording(std::span<const Sample> samples, double fraction, std::uint64_t seed) {
    std::vector<std::string> ids;
    for (const auto& s : samples)
        if (std::find(ids.begin(), ids.end(), s.recording_id) == ids.end()) ids.push_back(s.recording_id);
    std::sort(ids.begin(), ids.end());
    const auto rec = split_train_val(ids.size(), fraction, seed);
    std::vector<bool> is_val(ids.size(), false);
    for (auto i : rec.val) is_val[i] = true;
    ValSplit out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto k = static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), samples[i].recording_id) -
                                                ids.begin());
        (is_val[k] ? out.val : out.train).push_back(i);
    }
    return out;
}

void TrainHistory::write(std::ostream& out) const {
    out << "epoch,train_loss,val_macro_f1,best\n";
    for (std::size_t e = 0; e < train_loss.size(); ++e)
        out << e + 1 << ',' << format_double(train_loss[e]) << ',' << format_double(val_macro_f1[e]) << ','
            << (static_cast<int>(e + 1) == best_epoch ? 1 : 0) << '\n';
}

ConfusionMatrix evaluate_samples(std::span<const Sample> samples, const NetworkParams& params, const Setup& setup,
                                 unsigned workers) {
    std::vector<ConfusionMatrix> parts(samples.size());
    parallel_for(samples.size(), workers, [&](std::size_t i) {
        const auto pred = predict(samples[i], params);
        parts[i] = confusion_matrix(pred, samples[i].labels, setup, samples[i].duplicate);
    });
    ConfusionMatrix total = confusion_matrix(std::span<const int>{}, std::span<const Label>{}, setup);
    for (const auto& p : parts) total += p;
    return total;
}

double validation_macro_f1(std::span<const Sample> samples, const NetworkParams& params, const Setup& setup,
                           unsigned workers) {
    const auto scores = class_scores(evaluate_samples(samples, params, setup, workers), setup);
    return macro_average(scores, &ClassScore::f1);
}

TrainResult train(std::span<const Sample> samples, const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    if (samples.empty()) throw std::invalid_argument("train: no samples");
    const auto& setup = setup_by_id(config.setup);
    const auto channels = samples.front().channels;

    TrainResult result;
    result.split = config.val_by_recording ? split_train_val_by_recording(samples, config.val_fraction, config.seed)
                                           : split_train_val(samples.size(), config.val_fraction, config.seed);
    std::vector<Sample> train_set, val_set;
    for (auto i : result.split.train) train_set.push_back(samples[i]);
    for (auto i : result.split.val) val_set.push_back(samples[i]);
    if (train_set.empty() || val_set.empty()) throw std::invalid_argument("train: empty train or validation split");

    result.proportions = compute_proportions(train_set, setup);
    result.weights = config.weighted ? ClassWeights::from_proportions(result.proportions.s)
                                     : ClassWeights::uniform(setup.class_count());
    std::vector<std::vector<int>> labels;
    for (const auto& s : train_set) labels.push_back(remap_labels(s.labels, setup));

    NetworkParams params(network_for(config, channels));
    params.init_uniform(derive_seed(config.seed, 0x1417), config.init_scale);
    NetworkParams m(params.config()), v(params.config()), grad(params.config());
    m.set_zero();
    v.set_zero();
    const std::size_t batch = config.batch_size;
    std::vector<NetworkParams> worker_grads(batch, grad);

    Rng shuffle_rng(derive_seed(config.seed, 0x5401));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    double best = -1.0;
    std::uint64_t step = 0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += batch) {
            const std::size_t bn = std::min(batch, order.size() - b0);
            double points = 0.0;
            for (std::size_t k = 0; k < bn; ++k) points += static_cast<double>(train_set[order[b0 + k]].size);
            std::vector<double> losses(bn, 0.0);
            parallel_for(bn, config.workers, [&](std::size_t k) {
                const auto idx = order[b0 + k];
                worker_grads[k].set_zero();
                Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch), step * batch + k));
                losses[k] = loss_and_gradient(train_set[idx], labels[idx], params, result.weights, Mode::Train, rng,
                                              worker_grads[k], points);
            });
            ++step;
            const double loss = std::accumulate(losses.begin(), losses.end(), 0.0);
            if (!std::isfinite(loss))
                throw std::runtime_error("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                         ", step " + std::to_string(steps + 1));
            grad.set_zero();
            for (std::size_t k = 0; k < bn; ++k) grad.add_scaled(worker_grads[k], 1.0);

            const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            for (std::size_t li = 0; li < params.layer_count(); ++li) {
                auto update = [&](auto& p, auto& mm, auto& vv, const auto& g) {
                    mm = config.beta1 * mm + (1.0 - config.beta1) * g;
                    vv = config.beta2 * vv + (1.0 - config.beta2) * g.cwiseProduct(g);
                    p.array() -= config.learning_rate * (mm.array() / bc1) /
                                 ((vv.array() / bc2).sqrt() + config.epsilon);
                };
                auto& P = params.layer(li);
                auto& M = m.layer(li);
                auto& V = v.layer(li);
                const auto& G = grad.layer(li);
                update(P.weight, M.weight, V.weight, G.weight);
                update(P.bias, M.bias, V.bias, G.bias);
            }
            if (!params.all_finite())
                throw std::runtime_error("training diverged: non-finite parameters at epoch " + std::to_string(epoch) +
                                         ", step " + std::to_string(steps + 1));
            loss_sum += loss;
            ++steps;
        }
        const double train_loss = loss_sum / static_cast<double>(steps);
        const double val_f1 = validation_macro_f1(val_set, params, setup, config.workers);
        result.history.train_loss.push_back(train_loss);
        result.history.val_macro_f1.push_back(val_f1);
        const bool improved = val_f1 > best;
        if (improved) {
            best = val_f1;
            result.history.best_epoch = epoch;
            result.params = params;
        }
        if (on_epoch) on_epoch({epoch, train_loss, val_f1, improved});
    }
    return result;
}

// ---- experiment matrix -----------------------------------------------------

PreparedData prepare_samples(const Dataset& ds, const PipelineConfig& pipeline) {
    PreparedData d;
    const auto train_windows = windows_for(ds, ds.train_ids, pipeline);
    const auto test_windows = windows_for(ds, ds.test_ids, pipeline);
    if (train_windows.empty()) throw std::runtime_error("no nonempty training windows in the dataset");
    if (test_windows.empty()) throw std::runtime_error("no nonempty test windows in the dataset");
    d.stats = norm_stats_for(ds, train_windows);
    d.train = make_samples(ds, train_windows, d.stats, pipeline);
    d.test = make_samples(ds, test_windows, d.stats, pipeline);
    return d;
}

std::string checkpoint_bytes(const TrainResult& result, const TrainConfig& config, const PipelineConfig& pipeline,
                             const NormStats& stats) {
    const nlohmann::json extra{
        {"setup", config.setup},
        {"weighted", config.weighted},
        {"best_epoch", result.history.best_epoch},
        {"val_macro_f1", result.history.val_macro_f1.empty()
                             ? 0.0
                             : result.history.val_macro_f1[static_cast<std::size_t>(result.history.best_epoch - 1)]},
        {"pipeline",
         {{"window_ms", pipeline.window_ms},
          {"stride_ms", pipeline.stride_ms},
          {"sample_size", pipeline.sample_size},
          {"include_amplitude", pipeline.include_amplitude}}},
        {"norm_stats", {{"mean", stats.mean}, {"stddev", stats.stddev}}}};
    std::ostringstream ss;
    write_checkpoint(ss, result.params, config.seed, extra);
    return ss.str();
}

std::string checkpoint_id(const std::string& bytes) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
    return buf;
}

std::vector<ExperimentResult> run_experiment_matrix(const PreparedData& data, const ExperimentConfig& config,
                                                    const std::string& dataset_hash,
                                                    const std::function<void(int, const EpochInfo&)>& on_epoch) {
    if (config.setups.empty()) throw std::invalid_argument("experiment matrix: no setups requested");
    for (int id : config.setups) setup_by_id(id);
    std::vector<ExperimentResult> out(config.setups.size());
    parallel_for(config.setups.size(), config.parallel_setups, [&](std::size_t k) {
        TrainConfig tc = config.train;
        tc.setup = config.setups[k];
        auto& r = out[k];
        r.setup = tc.setup;
        r.train = train(data.train, tc, [&](const EpochInfo& e) {
            if (on_epoch) on_epoch(tc.setup, e);
        });
        r.checkpoint = checkpoint_bytes(r.train, tc, config.pipeline, data.stats);
        const auto& setup = setup_by_id(tc.setup);
        r.report = make_report(tc.setup, checkpoint_id(r.checkpoint), dataset_hash,
                               evaluate_samples(data.test, r.train.params, setup, tc.workers));
    });
    return out;
}

}  // namespace ghostseg
