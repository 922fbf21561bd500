#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ghostseg/evaluator.hpp"
#include "ghostseg/pipeline.hpp"
#include "ghostseg/pointseg.hpp"

namespace ghostseg {

struct ClassProportions {
    std::vector<std::uint64_t> counts;  // per setup class
    std::vector<double> s;              // counts / total
};

/// Class shares after remapping; s_l sums to 1. Throws std::invalid_argument
/// naming every class that never occurs.
ClassProportions compute_proportions(std::span<const std::uint64_t> counts, const Setup& setup);
ClassProportions compute_proportions(std::span<const Sample> samples, const Setup& setup);

struct TrainConfig {
    int setup = 1;
    int epochs = 100;
    std::size_t batch_size = 8;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double val_fraction = 0.10;
    bool val_by_recording = false;
    std::uint64_t seed = 1;
    bool weighted = true;     // 1/(c s_l) loss weights; false: uniform
    double init_scale = 1.0;  // multiplies the fan-in uniform limit
    unsigned workers = 1;     // threads per batch
    /// Architecture; class count and input width are filled in per setup.
    NetworkConfig network = NetworkConfig::standard(2, 4);

    void validate() const;
};

/// The architecture of `config` resized for the setup's classes and the
/// sample channel count.
NetworkConfig network_for(const TrainConfig& config, std::size_t channels);

struct ValSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};

/// Uniform sample-level split of `n` items; round(fraction * n) (at least one)
/// go to validation. Throws std::invalid_argument if either side is empty.
ValSplit split_train_val(std::size_t n, double fraction, std::uint64_t seed);
/// Same, but whole recordings move together.
ValSplit split_train_val_by_recording(std::span<const Sample> samples, double fraction, std::uint64_t seed);

struct TrainHistory {
    std::vector<double> train_loss;    // per epoch, mean over steps
    std::vector<double> val_macro_f1;  // per epoch, background excluded
    int best_epoch = 0;                // 1-based

    void write(std::ostream& out) const;
    bool operator==(const TrainHistory&) const = default;
};

struct EpochInfo {
    int epoch = 0;
    double train_loss = 0.0;
    double val_macro_f1 = 0.0;
    bool improved = false;
};

using EpochCallback = std::function<void(const EpochInfo&)>;

struct TrainResult {
    NetworkParams params;  // best validation checkpoint
    TrainHistory history;
    ClassProportions proportions;
    ClassWeights weights;
    ValSplit split;
};

/// Adam over shuffled minibatches; the loss of a batch is the mean over all of
/// its points. Throws std::runtime_error naming epoch and step if the loss
/// or the parameters stop being finite.
TrainResult train(std::span<const Sample> samples, const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Setup-class predictions over every sample, padding duplicates excluded.
ConfusionMatrix evaluate_samples(std::span<const Sample> samples, const NetworkParams& params, const Setup& setup,
                                 unsigned workers = 1);
double validation_macro_f1(std::span<const Sample> samples, const NetworkParams& params, const Setup& setup,
                           unsigned workers = 1);

// ---- experiment matrix -----------------------------------------------------

struct ExperimentConfig {
    std::filesystem::path dataset;  // empty: supplied by the caller
    PipelineConfig pipeline;
    TrainConfig train;
    std::vector<int> setups{1, 2, 3, 4, 5, 6};
    unsigned parallel_setups = 1;
};

/// YAML document; relative dataset paths resolve against `base_dir`.
/// Throws ConfigError naming the field and line.
ExperimentConfig parse_experiment_config(const std::string& text, const std::string& source = "<string>",
                                         const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Windows and samples of the train and test recordings; standardization
/// uses training windows only.
struct PreparedData {
    NormStats stats;
    std::vector<Sample> train;
    std::vector<Sample> test;
};

PreparedData prepare_samples(const Dataset& ds, const PipelineConfig& pipeline);

/// Checkpoint bytes for a trained setup, including what evaluation needs to
/// rebuild samples (pipeline settings, standardization).
std::string checkpoint_bytes(const TrainResult& result, const TrainConfig& config, const PipelineConfig& pipeline,
                             const NormStats& stats);
/// Short stable identifier of checkpoint bytes.
std::string checkpoint_id(const std::string& bytes);

struct ExperimentResult {
    int setup = 0;
    TrainResult train;
    std::string checkpoint;  // serialized checkpoint
    EvalReport report;
};

/// Trains every listed setup on identical splits and seeds, then evaluates
/// each on the test samples against the full ground truth.
std::vector<ExperimentResult> run_experiment_matrix(const PreparedData& data, const ExperimentConfig& config,
                                                    const std::string& dataset_hash,
                                                    const std::function<void(int, const EpochInfo&)>& on_epoch = {});

}  // namespace ghostseg
