#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "snn/events/events.hpp"
#include "snn/model/model.hpp"
#include "snn/train/loss.hpp"
#include "snn/train/optim.hpp"

namespace snn::train {

/// Binned samples ready for batching.
struct Dataset {
    std::vector<events::FrameTensor> frames;
    std::vector<int> labels;
    std::vector<std::string> names;

    static Dataset from_streams(const std::vector<events::EventStream>& streams, std::size_t steps);
    std::size_t size() const { return frames.size(); }
    /// [T, C, H, W] of one sample; throws on an empty set.
    Shape sample_shape() const;
};

struct SplitMetrics {
    double loss = 0.0;
    double accuracy = 0.0;
    std::vector<double> sfr;  // per spiking layer
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    SplitMetrics train;
    SplitMetrics test;
};

struct TrainState {
    std::size_t epoch = 0;  // completed epochs
    std::uint64_t seed = 0;
    double best_accuracy = -1.0;
    std::size_t best_epoch = 0;
    std::vector<EpochRecord> history;
};

struct TrainConfig {
    LossSpec loss;
    OptimSpec optim;
    std::size_t epochs = 30;
    std::size_t batch_size = 10;
    std::size_t eval_batch_size = 20;
    std::uint64_t seed = 1;
    bool augment = false;
    events::AugmentPolicy augment_policy;
    /// When set, "best" and "last" checkpoints are written below it.
    std::filesystem::path checkpoint_dir;
    /// When set, the full metric log is rewritten here after every epoch.
    std::filesystem::path metrics_path;
    /// Stored as metadata in every parameter container.
    std::string resolved_config;
    std::function<void(const EpochRecord&)> on_epoch;
};

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
    std::vector<std::string> layers;
    std::vector<double> sfr;                        // per layer, mean over neurons and samples
    std::vector<std::vector<double>> spike_counts;  // [sample][layer] total spikes
    std::vector<int> predictions;

    double total_spikes() const;
};

/// Eval mode: no graph, AZO off, BN running statistics.
EvalResult evaluate(model::Model& model, const Dataset& data, const LossSpec& loss, std::size_t batch_size = 20);

class Trainer {
public:
    Trainer(model::Model& model, TrainConfig cfg);

    /// Trains until cfg.epochs epochs are complete (continuing after resume()).
    const TrainState& run(const Dataset& train, const Dataset& test);

    /// Restores parameters, optimizer slots and history from a checkpoint directory.
    void resume(const std::filesystem::path& checkpoint);

    const TrainState& state() const { return state_; }
    Optimizer& optimizer() { return optim_; }

    /// One pass over `train` for 0-based `epoch`.
    SplitMetrics train_epoch(const Dataset& train, std::size_t epoch);

    void save_checkpoint(const std::filesystem::path& dir) const;

private:
    model::Model& model_;
    TrainConfig cfg_;
    Optimizer optim_;
    TrainState state_;
};

/// "epoch,split,loss,accuracy,sfr_<layer>..." plus two rows per epoch.
void write_metrics_csv(const std::filesystem::path& path, const std::vector<std::string>& layers,
                       const std::vector<EpochRecord>& history);

/// "sample,label,prediction,<layer>..." with total spikes per layer.
void write_spike_counts_csv(const std::filesystem::path& path, const Dataset& data, const EvalResult& r);

}  // namespace snn::train
