#pragma once

#include <filesystem>
#include <string>
#include <utility>

#include "snn/events/events.hpp"
#include "snn/model/config.hpp"
#include "snn/model/model.hpp"
#include "snn/train/trainer.hpp"

namespace snn::train {

enum class DataSource { Synth, Dir };

struct DataSpec {
    DataSource source = DataSource::Synth;
    std::filesystem::path dir;  // Dir: a dataset written by events::write_dataset
    events::SynthSpec synth;
    std::size_t timesteps = 8;
    double split = 0.9;          // train fraction
    std::size_t test_count = 0;  // when > 0, overrides split
    std::uint64_t split_seed = 11;
    bool augment = false;
    events::AugmentPolicy augment_policy{0.0, 0, 0};
};

/// Everything needed to re-run a training job.
struct Experiment {
    DataSpec data;
    model::ModelSpec model;
    LossSpec loss;
    OptimSpec optim;
    std::size_t epochs = 30;
    std::size_t batch_size = 10;
    std::size_t eval_batch_size = 20;
    std::uint64_t seed = 1;
    std::filesystem::path out = "runs/default";
};

/// Reads [data] and [train] plus the model sections.
Experiment parse_experiment(const model::ConfigFile& cfg);
Experiment load_experiment(const std::filesystem::path& path);

/// Canonical text with every default spelled out.
std::string resolved_config(const Experiment& e);

/// Builds (train, test) from the data section. Throws IoError naming a
/// missing dataset directory.
std::pair<Dataset, Dataset> load_data(const DataSpec& spec);

TrainConfig train_config(const Experiment& e);

}  // namespace snn::train
