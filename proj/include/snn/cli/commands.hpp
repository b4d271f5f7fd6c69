#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "snn/events/events.hpp"
#include "snn/train/experiment.hpp"

namespace snn::cli {

// Process exit codes by error category.
inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitNumeric = 4;

/// Overrides shared by the commands that read an experiment config.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> timesteps;
    std::optional<std::size_t> epochs;
    std::optional<std::filesystem::path> out;

    void apply(train::Experiment& e) const;
};

struct SynthArgs {
    events::SynthSpec spec;
    std::filesystem::path out;
};

/// Writes the dataset and returns its content hash (hex FNV-1a over the
/// manifest and every sample file).
std::string cmd_synth(const SynthArgs& args, std::ostream& log);
std::string hash_dataset(const std::filesystem::path& dir);

struct TrainArgs {
    std::filesystem::path config;
    Overrides overrides;
    bool resume = false;  // continue from <out>/checkpoints/last
};

/// Writes <out>/resolved.cfg, <out>/metrics.csv and <out>/checkpoints/{best,last}.
train::TrainState cmd_train(const TrainArgs& args, std::ostream& log);

/// Accepts a checkpoint directory, or "best"/"last" under <run>/checkpoints.
std::filesystem::path resolve_checkpoint(const std::string& arg, const std::filesystem::path& run);

/// Model and experiment restored from a checkpoint's embedded config.
struct Restored {
    train::Experiment experiment;
    train::Dataset train;
    train::Dataset test;
    std::unique_ptr<model::Model> model;
};
Restored restore(const std::filesystem::path& checkpoint, const std::optional<std::filesystem::path>& config,
                 bool enable_azo = false);

struct EvalArgs {
    std::string checkpoint = "best";
    std::filesystem::path run = ".";
    std::optional<std::filesystem::path> config;  // replaces the data section source
    std::string split = "test";
    std::filesystem::path out;  // default: the checkpoint directory
};

/// Writes eval.csv (one summary row) and spike_counts.csv.
train::EvalResult cmd_eval(const EvalArgs& args, std::ostream& log);

enum class AblateAxis { Placement, Scales, CrTr, RtrRcr };
AblateAxis parse_axis(const std::string& s);

struct AblateArgs {
    AblateAxis axis = AblateAxis::Placement;
    std::vector<std::string> grid;
    std::filesystem::path config;
    Overrides overrides;
};

struct AblateRow {
    std::string cell;
    std::string status;  // "ok" or "skipped"
    double accuracy = 0.0;
    double wall_seconds = 0.0;
    std::size_t params = 0;
    double infer_seconds_per_batch = 0.0;
    std::string note;
};

/// Runs every cell with the base config's seed; writes <out>/ablate_<axis>.csv.
std::vector<AblateRow> cmd_ablate(const AblateArgs& args, std::ostream& log);

struct AnalyzeArgs {
    std::string checkpoint = "best";
    std::filesystem::path run = ".";
    std::optional<std::filesystem::path> config;
    std::vector<std::string> outputs;  // sfr-heatmap, spike-counts, scale-importance, azo-report
    std::string layer;                 // sfr-heatmap; default: first spiking layer after the coding layer
    std::string split = "test";
    std::string mode = "eval";         // forward mode for sfr-heatmap
    std::size_t max_samples = 0;       // 0 = all
    std::uint64_t seed = 1;            // training-mode passes
    std::filesystem::path out = "analysis";
};

void cmd_analyze(const AnalyzeArgs& args, std::ostream& log);

/// P5 grayscale, maxval 255.
void write_pgm(const std::filesystem::path& path, std::size_t height, std::size_t width,
               const std::vector<std::uint8_t>& pixels);

/// Linear map of a map's values to [0, 255] with `max_value` -> 255; all zeros when max_value is 0.
std::vector<std::uint8_t> to_gray(const std::vector<double>& values, double max_value);

/// Top-level dispatcher used by the executable; returns the exit code.
int run(int argc, char** argv);

}  // namespace snn::cli
