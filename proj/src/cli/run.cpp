#include <iostream>

#include "CLI11.hpp"
#include "snn/cli/commands.hpp"
#include "snn/core/error.hpp"

namespace snn::cli {

namespace {

void add_overrides(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--seed", o.seed, "Override [train] seed");
    cmd->add_option("--timesteps", o.timesteps, "Override [data] timesteps");
    cmd->add_option("--epochs", o.epochs, "Override [train] epochs");
    cmd->add_option("--out", o.out, "Override [train] out (run directory)");
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Spiking multiscale attention trainer"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "Generate the synthetic gesture dataset");
    c_synth->add_option("--classes", synth.spec.classes, "Number of classes")->capture_default_str();
    c_synth->add_option("--per-class", synth.spec.per_class, "Samples per class")->capture_default_str();
    c_synth->add_option("--height", synth.spec.height, "Sensor height")->capture_default_str();
    c_synth->add_option("--width", synth.spec.width, "Sensor width")->capture_default_str();
    c_synth->add_option("--events", synth.spec.events_per_sample, "Events per sample")->capture_default_str();
    c_synth->add_option("--noise", synth.spec.noise_rate, "Fraction of background noise events")->capture_default_str();
    c_synth->add_option("--seed", synth.spec.seed, "Generator seed")->capture_default_str();
    c_synth->add_option("--out", synth.out, "Output directory")->required();

    TrainArgs train_args;
    auto* c_train = app.add_subcommand("train", "Train a model from an experiment config");
    c_train->add_option("--config", train_args.config, "Experiment config")->required();
    add_overrides(c_train, train_args.overrides);
    c_train->add_flag("--resume", train_args.resume, "Continue from <out>/checkpoints/last");

    EvalArgs eval;
    auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    c_eval->add_option("--checkpoint", eval.checkpoint, "Checkpoint dir, or best/last under --run")->capture_default_str();
    c_eval->add_option("--run", eval.run, "Run directory")->capture_default_str();
    c_eval->add_option("--config", eval.config, "Take the [data] section from this config instead");
    c_eval->add_option("--split", eval.split, "train or test")->capture_default_str();
    c_eval->add_option("--out", eval.out, "Output directory (default: the checkpoint)");

    AblateArgs ablate;
    std::string axis = "placement";
    auto* c_ablate = app.add_subcommand("ablate", "Sweep one design axis");
    c_ablate->add_option("--axis", axis, "placement, scales, cr-tr or rtr-rcr")->capture_default_str();
    c_ablate->add_option("--grid", ablate.grid, "Cells, e.g. T1,T3 or 2,3,4 or 4x4,2x2")->delimiter(',')->required();
    c_ablate->add_option("--config", ablate.config, "Base experiment config")->required();
    add_overrides(c_ablate, ablate.overrides);

    AnalyzeArgs analyze;
    auto* c_analyze = app.add_subcommand("analyze", "Export SFR heatmaps, spike counts, scale importance, AZO sites");
    c_analyze->add_option("--checkpoint", analyze.checkpoint, "Checkpoint dir, or best/last under --run")->capture_default_str();
    c_analyze->add_option("--run", analyze.run, "Run directory")->capture_default_str();
    c_analyze->add_option("--config", analyze.config, "Take the [data] section from this config instead");
    c_analyze->add_option("--what", analyze.outputs, "sfr-heatmap, spike-counts, scale-importance, azo-report")
        ->delimiter(',')
        ->required();
    c_analyze->add_option("--layer", analyze.layer, "Spiking layer for sfr-heatmap");
    c_analyze->add_option("--split", analyze.split, "train or test")->capture_default_str();
    c_analyze->add_option("--mode", analyze.mode, "Forward mode for sfr-heatmap: train or eval")->capture_default_str();
    c_analyze->add_option("--samples", analyze.max_samples, "Limit to the first N samples (0 = all)")->capture_default_str();
    c_analyze->add_option("--seed", analyze.seed, "Seed for training-mode passes")->capture_default_str();
    c_analyze->add_option("--out", analyze.out, "Output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*c_synth) {
            cmd_synth(synth, std::cout);
        } else if (*c_train) {
            cmd_train(train_args, std::cout);
        } else if (*c_eval) {
            cmd_eval(eval, std::cout);
        } else if (*c_ablate) {
            ablate.axis = parse_axis(axis);
            cmd_ablate(ablate, std::cout);
        } else if (*c_analyze) {
            cmd_analyze(analyze, std::cout);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::invalid_argument& e) {  // includes ShapeError
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return kExitIo;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitOther;
    }
    return kExitOk;
}

}  // namespace snn::cli
