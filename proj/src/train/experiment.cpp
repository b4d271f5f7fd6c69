#include "snn/train/experiment.hpp"

#include <algorithm>
#include <cmath>

#include "snn/core/error.hpp"

namespace snn::train {

using model::ConfigFile;
using model::ConfigSection;
using model::format_number;

namespace {

std::size_t non_negative(const ConfigSection& s, const std::string& key, std::size_t fallback) {
    const long v = s.get_int(key, static_cast<long>(fallback));
    if (v < 0) throw ConfigError("[" + s.name + "] " + key + " must be >= 0");
    return static_cast<std::size_t>(v);
}

DataSpec parse_data(const ConfigSection* s) {
    DataSpec d;
    if (!s) return d;
    s->require_known({"source", "dir", "classes", "per_class", "height", "width", "events", "noise", "synth_seed",
                      "timesteps", "split", "test_count", "split_seed", "augment", "hflip_p", "max_shift"});
    const std::string src = s->get_string("source", "synth");
    if (src == "synth") {
        d.source = DataSource::Synth;
    } else if (src == "dir") {
        d.source = DataSource::Dir;
        d.dir = s->get_string("dir", "");
        if (d.dir.empty()) throw ConfigError("[data] source = dir needs a dir entry");
    } else {
        throw ConfigError("[data] source must be synth or dir, got '" + src + "'");
    }
    auto& y = d.synth;
    y.classes = static_cast<int>(s->get_int("classes", y.classes));
    y.per_class = static_cast<int>(s->get_int("per_class", y.per_class));
    y.height = static_cast<int>(s->get_int("height", y.height));
    y.width = static_cast<int>(s->get_int("width", y.width));
    y.events_per_sample = static_cast<int>(s->get_int("events", y.events_per_sample));
    y.noise_rate = s->get_double("noise", y.noise_rate);
    y.seed = static_cast<std::uint64_t>(s->get_int("synth_seed", static_cast<long>(y.seed)));
    d.timesteps = non_negative(*s, "timesteps", d.timesteps);
    d.split = s->get_double("split", d.split);
    d.test_count = non_negative(*s, "test_count", d.test_count);
    d.split_seed = static_cast<std::uint64_t>(s->get_int("split_seed", static_cast<long>(d.split_seed)));
    d.augment = s->get_bool("augment", d.augment);
    d.augment_policy.hflip_p = s->get_double("hflip_p", d.augment_policy.hflip_p);
    const int shift = static_cast<int>(s->get_int("max_shift", d.augment_policy.max_dx));
    d.augment_policy.max_dx = d.augment_policy.max_dy = shift;

    if (d.timesteps == 0) throw ConfigError("[data] timesteps must be > 0");
    if (!(d.split > 0.0 && d.split < 1.0)) throw ConfigError("[data] split must lie in (0, 1)");
    if (y.classes < 1 || y.per_class < 2 || y.height < 1 || y.width < 1 || y.events_per_sample < 1) {
        throw ConfigError("[data] synthetic set needs classes >= 1, per_class >= 2 and positive sizes");
    }
    if (y.noise_rate < 0.0 || y.noise_rate > 1.0) throw ConfigError("[data] noise must lie in [0, 1]");
    if (shift < 0) throw ConfigError("[data] max_shift must be >= 0");
    return d;
}

void parse_train(const ConfigSection* s, Experiment& e) {
    if (!s) return;
    s->require_known({"loss", "smoothing", "optimizer", "lr", "momentum", "weight_decay", "beta1", "beta2", "eps",
                      "schedule", "epochs", "batch_size", "eval_batch_size", "seed", "out"});
    e.loss.kind = parse_loss(s->get_string("loss", to_string(e.loss.kind)));
    e.loss.smoothing = s->get_double("smoothing", e.loss.smoothing);
    auto& o = e.optim;
    o.kind = parse_optim(s->get_string("optimizer", to_string(o.kind)));
    o.lr = s->get_double("lr", o.lr);
    o.momentum = s->get_double("momentum", o.momentum);
    o.weight_decay = s->get_double("weight_decay", o.weight_decay);
    o.beta1 = s->get_double("beta1", o.beta1);
    o.beta2 = s->get_double("beta2", o.beta2);
    o.eps = s->get_double("eps", o.eps);
    o.schedule = parse_schedule(s->get_string("schedule", to_string(o.schedule)));
    e.epochs = non_negative(*s, "epochs", e.epochs);
    e.batch_size = non_negative(*s, "batch_size", e.batch_size);
    e.eval_batch_size = non_negative(*s, "eval_batch_size", e.eval_batch_size);
    e.seed = static_cast<std::uint64_t>(s->get_int("seed", static_cast<long>(e.seed)));
    e.out = s->get_string("out", e.out.string());
    if (e.batch_size == 0 || e.eval_batch_size == 0) throw ConfigError("[train] batch sizes must be > 0");
}

}  // namespace

Experiment parse_experiment(const ConfigFile& cfg) {
    for (const auto& s : cfg.sections()) {
        static const std::vector<std::string> known{"data", "train", "model", "block", "stage", "neuron", "sma", "azo"};
        if (std::find(known.begin(), known.end(), s.name) == known.end()) {
            throw ConfigError("unknown section [" + s.name + "] at line " + std::to_string(s.line));
        }
    }
    Experiment e;
    e.data = parse_data(cfg.first("data"));
    parse_train(cfg.first("train"), e);
    e.loss.validate();
    e.optim.validate();
    e.model = model::parse_model_spec(cfg);
    if (e.data.source == DataSource::Synth && e.model.classes != static_cast<std::size_t>(e.data.synth.classes)) {
        throw ConfigError("[model] classes = " + std::to_string(e.model.classes) + " but [data] generates " +
                          std::to_string(e.data.synth.classes));
    }
    return e;
}

Experiment load_experiment(const std::filesystem::path& path) { return parse_experiment(ConfigFile::load(path)); }

std::string resolved_config(const Experiment& e) {
    ConfigFile cfg;
    auto& d = cfg.append("data");
    d.set("source", e.data.source == DataSource::Synth ? "synth" : "dir");
    if (e.data.source == DataSource::Dir) d.set("dir", e.data.dir.string());
    const auto& y = e.data.synth;
    d.set("classes", std::to_string(y.classes));
    d.set("per_class", std::to_string(y.per_class));
    d.set("height", std::to_string(y.height));
    d.set("width", std::to_string(y.width));
    d.set("events", std::to_string(y.events_per_sample));
    d.set("noise", format_number(y.noise_rate));
    d.set("synth_seed", std::to_string(y.seed));
    d.set("timesteps", std::to_string(e.data.timesteps));
    d.set("split", format_number(e.data.split));
    d.set("test_count", std::to_string(e.data.test_count));
    d.set("split_seed", std::to_string(e.data.split_seed));
    d.set("augment", e.data.augment ? "true" : "false");
    d.set("hflip_p", format_number(e.data.augment_policy.hflip_p));
    d.set("max_shift", std::to_string(e.data.augment_policy.max_dx));

    auto& t = cfg.append("train");
    t.set("loss", to_string(e.loss.kind));
    t.set("smoothing", format_number(e.loss.smoothing));
    t.set("optimizer", to_string(e.optim.kind));
    t.set("lr", format_number(e.optim.lr));
    t.set("momentum", format_number(e.optim.momentum));
    t.set("weight_decay", format_number(e.optim.weight_decay));
    t.set("beta1", format_number(e.optim.beta1));
    t.set("beta2", format_number(e.optim.beta2));
    t.set("eps", format_number(e.optim.eps));
    t.set("schedule", to_string(e.optim.schedule));
    t.set("epochs", std::to_string(e.epochs));
    t.set("batch_size", std::to_string(e.batch_size));
    t.set("eval_batch_size", std::to_string(e.eval_batch_size));
    t.set("seed", std::to_string(e.seed));
    t.set("out", e.out.string());

    model::write_model_spec(e.model, cfg);
    return cfg.to_text();
}

std::pair<Dataset, Dataset> load_data(const DataSpec& spec) {
    std::vector<events::EventStream> streams;
    if (spec.source == DataSource::Dir) {
        if (!std::filesystem::is_directory(spec.dir)) throw IoError("dataset directory not found: " + spec.dir.string());
        streams = events::read_dataset(spec.dir);
    } else {
        streams = events::synth_gestures(spec.synth);
    }
    if (streams.size() < 2) throw ConfigError("dataset needs at least two samples");
    double ratio = spec.split;
    if (spec.test_count > 0) {
        if (spec.test_count >= streams.size()) {
            throw ConfigError("[data] test_count " + std::to_string(spec.test_count) + " leaves no training samples");
        }
        ratio = static_cast<double>(streams.size() - spec.test_count) / static_cast<double>(streams.size());
    }
    auto [train, test] = events::split_dataset(streams, ratio, spec.split_seed);
    return {Dataset::from_streams(train, spec.timesteps), Dataset::from_streams(test, spec.timesteps)};
}

TrainConfig train_config(const Experiment& e) {
    TrainConfig c;
    c.loss = e.loss;
    c.optim = e.optim;
    c.epochs = e.epochs;
    c.batch_size = e.batch_size;
    c.eval_batch_size = e.eval_batch_size;
    c.seed = e.seed;
    c.augment = e.data.augment;
    c.augment_policy = e.data.augment_policy;
    c.resolved_config = resolved_config(e);
    return c;
}

}  // namespace snn::train
