#include "snn/train/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "snn/core/error.hpp"

namespace snn::train {

using model::format_number;

Dataset Dataset::from_streams(const std::vector<events::EventStream>& streams, std::size_t steps) {
    Dataset d;
    d.frames.reserve(streams.size());
    for (const auto& s : streams) {
        d.frames.push_back(events::bin_events(s, steps));
        d.labels.push_back(s.label);
        d.names.push_back(s.name);
    }
    return d;
}

Shape Dataset::sample_shape() const {
    if (frames.empty()) throw std::invalid_argument("dataset is empty");
    return frames.front().shape();
}

double EvalResult::total_spikes() const {
    double t = 0.0;
    for (const auto& row : spike_counts) t = std::accumulate(row.begin(), row.end(), t);
    return t;
}

namespace {

struct Batch {
    Value x;
    std::vector<int> labels;
};

Batch make_batch(const Dataset& d, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end,
                 Rng* aug_rng, const events::AugmentPolicy* policy) {
    std::vector<events::FrameTensor> augmented;
    std::vector<const events::FrameTensor*> ptrs;
    Batch b;
    if (aug_rng) augmented.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        const auto& f = d.frames[idx[i]];
        if (aug_rng) {
            augmented.push_back(events::augment(f, *aug_rng, *policy));
            ptrs.push_back(&augmented.back());
        } else {
            ptrs.push_back(&f);
        }
        b.labels.push_back(d.labels[idx[i]]);
    }
    b.x = events::batch_frames(ptrs);
    return b;
}

/// Running spike totals per layer.
struct SpikeTally {
    std::vector<double> spikes, sites;

    void add(const model::ForwardResult& r) {
        if (spikes.empty()) {
            spikes.assign(r.spikes.size(), 0.0);
            sites.assign(r.spikes.size(), 0.0);
        }
        for (std::size_t l = 0; l < r.spikes.size(); ++l) {
            const auto d = r.spikes[l].spikes.data();
            spikes[l] = std::accumulate(d.begin(), d.end(), spikes[l]);
            sites[l] += static_cast<double>(d.size());
        }
    }
    std::vector<double> rates() const {
        std::vector<double> out(spikes.size(), 0.0);
        for (std::size_t l = 0; l < out.size(); ++l) out[l] = sites[l] > 0 ? spikes[l] / sites[l] : 0.0;
        return out;
    }
};

std::size_t count_correct(const Value& logits, const std::vector<int>& labels) {
    const auto pred = predict(logits);
    std::size_t c = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) c += pred[i] == labels[i];
    return c;
}

nlohmann::json to_json(const SplitMetrics& m) {
    return {{"loss", m.loss}, {"accuracy", m.accuracy}, {"sfr", m.sfr}};
}

SplitMetrics from_json(const nlohmann::json& j) {
    return {j.at("loss").get<double>(), j.at("accuracy").get<double>(), j.at("sfr").get<std::vector<double>>()};
}

}  // namespace

EvalResult evaluate(model::Model& model, const Dataset& data, const LossSpec& loss, std::size_t batch_size) {
    if (batch_size == 0) throw std::invalid_argument("evaluate: batch size must be > 0");
    NoGradGuard no_grad;
    EvalResult r;
    r.layers = model.spiking_layers();
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    SpikeTally tally;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
        const std::size_t end = std::min(begin + batch_size, data.size());
        const Batch b = make_batch(data, idx, begin, end, nullptr, nullptr);
        model::ForwardContext ctx;
        ctx.record = true;
        const auto res = model.forward(b.x, ctx);
        loss_sum += compute_loss(loss, res.logits, b.labels).item() * static_cast<double>(end - begin);
        correct += count_correct(res.logits, b.labels);
        const auto pred = predict(res.logits);
        r.predictions.insert(r.predictions.end(), pred.begin(), pred.end());
        tally.add(res);
        for (std::size_t i = 0; i < end - begin; ++i) {
            std::vector<double> row(res.spikes.size(), 0.0);
            for (std::size_t l = 0; l < res.spikes.size(); ++l) {
                const auto d = res.spikes[l].spikes.data();
                const std::size_t per = d.size() / (end - begin);
                row[l] = std::accumulate(d.begin() + static_cast<std::ptrdiff_t>(i * per),
                                         d.begin() + static_cast<std::ptrdiff_t>((i + 1) * per), 0.0);
            }
            r.spike_counts.push_back(std::move(row));
        }
    }
    const double n = static_cast<double>(std::max<std::size_t>(data.size(), 1));
    r.loss = loss_sum / n;
    r.accuracy = static_cast<double>(correct) / n;
    r.sfr = tally.rates();
    if (r.sfr.empty()) r.sfr.assign(r.layers.size(), 0.0);
    return r;
}

Trainer::Trainer(model::Model& model, TrainConfig cfg)
    : model_(model), cfg_(std::move(cfg)), optim_(cfg_.optim, model.trainable()) {
    cfg_.loss.validate();
    if (cfg_.batch_size == 0 || cfg_.eval_batch_size == 0) throw ConfigError("train: batch sizes must be > 0");
    state_.seed = cfg_.seed;
}

SplitMetrics Trainer::train_epoch(const Dataset& train, std::size_t epoch) {
    // Shuffling, augmentation and dropout all draw from one stream per epoch,
    // so a resumed run replays exactly.
    Rng rng(mix_seed(cfg_.seed, epoch + 1));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const double lr = cfg_.optim.lr_at(epoch, cfg_.epochs);

    SpikeTally tally;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_id = 0;
    for (std::size_t begin = 0; begin < train.size(); begin += cfg_.batch_size, ++batch_id) {
        const std::size_t end = std::min(begin + cfg_.batch_size, train.size());
        const Batch b = make_batch(train, order, begin, end, cfg_.augment ? &rng : nullptr, &cfg_.augment_policy);
        optim_.zero_grad();
        model::ForwardContext ctx;
        ctx.train = true;
        ctx.rng = &rng;
        ctx.record = true;
        const auto res = model_.forward(b.x, ctx);
        const Value loss = compute_loss(cfg_.loss, res.logits, b.labels);
        if (!std::isfinite(loss.item())) {
            throw NumericError("non-finite loss at epoch " + std::to_string(epoch + 1) + " batch " +
                               std::to_string(batch_id));
        }
        backward(loss);
        optim_.step(lr);
        loss_sum += loss.item() * static_cast<double>(end - begin);
        correct += count_correct(res.logits, b.labels);
        tally.add(res);
    }
    const double n = static_cast<double>(std::max<std::size_t>(train.size(), 1));
    return {loss_sum / n, static_cast<double>(correct) / n, tally.rates()};
}

const TrainState& Trainer::run(const Dataset& train, const Dataset& test) {
    if (train.size() == 0) throw std::invalid_argument("train: training set is empty");
    const Shape expect = model_.input_shape();
    if (train.sample_shape() != expect || (test.size() && test.sample_shape() != expect)) {
        throw ShapeError("train: samples of shape " + train.sample_shape().str() + " do not fit model input " +
                         expect.str());
    }
    const auto layers = model_.spiking_layers();
    while (state_.epoch < cfg_.epochs) {
        EpochRecord rec;
        rec.epoch = state_.epoch + 1;
        rec.train = train_epoch(train, state_.epoch);
        const Dataset& held = test.size() ? test : train;
        const EvalResult ev = evaluate(model_, held, cfg_.loss, cfg_.eval_batch_size);
        rec.test = {ev.loss, ev.accuracy, ev.sfr};
        state_.history.push_back(rec);
        state_.epoch = rec.epoch;
        const bool best = ev.accuracy > state_.best_accuracy;
        if (best) {
            state_.best_accuracy = ev.accuracy;
            state_.best_epoch = rec.epoch;
        }
        if (!cfg_.checkpoint_dir.empty()) {
            if (best) save_checkpoint(cfg_.checkpoint_dir / "best");
            save_checkpoint(cfg_.checkpoint_dir / "last");
        }
        if (!cfg_.metrics_path.empty()) write_metrics_csv(cfg_.metrics_path, layers, state_.history);
        if (cfg_.on_epoch) cfg_.on_epoch(rec);
    }
    return state_;
}

void Trainer::save_checkpoint(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    model::save_params(model_, dir / "params.snnp", cfg_.resolved_config);
    optim_.save(dir / "optim.snno");
    nlohmann::json j;
    j["epoch"] = state_.epoch;
    j["seed"] = state_.seed;
    j["best_accuracy"] = state_.best_accuracy;
    j["best_epoch"] = state_.best_epoch;
    j["layers"] = model_.spiking_layers();
    auto& h = j["history"] = nlohmann::json::array();
    for (const auto& r : state_.history) {
        h.push_back({{"epoch", r.epoch}, {"train", to_json(r.train)}, {"test", to_json(r.test)}});
    }
    std::ofstream os(dir / "state.json");
    if (!os) throw IoError("cannot write " + (dir / "state.json").string());
    os << j.dump(1) << '\n';
}

void Trainer::resume(const std::filesystem::path& checkpoint) {
    const auto state_path = checkpoint / "state.json";
    std::ifstream is(state_path);
    if (!is) throw IoError("cannot open checkpoint state " + state_path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(state_path.string() + ": " + e.what());
    }
    if (j.at("seed").get<std::uint64_t>() != cfg_.seed) {
        throw ConfigError("checkpoint " + checkpoint.string() + " was trained with seed " +
                          std::to_string(j.at("seed").get<std::uint64_t>()) + ", config says " +
                          std::to_string(cfg_.seed));
    }
    model::load_params(model_, checkpoint / "params.snnp");
    optim_.load(checkpoint / "optim.snno");
    TrainState s;
    s.seed = cfg_.seed;
    s.epoch = j.at("epoch").get<std::size_t>();
    s.best_accuracy = j.at("best_accuracy").get<double>();
    s.best_epoch = j.at("best_epoch").get<std::size_t>();
    for (const auto& r : j.at("history")) {
        s.history.push_back({r.at("epoch").get<std::size_t>(), from_json(r.at("train")), from_json(r.at("test"))});
    }
    state_ = std::move(s);
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<std::string>& layers,
                       const std::vector<EpochRecord>& history) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "epoch,split,loss,accuracy";
    for (const auto& l : layers) os << ",sfr_" << l;
    os << '\n';
    for (const auto& r : history) {
        for (const auto& [split, m] : {std::pair{"train", &r.train}, std::pair{"test", &r.test}}) {
            os << r.epoch << ',' << split << ',' << format_number(m->loss) << ',' << format_number(m->accuracy);
            for (std::size_t l = 0; l < layers.size(); ++l) {
                os << ',' << format_number(l < m->sfr.size() ? m->sfr[l] : 0.0);
            }
            os << '\n';
        }
    }
    if (!os) throw IoError("write failed for " + path.string());
}

void write_spike_counts_csv(const std::filesystem::path& path, const Dataset& data, const EvalResult& r) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "sample,label,prediction";
    for (const auto& l : r.layers) os << ',' << l;
    os << '\n';
    for (std::size_t i = 0; i < r.spike_counts.size(); ++i) {
        os << i << ',' << data.labels[i] << ',' << r.predictions[i];
        for (double c : r.spike_counts[i]) os << ',' << format_number(c);
        os << '\n';
    }
    if (!os) throw IoError("write failed for " + path.string());
}

}  // namespace snn::train
