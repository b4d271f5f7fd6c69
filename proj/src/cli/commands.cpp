#include "snn/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>

#include "snn/core/error.hpp"

namespace snn::cli {

using model::format_number;
using train::Dataset;
using train::Experiment;

namespace {

std::string join(const std::vector<std::string>& v, const char* sep) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
    return s;
}

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    return os;
}

std::string file_safe(std::string s) {
    for (char& c : s) {
        if (c == '.' || c == '/') c = '_';
    }
    return s;
}

Dataset head(const Dataset& d, std::size_t n) {
    if (n == 0 || n >= d.size()) return d;
    Dataset out;
    out.frames.assign(d.frames.begin(), d.frames.begin() + static_cast<std::ptrdiff_t>(n));
    out.labels.assign(d.labels.begin(), d.labels.begin() + static_cast<std::ptrdiff_t>(n));
    out.names.assign(d.names.begin(), d.names.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
}

const Dataset& pick_split(const Restored& r, const std::string& split) {
    if (split == "test") return r.test;
    if (split == "train") return r.train;
    throw ConfigError("split must be train or test, got '" + split + "'");
}

/// Forward passes without a graph; `fn(result, begin, end)` per batch.
template <class Fn>
void for_batches(model::Model& m, const Dataset& d, std::size_t batch, bool train_mode, Rng& rng, Fn fn) {
    NoGradGuard no_grad;
    for (std::size_t begin = 0; begin < d.size(); begin += batch) {
        const std::size_t end = std::min(begin + batch, d.size());
        std::vector<const events::FrameTensor*> ptrs;
        for (std::size_t i = begin; i < end; ++i) ptrs.push_back(&d.frames[i]);
        model::ForwardContext ctx;
        ctx.train = train_mode;
        ctx.rng = &rng;
        ctx.record = true;
        const auto res = m.forward(events::batch_frames(ptrs), ctx);
        fn(res, begin, end);
    }
}

std::string sample_id(const Dataset& d, std::size_t i) {
    return d.names[i].empty() ? std::to_string(i) : d.names[i];
}

}  // namespace

void Overrides::apply(Experiment& e) const {
    if (seed) e.seed = *seed;
    if (timesteps) {
        if (*timesteps == 0) throw ConfigError("--timesteps must be > 0");
        e.data.timesteps = *timesteps;
    }
    if (epochs) e.epochs = *epochs;
    if (out) e.out = *out;
}

// ---- synth ---------------------------------------------------------------------

std::string hash_dataset(const std::filesystem::path& dir) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto feed = [&](const std::filesystem::path& p) {
        std::ifstream is(p, std::ios::binary);
        if (!is) throw IoError("cannot read " + p.string());
        for (std::istreambuf_iterator<char> it(is), end; it != end; ++it) {
            h ^= static_cast<unsigned char>(*it);
            h *= 0x100000001b3ULL;
        }
    };
    const auto manifest = dir / "manifest.csv";
    feed(manifest);
    std::ifstream is(manifest);
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
        if (!line.empty()) feed(dir / line.substr(0, line.find(',')));
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string cmd_synth(const SynthArgs& args, std::ostream& log) {
    if (args.out.empty()) throw ConfigError("synth needs --out");
    const auto& s = args.spec;
    if (s.classes < 1 || s.per_class < 1 || s.height < 1 || s.width < 1 || s.events_per_sample < 1 ||
        s.noise_rate < 0.0 || s.noise_rate > 1.0) {
        throw ConfigError("synth: classes, per-class, sizes and events must be positive and noise in [0, 1]");
    }
    const auto streams = events::synth_gestures(s);
    events::write_dataset(streams, args.out);
    const std::string h = hash_dataset(args.out);
    log << "wrote " << streams.size() << " samples to " << args.out.string() << "\nhash " << h << '\n';
    return h;
}

// ---- train / eval --------------------------------------------------------------

train::TrainState cmd_train(const TrainArgs& args, std::ostream& log) {
    Experiment e = train::load_experiment(args.config);
    args.overrides.apply(e);
    std::filesystem::create_directories(e.out);
    auto [train_set, test_set] = train::load_data(e.data);
    model::Model m(e.model, train_set.sample_shape(), e.seed);

    train::TrainConfig c = train::train_config(e);
    {
        auto os = open_out(e.out / "resolved.cfg");
        os << c.resolved_config;
    }
    c.checkpoint_dir = e.out / "checkpoints";
    c.metrics_path = e.out / "metrics.csv";
    c.on_epoch = [&](const train::EpochRecord& r) {
        log << "epoch " << r.epoch << " train_loss " << format_number(r.train.loss) << " train_acc "
            << format_number(r.train.accuracy) << " test_loss " << format_number(r.test.loss) << " test_acc "
            << format_number(r.test.accuracy) << std::endl;
    };
    log << "train " << train_set.size() << " test " << test_set.size() << " params " << m.param_count() << '\n';
    train::Trainer t(m, c);
    if (args.resume) t.resume(c.checkpoint_dir / "last");
    const auto& st = t.run(train_set, test_set);
    log << "best_accuracy " << format_number(st.best_accuracy) << " epoch " << st.best_epoch << '\n';
    return st;
}

std::filesystem::path resolve_checkpoint(const std::string& arg, const std::filesystem::path& run) {
    const std::filesystem::path direct(arg);
    if (std::filesystem::exists(direct / "params.snnp")) return direct;
    const auto under = run / "checkpoints" / arg;
    if (std::filesystem::exists(under / "params.snnp")) return under;
    throw IoError("checkpoint not found: " + arg + " (also tried " + under.string() + ")");
}

Restored restore(const std::filesystem::path& checkpoint, const std::optional<std::filesystem::path>& config,
                 bool enable_azo) {
    const auto params = checkpoint / "params.snnp";
    const std::string meta = model::read_params_metadata(params);
    if (meta.empty()) throw ConfigError(params.string() + " carries no embedded config");
    Restored r;
    r.experiment = train::parse_experiment(model::ConfigFile::parse(meta, params.string()));
    if (config) r.experiment.data = train::load_experiment(*config).data;
    std::tie(r.train, r.test) = train::load_data(r.experiment.data);
    model::ModelSpec spec = r.experiment.model;
    if (enable_azo) spec.azo_enabled = true;
    r.model = std::make_unique<model::Model>(spec, r.train.sample_shape(), r.experiment.seed);
    model::load_params(*r.model, params);
    return r;
}

train::EvalResult cmd_eval(const EvalArgs& args, std::ostream& log) {
    const auto ckpt = resolve_checkpoint(args.checkpoint, args.run);
    Restored r = restore(ckpt, args.config);
    const Dataset& data = pick_split(r, args.split);
    const auto res = train::evaluate(*r.model, data, r.experiment.loss, r.experiment.eval_batch_size);
    const auto out = args.out.empty() ? ckpt : args.out;
    {
        auto os = open_out(out / "eval.csv");
        os << "split,samples,loss,accuracy,total_spikes";
        for (const auto& l : res.layers) os << ",sfr_" << l;
        os << '\n' << args.split << ',' << data.size() << ',' << format_number(res.loss) << ','
           << format_number(res.accuracy) << ',' << format_number(res.total_spikes());
        for (double v : res.sfr) os << ',' << format_number(v);
        os << '\n';
    }
    train::write_spike_counts_csv(out / "spike_counts.csv", data, res);
    log << "checkpoint " << ckpt.string() << "\nsamples " << data.size() << "\naccuracy "
        << format_number(res.accuracy) << "\ntotal_spikes " << format_number(res.total_spikes()) << '\n';
    return res;
}

// ---- ablate --------------------------------------------------------------------

AblateAxis parse_axis(const std::string& s) {
    if (s == "placement") return AblateAxis::Placement;
    if (s == "scales") return AblateAxis::Scales;
    if (s == "cr-tr") return AblateAxis::CrTr;
    if (s == "rtr-rcr") return AblateAxis::RtrRcr;
    throw ConfigError("unknown ablation axis '" + s + "' (expected placement, scales, cr-tr or rtr-rcr)");
}

namespace {

std::string axis_name(AblateAxis a) {
    switch (a) {
        case AblateAxis::Placement: return "placement";
        case AblateAxis::Scales: return "scales";
        case AblateAxis::CrTr: return "cr-tr";
        case AblateAxis::RtrRcr: return "rtr-rcr";
    }
    return "?";
}

std::pair<double, double> parse_pair(const std::string& cell) {
    const auto x = cell.find('x');
    if (x == std::string::npos) throw ConfigError("grid cell '" + cell + "' must look like AxB");
    try {
        const double a = std::stod(cell.substr(0, x));
        const double b = std::stod(cell.substr(x + 1));
        return {a, b};
    } catch (const std::logic_error&) {
        throw ConfigError("grid cell '" + cell + "' must look like AxB with numbers");
    }
}

void apply_cell(AblateAxis axis, const std::string& cell, Experiment& e) {
    switch (axis) {
        case AblateAxis::Placement:
            e.model.placement.policy = model::parse_policy(cell);
            break;
        case AblateAxis::Scales: {
            int n = 0;
            try {
                n = std::stoi(cell);
            } catch (const std::logic_error&) {
                throw ConfigError("scale count '" + cell + "' is not an integer");
            }
            if (n < 1) throw ConfigError("scale count must be >= 1");
            e.model.sma.kernels = attention::default_kernels(static_cast<std::size_t>(n));
            break;
        }
        case AblateAxis::CrTr: {
            const auto [cr, tr] = parse_pair(cell);
            e.model.sma.cr = static_cast<int>(cr);
            e.model.sma.tr = static_cast<int>(tr);
            break;
        }
        case AblateAxis::RtrRcr: {
            const auto [rtr, rcr] = parse_pair(cell);
            e.model.azo_enabled = true;
            e.model.azo.rtr = rtr;
            e.model.azo.rcr = rcr;
            break;
        }
    }
    e.model.validate();
}

std::string azo_note(model::Model& m) {
    if (!m.spec().azo_enabled) return "";
    std::vector<std::string> idle;
    std::size_t k = 0;
    for (auto* s : m.sma_modules()) {
        const auto dt = m.spec().azo.delta_t(s->steps());
        const auto dc = m.spec().azo.delta_c(s->channels());
        if (dt == 0 || dc == 0) {
            idle.push_back("sma" + std::to_string(k) + " delta_t=" + std::to_string(dt) + " delta_c=" + std::to_string(dc));
        }
        ++k;
    }
    return idle.empty() ? "" : "azo no-op: " + join(idle, "; ");
}

}  // namespace

std::vector<AblateRow> cmd_ablate(const AblateArgs& args, std::ostream& log) {
    if (args.grid.empty()) throw ConfigError("ablate needs a non-empty --grid");
    Experiment base = train::load_experiment(args.config);
    args.overrides.apply(base);
    auto [train_set, test_set] = train::load_data(base.data);
    std::vector<AblateRow> rows;
    for (const auto& cell : args.grid) {
        AblateRow row;
        row.cell = cell;
        Experiment e = base;
        std::unique_ptr<model::Model> m;
        try {
            apply_cell(args.axis, cell, e);
            m = std::make_unique<model::Model>(e.model, train_set.sample_shape(), e.seed);
        } catch (const ConfigError& err) {
            row.status = "skipped";
            row.note = err.what();
            std::replace(row.note.begin(), row.note.end(), ',', ';');
            log << cell << ": skipped (" << row.note << ")\n";
            rows.push_back(row);
            continue;
        }
        row.status = "ok";
        row.params = m->param_count();
        row.note = azo_note(*m);
        const auto t0 = std::chrono::steady_clock::now();
        train::Trainer t(*m, train::train_config(e));
        t.run(train_set, test_set);
        const auto t1 = std::chrono::steady_clock::now();
        const auto ev = train::evaluate(*m, test_set, e.loss, e.eval_batch_size);
        const auto t2 = std::chrono::steady_clock::now();
        const std::size_t batches = (test_set.size() + e.eval_batch_size - 1) / e.eval_batch_size;
        row.accuracy = ev.accuracy;
        row.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
        row.infer_seconds_per_batch =
            std::chrono::duration<double>(t2 - t1).count() / static_cast<double>(std::max<std::size_t>(batches, 1));
        log << cell << ": accuracy " << format_number(row.accuracy) << " params " << row.params << '\n';
        rows.push_back(row);
    }
    auto os = open_out(base.out / ("ablate_" + axis_name(args.axis) + ".csv"));
    os << "axis,cell,status,accuracy,wall_seconds,params,infer_seconds_per_batch,note\n";
    for (const auto& r : rows) {
        os << axis_name(args.axis) << ',' << r.cell << ',' << r.status << ',' << format_number(r.accuracy) << ','
           << format_number(r.wall_seconds) << ',' << r.params << ',' << format_number(r.infer_seconds_per_batch)
           << ',' << r.note << '\n';
    }
    return rows;
}

// ---- analyze -------------------------------------------------------------------

void write_pgm(const std::filesystem::path& path, std::size_t height, std::size_t width,
               const std::vector<std::uint8_t>& pixels) {
    if (pixels.size() != height * width) throw std::invalid_argument("pgm: pixel count does not match size");
    auto os = open_out(path);
    os << "P5\n" << width << ' ' << height << "\n255\n";
    os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!os) throw IoError("write failed for " + path.string());
}

std::vector<std::uint8_t> to_gray(const std::vector<double>& values, double max_value) {
    std::vector<std::uint8_t> out(values.size(), 0);
    if (!(max_value > 0.0)) return out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = std::clamp(values[i] / max_value, 0.0, 1.0);
        out[i] = static_cast<std::uint8_t>(std::lround(255.0 * v));
    }
    return out;
}

namespace {

void sfr_heatmap(const AnalyzeArgs& args, Restored& r, const Dataset& data, std::ostream& log) {
    const auto layers = r.model->spiking_layers();
    std::string layer = args.layer;
    if (layer.empty()) layer = layers.size() > 1 ? layers[1] : layers.at(0);
    if (std::find(layers.begin(), layers.end(), layer) == layers.end()) {
        throw ConfigError("layer '" + layer + "' not found; available: " + join(layers, ", "));
    }
    if (args.mode != "eval" && args.mode != "train") throw ConfigError("--mode must be train or eval");
    std::vector<std::vector<double>> maps;
    std::size_t hh = 0, ww = 0;
    Rng rng(args.seed);
    for_batches(*r.model, data, r.experiment.eval_batch_size, args.mode == "train", rng,
                [&](const model::ForwardResult& res, std::size_t begin, std::size_t end) {
                    const auto it = std::find_if(res.spikes.begin(), res.spikes.end(),
                                                 [&](const model::LayerSpikes& s) { return s.name == layer; });
                    if (it == res.spikes.end()) throw ConfigError("layer '" + layer + "' recorded no spikes");
                    const Shape& s = it->spikes.shape();
                    if (s.rank() != 5) throw ConfigError("layer '" + layer + "' has no spatial map");
                    const std::size_t t = s[1], c = s[2];
                    hh = s[3];
                    ww = s[4];
                    const auto d = it->spikes.data();
                    for (std::size_t b = 0; b < end - begin; ++b) {
                        std::vector<double> map(hh * ww, 0.0);
                        for (std::size_t k = 0; k < t * c; ++k) {
                            const double* src = d.data() + (b * t * c + k) * hh * ww;
                            for (std::size_t p = 0; p < hh * ww; ++p) map[p] += src[p];
                        }
                        for (double& v : map) v /= static_cast<double>(t * c);
                        maps.push_back(std::move(map));
                    }
                });
    double layer_max = 0.0;
    for (const auto& m : maps) layer_max = std::max(layer_max, *std::max_element(m.begin(), m.end()));
    const std::string base = "sfr_" + file_safe(layer);
    auto os = open_out(args.out / (base + ".csv"));
    os << "sample,label,height,width,max_sfr,mean_sfr";
    for (std::size_t p = 0; p < hh * ww; ++p) os << ",p" << p;
    os << '\n';
    for (std::size_t i = 0; i < maps.size(); ++i) {
        const auto& m = maps[i];
        double sum = 0.0;
        for (double v : m) sum += v;
        os << sample_id(data, i) << ',' << data.labels[i] << ',' << hh << ',' << ww << ','
           << format_number(*std::max_element(m.begin(), m.end())) << ','
           << format_number(sum / static_cast<double>(m.size()));
        for (double v : m) os << ',' << format_number(v);
        os << '\n';
        char name[64];
        std::snprintf(name, sizeof(name), "_%05zu.pgm", i);
        write_pgm(args.out / (base + name), hh, ww, to_gray(m, layer_max));
    }
    log << "sfr-heatmap: layer " << layer << ", " << maps.size() << " maps, max sfr " << format_number(layer_max)
        << '\n';
}

void scale_importance(const AnalyzeArgs& args, Restored& r, const Dataset& data, std::ostream& log) {
    const std::size_t classes = r.experiment.model.classes;
    std::vector<std::string> modules;
    std::vector<std::vector<std::vector<double>>> sums;  // [module][class][scale]
    std::vector<std::vector<std::size_t>> counts;        // [module][class]
    std::vector<std::ofstream> alpha, beta;
    Rng rng(args.seed);
    for_batches(*r.model, data, r.experiment.eval_batch_size, false, rng,
                [&](const model::ForwardResult& res, std::size_t begin, std::size_t end) {
                    if (modules.empty()) {
                        for (const auto& rec : res.sma) {
                            modules.push_back(rec.name);
                            const std::size_t n = rec.w_alpha.shape()[1];
                            sums.emplace_back(classes, std::vector<double>(n, 0.0));
                            counts.emplace_back(classes, 0);
                            alpha.push_back(open_out(args.out / ("sma_alpha_" + file_safe(rec.name) + ".csv")));
                            beta.push_back(open_out(args.out / ("sma_beta_" + file_safe(rec.name) + ".csv")));
                            attention::write_alpha_header(alpha.back());
                            attention::write_beta_header(beta.back());
                        }
                    }
                    for (std::size_t k = 0; k < res.sma.size(); ++k) {
                        const auto& rec = res.sma[k];
                        for (std::size_t b = 0; b < end - begin; ++b) {
                            const std::size_t i = begin + b;
                            const auto y = static_cast<std::size_t>(data.labels[i]);
                            const auto imp = attention::scale_importance(rec.w_alpha, rec.w_beta, b);
                            for (std::size_t n = 0; n < imp.size(); ++n) sums[k][y][n] += imp[n];
                            ++counts[k][y];
                            attention::write_alpha_rows(alpha[k], rec.w_alpha, b, sample_id(data, i));
                            attention::write_beta_rows(beta[k], rec.w_beta, b, sample_id(data, i));
                        }
                    }
                });
    auto os = open_out(args.out / "scale_importance.csv");
    os << "module,class,scale,kernel,importance,samples\n";
    const auto& kernels = r.experiment.model.sma.kernels;
    for (std::size_t k = 0; k < modules.size(); ++k) {
        for (std::size_t y = 0; y < classes; ++y) {
            if (counts[k][y] == 0) continue;
            for (std::size_t n = 0; n < sums[k][y].size(); ++n) {
                os << modules[k] << ',' << y << ',' << n << ',' << kernels[n] << ','
                   << format_number(sums[k][y][n] / static_cast<double>(counts[k][y])) << ',' << counts[k][y]
                   << '\n';
            }
        }
    }
    log << "scale-importance: " << modules.size() << " SMA modules\n";
}

void azo_report(const AnalyzeArgs& args, const Dataset& data, const std::filesystem::path& ckpt, std::ostream& log) {
    // AZO runs only in training mode; the model is rebuilt with it switched on.
    Restored r = restore(ckpt, args.config, true);
    std::vector<std::ofstream> files;
    std::size_t replaced = 0;
    Rng rng(args.seed);
    for_batches(*r.model, data, r.experiment.eval_batch_size, true, rng,
                [&](const model::ForwardResult& res, std::size_t begin, std::size_t) {
                    if (files.empty()) {
                        for (const auto& rec : res.sma) {
                            files.push_back(open_out(args.out / ("azo_" + file_safe(rec.name) + ".csv")));
                            attention::write_azo_header(files.back());
                        }
                    }
                    for (std::size_t k = 0; k < res.sma.size(); ++k) {
                        const auto& reps = res.sma[k].azo;
                        for (std::size_t b = 0; b < reps.size(); ++b) {
                            attention::write_azo_rows(files[k], reps[b], sample_id(data, begin + b));
                            replaced += reps[b].replaced_sites;
                        }
                    }
                });
    log << "azo-report: " << files.size() << " SMA modules, " << replaced << " replaced sites\n";
}

}  // namespace

void cmd_analyze(const AnalyzeArgs& args, std::ostream& log) {
    if (args.outputs.empty()) throw ConfigError("analyze needs at least one output");
    const auto ckpt = resolve_checkpoint(args.checkpoint, args.run);
    Restored r = restore(ckpt, args.config);
    const Dataset data = head(pick_split(r, args.split), args.max_samples);
    std::filesystem::create_directories(args.out);
    for (const auto& what : args.outputs) {
        if (what == "sfr-heatmap") {
            sfr_heatmap(args, r, data, log);
        } else if (what == "spike-counts") {
            const auto res = train::evaluate(*r.model, data, r.experiment.loss, r.experiment.eval_batch_size);
            train::write_spike_counts_csv(args.out / "spike_counts.csv", data, res);
            log << "spike-counts: total " << format_number(res.total_spikes()) << '\n';
        } else if (what == "scale-importance") {
            scale_importance(args, r, data, log);
        } else if (what == "azo-report") {
            azo_report(args, data, ckpt, log);
        } else {
            throw ConfigError("unknown analysis output '" + what +
                              "' (expected sfr-heatmap, spike-counts, scale-importance or azo-report)");
        }
    }
}

}  // namespace snn::cli
