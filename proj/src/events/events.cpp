#include "snn/events/events.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "snn/core/error.hpp"

namespace snn::events {

void EventStream::validate() const {
    for (std::size_t i = 0; i < events.size(); ++i) {
        const Event& e = events[i];
        if (e.x >= width || e.y >= height || e.p > 1) {
            throw std::invalid_argument("stream '" + name + "': event " + std::to_string(i) +
                                        " outside " + std::to_string(width) + "x" + std::to_string(height));
        }
    }
}

double FrameTensor::total() const {
    double s = 0.0;
    for (double v : data) s += v;
    return s;
}

std::pair<std::size_t, std::size_t> slice_bounds(std::size_t n_events, std::size_t steps, std::size_t j) {
    const std::size_t width = n_events / steps;
    const std::size_t left = width * j;
    const std::size_t right = (j + 1 < steps) ? width * (j + 1) : n_events;
    return {left, right};
}

FrameTensor bin_events(const EventStream& stream, std::size_t steps) {
    const std::size_t n = stream.events.size();
    if (steps == 0) throw std::invalid_argument("bin_events: T must be positive");
    if (steps > n) {
        throw std::invalid_argument("bin_events: stream '" + stream.name + "' has " + std::to_string(n) +
                                    " events, fewer than T=" + std::to_string(steps));
    }
    stream.validate();
    FrameTensor f(steps, 2, stream.height, stream.width);
    for (std::size_t j = 0; j < steps; ++j) {
        const auto [lo, hi] = slice_bounds(n, steps, j);
        for (std::size_t i = lo; i < hi; ++i) {
            const Event& e = stream.events[i];
            f.at(j, e.p, e.y, e.x) += 1.0;
        }
    }
    return f;
}

FrameTensor flip_horizontal(const FrameTensor& in) {
    FrameTensor out(in.steps, in.channels, in.height, in.width);
    for (std::size_t t = 0; t < in.steps; ++t)
        for (std::size_t c = 0; c < in.channels; ++c)
            for (std::size_t y = 0; y < in.height; ++y)
                for (std::size_t x = 0; x < in.width; ++x) out.at(t, c, y, in.width - 1 - x) = in.at(t, c, y, x);
    return out;
}

FrameTensor translate(const FrameTensor& in, int dy, int dx) {
    FrameTensor out(in.steps, in.channels, in.height, in.width);
    const long h = static_cast<long>(in.height), w = static_cast<long>(in.width);
    for (std::size_t t = 0; t < in.steps; ++t)
        for (std::size_t c = 0; c < in.channels; ++c)
            for (long y = 0; y < h; ++y) {
                const long ty = y + dy;
                if (ty < 0 || ty >= h) continue;
                for (long x = 0; x < w; ++x) {
                    const long tx = x + dx;
                    if (tx < 0 || tx >= w) continue;
                    out.at(t, c, static_cast<std::size_t>(ty), static_cast<std::size_t>(tx)) =
                        in.at(t, c, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
                }
            }
    return out;
}

FrameTensor augment(const FrameTensor& frames, Rng& rng, const AugmentPolicy& policy) {
    if (policy.max_dy < 0 || policy.max_dx < 0 || static_cast<std::size_t>(policy.max_dy) >= frames.height ||
        static_cast<std::size_t>(policy.max_dx) >= frames.width) {
        throw std::invalid_argument("augment: translation bounds must be smaller than the frame");
    }
    const bool flip = rng.bernoulli(policy.hflip_p);
    const int dy = static_cast<int>(rng.between(-policy.max_dy, policy.max_dy));
    const int dx = static_cast<int>(rng.between(-policy.max_dx, policy.max_dx));
    FrameTensor out = flip ? flip_horizontal(frames) : frames;
    if (dy != 0 || dx != 0) out = translate(out, dy, dx);
    return out;
}

// ---- synthetic gestures --------------------------------------------------------

Motion motion_for_class(int label) { return static_cast<Motion>(label % 8); }

std::pair<double, double> Trajectory::at(double s) const {
    const double u = reversed ? 1.0 - s : s;
    switch (motion) {
        case Motion::OrbitCw:
        case Motion::OrbitCcw:
        case Motion::OrbitCwSmall:
        case Motion::OrbitCcwSmall: {
            // Image rows grow downward, so increasing angle turns clockwise on screen.
            const double th = phase + 2.0 * std::numbers::pi * u;
            return {cx + radius * std::cos(th), cy + radius * std::sin(th)};
        }
        default:
            return {x0 + (x1 - x0) * u, y0 + (y1 - y0) * u};
    }
}

double Trajectory::distance(double x, double y) const {
    double best = 1e300;
    constexpr int kSamples = 4096;
    for (int i = 0; i <= kSamples; ++i) {
        const auto [px, py] = at(static_cast<double>(i) / kSamples);
        best = std::min(best, std::hypot(px - x, py - y));
    }
    return best;
}

namespace {

Trajectory make_trajectory(Motion m, int label, int h, int w, Rng& rng) {
    Trajectory tr{};
    tr.motion = m;
    const double side = std::min(h, w);
    const double jitter = side / 10.0;
    tr.cx = (w - 1) / 2.0 + rng.uniform(-jitter, jitter);
    tr.cy = (h - 1) / 2.0 + rng.uniform(-jitter, jitter);
    // Classes beyond the first eight reuse motions at a different scale.
    const double scale = 1.0 - 0.15 * static_cast<double>((label / 8) % 3);
    const bool small = m == Motion::OrbitCwSmall || m == Motion::OrbitCcwSmall;
    tr.radius = side * (small ? 0.12 : 0.30) * scale;
    tr.phase = -std::numbers::pi / 2.0 + rng.uniform(-std::numbers::pi / 8.0, std::numbers::pi / 8.0);
    const double reach = side * 0.32 * scale;
    switch (m) {
        case Motion::SweepRight: tr.x0 = tr.cx - reach; tr.x1 = tr.cx + reach; tr.y0 = tr.y1 = tr.cy; break;
        case Motion::SweepLeft: tr.x0 = tr.cx + reach; tr.x1 = tr.cx - reach; tr.y0 = tr.y1 = tr.cy; break;
        case Motion::SweepDown: tr.y0 = tr.cy - reach; tr.y1 = tr.cy + reach; tr.x0 = tr.x1 = tr.cx; break;
        case Motion::SweepUp: tr.y0 = tr.cy + reach; tr.y1 = tr.cy - reach; tr.x0 = tr.x1 = tr.cx; break;
        default: break;
    }
    tr.reversed = m == Motion::OrbitCcw || m == Motion::OrbitCcwSmall;
    return tr;
}

std::uint16_t clamp_pixel(double v, int extent) {
    const long r = std::lround(v);
    return static_cast<std::uint16_t>(std::clamp<long>(r, 0, extent - 1));
}

}  // namespace

std::vector<SynthSample> synth_gestures_with_paths(const SynthSpec& spec) {
    if (spec.classes < 2) throw std::invalid_argument("synth_gestures: need at least 2 classes");
    if (spec.per_class < 1 || spec.events_per_sample < 1 || spec.height < 4 || spec.width < 4) {
        throw std::invalid_argument("synth_gestures: invalid size parameters");
    }
    if (spec.noise_rate < 0.0 || spec.noise_rate > 1.0) throw std::invalid_argument("synth_gestures: noise_rate in [0,1]");
    std::vector<SynthSample> out;
    out.reserve(static_cast<std::size_t>(spec.classes * spec.per_class));
    const std::size_t n = static_cast<std::size_t>(spec.events_per_sample);
    for (int k = 0; k < spec.per_class; ++k) {
        for (int label = 0; label < spec.classes; ++label) {
            Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(label) * 1000003ULL + static_cast<std::uint64_t>(k)));
            Trajectory tr = make_trajectory(motion_for_class(label), label, spec.height, spec.width, rng);
            // Events are generated along the forward path and reversed afterwards
            // for counter-clockwise motion.
            Trajectory forward = tr;
            forward.reversed = false;
            EventStream s;
            s.width = static_cast<std::uint16_t>(spec.width);
            s.height = static_cast<std::uint16_t>(spec.height);
            s.label = static_cast<std::uint16_t>(label);
            s.name = "synth-c" + std::to_string(label) + "-" + std::to_string(k);
            s.events.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                Event e;
                if (rng.bernoulli(spec.noise_rate)) {
                    e.x = static_cast<std::uint16_t>(rng.below(static_cast<std::uint64_t>(spec.width)));
                    e.y = static_cast<std::uint16_t>(rng.below(static_cast<std::uint64_t>(spec.height)));
                } else {
                    const double pos = (static_cast<double>(i) + rng.uniform()) / static_cast<double>(n);
                    const auto [px, py] = forward.at(pos);
                    e.x = clamp_pixel(px, spec.width);
                    e.y = clamp_pixel(py, spec.height);
                }
                e.p = static_cast<std::uint8_t>(rng.below(2));
                s.events[i] = e;
            }
            if (tr.reversed) std::reverse(s.events.begin(), s.events.end());
            out.push_back({std::move(s), tr});
        }
    }
    return out;
}

std::vector<EventStream> synth_gestures(const SynthSpec& spec) {
    std::vector<EventStream> out;
    for (auto& s : synth_gestures_with_paths(spec)) out.push_back(std::move(s.stream));
    return out;
}

std::pair<std::vector<EventStream>, std::vector<EventStream>> split_dataset(
    const std::vector<EventStream>& streams, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split_dataset: ratio must lie in (0,1)");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < streams.size(); ++i) by_class[streams[i].label].push_back(i);
    for (const auto& [label, idx] : by_class) {
        if (idx.size() < 2) {
            throw std::invalid_argument("split_dataset: class " + std::to_string(label) + " has fewer than 2 samples");
        }
    }
    const auto total_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(streams.size())));
    struct Share {
        int label;
        std::size_t count;
        double frac;
    };
    std::vector<Share> shares;
    std::size_t assigned = 0;
    for (const auto& [label, idx] : by_class) {
        const double exact = ratio * static_cast<double>(idx.size());
        std::size_t c = static_cast<std::size_t>(std::floor(exact));
        c = std::clamp<std::size_t>(c, 1, idx.size() - 1);
        shares.push_back({label, c, exact - std::floor(exact)});
        assigned += c;
    }
    std::vector<std::size_t> order(shares.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return shares[a].frac > shares[b].frac; });
    for (std::size_t k = 0; assigned < total_train && k < order.size() * 2; ++k) {
        Share& s = shares[order[k % order.size()]];
        if (s.count + 1 < by_class[s.label].size()) {
            ++s.count;
            ++assigned;
        }
    }

    std::vector<EventStream> train, test;
    for (const Share& s : shares) {
        std::vector<std::size_t> idx = by_class[s.label];
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(s.label)));
        rng.shuffle(idx);
        std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(s.count));
        std::sort(idx.begin() + static_cast<std::ptrdiff_t>(s.count), idx.end());
        for (std::size_t i = 0; i < idx.size(); ++i) (i < s.count ? train : test).push_back(streams[idx[i]]);
    }
    return {std::move(train), std::move(test)};
}

// ---- files ----------------------------------------------------------------

namespace {

void put_u16(std::ostream& os, std::uint16_t v) {
    const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    os.write(b, 2);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}

std::uint64_t get_le(std::istream& is, int bytes, const std::filesystem::path& path) {
    unsigned char b[8] = {};
    const auto offset = is.tellg();
    if (!is.read(reinterpret_cast<char*>(b), bytes)) {
        throw IoError("read_evs: " + path.string() + " truncated at byte offset " + std::to_string(static_cast<long long>(offset)));
    }
    std::uint64_t v = 0;
    for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

}  // namespace

void write_evs(const EventStream& s, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write("EVS1", 4);
    put_u16(os, s.width);
    put_u16(os, s.height);
    put_u16(os, s.label);
    put_u64(os, s.events.size());
    for (const Event& e : s.events) {
        put_u16(os, e.x);
        put_u16(os, e.y);
        os.put(static_cast<char>(e.p));
    }
    if (!os) throw IoError("write failed for " + path.string());
}

EventStream read_evs(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != "EVS1") {
        throw IoError("read_evs: " + path.string() + " lacks EVS1 header");
    }
    EventStream s;
    s.name = path.filename().string();
    s.width = static_cast<std::uint16_t>(get_le(is, 2, path));
    s.height = static_cast<std::uint16_t>(get_le(is, 2, path));
    s.label = static_cast<std::uint16_t>(get_le(is, 2, path));
    const std::uint64_t count = get_le(is, 8, path);
    s.events.resize(count);
    for (auto& e : s.events) {
        e.x = static_cast<std::uint16_t>(get_le(is, 2, path));
        e.y = static_cast<std::uint16_t>(get_le(is, 2, path));
        e.p = static_cast<std::uint8_t>(get_le(is, 1, path));
    }
    s.validate();
    return s;
}

void write_evt(const EventStream& s, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "EVT1 " << s.width << ' ' << s.height << ' ' << s.label << '\n';
    for (const Event& e : s.events) os << e.x << ',' << e.y << ',' << static_cast<int>(e.p) << '\n';
}

EventStream read_evt(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path.string());
    std::string tag;
    EventStream s;
    s.name = path.filename().string();
    int w = 0, h = 0, label = 0;
    if (!(is >> tag >> w >> h >> label) || tag != "EVT1") {
        throw IoError("read_evt: " + path.string() + " lacks 'EVT1 width height label' header");
    }
    s.width = static_cast<std::uint16_t>(w);
    s.height = static_cast<std::uint16_t>(h);
    s.label = static_cast<std::uint16_t>(label);
    std::string line;
    std::getline(is, line);
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        int x, y, p;
        char c1, c2;
        if (!(ls >> x >> c1 >> y >> c2 >> p) || c1 != ',' || c2 != ',' || x < 0 || y < 0 || (p != 0 && p != 1)) {
            throw IoError("read_evt: " + path.string() + " line " + std::to_string(lineno) + " is not 'x,y,p'");
        }
        s.events.push_back({static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), static_cast<std::uint8_t>(p)});
    }
    s.validate();
    return s;
}

EventStream read_stream(const std::filesystem::path& path) {
    return path.extension() == ".evt" ? read_evt(path) : read_evs(path);
}

void write_dataset(const std::vector<EventStream>& streams, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.csv");
    if (!manifest) throw IoError("cannot write manifest in " + dir.string());
    manifest << "path,label\n";
    for (std::size_t i = 0; i < streams.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%05zu.evs", i);
        write_evs(streams[i], dir / name);
        manifest << name << ',' << streams[i].label << '\n';
    }
}

std::vector<EventStream> read_dataset(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.csv";
    std::ifstream manifest(manifest_path);
    if (!manifest) throw IoError("dataset manifest not found: " + manifest_path.string());
    std::string line;
    std::getline(manifest, line);
    std::vector<EventStream> out;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw IoError("malformed manifest row: " + line);
        const std::string rel = line.substr(0, comma);
        const int label = std::stoi(line.substr(comma + 1));
        EventStream s = read_stream(dir / rel);
        if (s.label != label) {
            throw IoError("label mismatch for " + rel + ": manifest " + std::to_string(label) + ", header " +
                          std::to_string(s.label));
        }
        s.name = rel;
        out.push_back(std::move(s));
    }
    return out;
}

Value batch_frames(const std::vector<const FrameTensor*>& frames) {
    if (frames.empty()) throw std::invalid_argument("batch_frames: empty batch");
    const FrameTensor& f0 = *frames.front();
    std::vector<double> data;
    data.reserve(frames.size() * f0.data.size());
    for (const FrameTensor* f : frames) {
        if (f->shape() != f0.shape()) throw ShapeError("batch_frames: mixed frame shapes");
        data.insert(data.end(), f->data.begin(), f->data.end());
    }
    return Value::constant(Shape{frames.size(), f0.steps, f0.channels, f0.height, f0.width}, std::move(data));
}

}  // namespace snn::events
