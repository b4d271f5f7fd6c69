#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "snn/core/rng.hpp"
#include "snn/tensor/value.hpp"

namespace snn::events {

struct Event {
    std::uint16_t x = 0;  // column
    std::uint16_t y = 0;  // row
    std::uint8_t p = 0;   // polarity, 0 or 1

    friend bool operator==(const Event&, const Event&) = default;
};

/// Events in temporal order; only the order matters for binning.
struct EventStream {
    std::uint16_t width = 0;
    std::uint16_t height = 0;
    std::uint16_t label = 0;
    std::string name;
    std::vector<Event> events;

    /// Throws std::invalid_argument if any event lies outside the sensor.
    void validate() const;
};

/// Dense T x C x H x W counts (C = 2 polarities for event data).
struct FrameTensor {
    std::size_t steps = 0, channels = 0, height = 0, width = 0;
    std::vector<double> data;

    FrameTensor() = default;
    FrameTensor(std::size_t t, std::size_t c, std::size_t h, std::size_t w)
        : steps(t), channels(c), height(h), width(w), data(t * c * h * w, 0.0) {}

    std::size_t index(std::size_t t, std::size_t c, std::size_t y, std::size_t x) const {
        return ((t * channels + c) * height + y) * width + x;
    }
    double& at(std::size_t t, std::size_t c, std::size_t y, std::size_t x) { return data[index(t, c, y, x)]; }
    double at(std::size_t t, std::size_t c, std::size_t y, std::size_t x) const { return data[index(t, c, y, x)]; }
    double total() const;
    Shape shape() const { return Shape{steps, channels, height, width}; }
};

/// [j_l, j_r) event index range of slice j when N events are cut into T slices;
/// the last slice absorbs the remainder.
std::pair<std::size_t, std::size_t> slice_bounds(std::size_t n_events, std::size_t steps, std::size_t j);

/// Integrates a stream into T frames of per-(polarity, y, x) counts.
FrameTensor bin_events(const EventStream& stream, std::size_t steps);

struct AugmentPolicy {
    double hflip_p = 0.5;
    int max_dy = 0;
    int max_dx = 0;
};

FrameTensor flip_horizontal(const FrameTensor& frames);

/// Integer shift (rows down by dy, columns right by dx); exposed cells are 0
/// and content shifted off the edge is dropped.
FrameTensor translate(const FrameTensor& frames, int dy, int dx);

/// One random flip/translate drawn per sample, applied to all T frames and
/// both channels alike.
FrameTensor augment(const FrameTensor& frames, Rng& rng, const AugmentPolicy& policy);

struct SynthSpec {
    int classes = 4;
    int per_class = 50;
    int height = 32;
    int width = 32;
    int events_per_sample = 2048;
    double noise_rate = 0.05;
    std::uint64_t seed = 7;
};

/// Motion primitives the generator can draw. Class k uses kind k % 8.
enum class Motion { OrbitCw, OrbitCcw, SweepRight, OrbitCwSmall, SweepLeft, SweepDown, OrbitCcwSmall, SweepUp };

Motion motion_for_class(int label);

/// Parameters of one sample's analytic path; s in [0, 1] runs along it.
struct Trajectory {
    Motion motion;
    double cx, cy, radius, phase;
    double x0, y0, x1, y1;
    bool reversed = false;

    std::pair<double, double> at(double s) const;
    /// Minimum distance from (x, y) to the path, by dense sampling.
    double distance(double x, double y) const;
};

struct SynthSample {
    EventStream stream;
    Trajectory path;
};

/// Deterministic under spec.seed. Counter-clockwise orbits are the exact
/// time reversal of the matching clockwise orbit, so the two classes differ
/// only in temporal order.
std::vector<SynthSample> synth_gestures_with_paths(const SynthSpec& spec);
std::vector<EventStream> synth_gestures(const SynthSpec& spec);

/// Stratified split; train receives round(ratio * N) samples overall with
/// per-class shares allocated by largest remainder.
std::pair<std::vector<EventStream>, std::vector<EventStream>> split_dataset(
    const std::vector<EventStream>& streams, double ratio, std::uint64_t seed);

// ---- files -------------------------------------------------------------------
// Binary .evs (little-endian): "EVS1", u16 width, u16 height, u16 label,
// u64 count, then count records of (u16 x, u16 y, u8 p).
// Text .evt: first line "EVT1 <width> <height> <label>", then one "x,y,p" per line.

void write_evs(const EventStream& s, const std::filesystem::path& path);
EventStream read_evs(const std::filesystem::path& path);
void write_evt(const EventStream& s, const std::filesystem::path& path);
EventStream read_evt(const std::filesystem::path& path);
/// Dispatches on extension.
EventStream read_stream(const std::filesystem::path& path);

/// Writes one .evs per stream plus manifest.csv ("path,label").
void write_dataset(const std::vector<EventStream>& streams, const std::filesystem::path& dir);
std::vector<EventStream> read_dataset(const std::filesystem::path& dir);

/// Stacks samples into a [B, T, C, H, W] constant.
Value batch_frames(const std::vector<const FrameTensor*>& frames);

}  // namespace snn::events
