#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "snn/attention/azo.hpp"
#include "snn/attention/sma.hpp"
#include "snn/core/rng.hpp"
#include "snn/model/config.hpp"
#include "snn/neuron/lif.hpp"
#include "snn/tensor/params.hpp"

namespace snn::model {

enum class Policy { T1, T2, T3, T4, S1, S2, S3, S4 };
enum class Location { L1, L2, L3 };

struct Placement {
    Policy policy = Policy::T3;
    Location location = Location::L1;
};

Policy parse_policy(const std::string& s);
Location parse_location(const std::string& s);
std::string to_string(Policy p);
std::string to_string(Location l);

/// Which of n blocks (index 0 = encoding block) carry an SMA module.
///   T1 none, T2 {0}, T3 all but 0, T4 all,
///   S1 odd 1-based numbers > 1, S2 even 1-based numbers,
///   S3 1-based 2 .. ceil(n/2), S4 1-based ceil(n/2)+1 .. n.
std::vector<bool> sma_blocks(Policy policy, std::size_t n);

enum class Arch { Vgg, MsResNet };

struct ConvBlockSpec {
    std::size_t width = 16;
    int kernel = 3;
    bool pool = true;  // MaxPool(2, 2, 0)
};

struct StageSpec {
    std::size_t width = 16;
    std::size_t blocks = 2;
    bool bottleneck = false;  // 1x1 -> 3x3 -> 1x1 residual branch at width / 4
};

inline std::size_t bottleneck_width(const StageSpec& s) { return s.width / 4; }

struct ModelSpec {
    Arch arch = Arch::Vgg;
    std::size_t classes = 4;
    Placement placement;
    std::vector<ConvBlockSpec> blocks{{16, 3, true}, {32, 3, true}, {64, 3, true}};
    // MS-ResNet
    std::size_t stem_width = 16;
    int stem_kernel = 3;
    std::vector<StageSpec> stages{{16, 2}, {32, 2}};
    // Head: adaptive average pool to head_pool x head_pool, then
    // FC(hidden) -> LIF -> Dropout (skipped when hidden == 0), then FC(classes).
    std::size_t head_pool = 1;
    std::size_t hidden = 64;
    double dropout = 0.5;

    neuron::NeuronConfig neuron;
    attention::SmaConfig sma;
    bool azo_enabled = false;
    attention::AzoConfig azo;

    /// Throws ConfigError on inconsistent settings, including L2 placement.
    void validate() const;
};

/// Reads [model], [block]*, [stage]*, [neuron], [sma], [azo] sections.
ModelSpec parse_model_spec(const ConfigFile& cfg);
/// Inverse of parse_model_spec; replaces those sections in `cfg`.
void write_model_spec(const ModelSpec& spec, ConfigFile& cfg);

struct ForwardContext {
    bool train = false;
    Rng* rng = nullptr;      // dropout; required when train
    bool use_azo = true;     // AZO runs only if also train and spec.azo_enabled
    bool record = false;     // keep spike and SMA traces in the result
};

struct LayerSpikes {
    std::string name;
    Value spikes;  // [B, T, ...]
};

struct SmaRecord {
    std::string name;
    Value w_alpha;  // [B, N, T]
    Value w_beta;   // [B, T, N, C]
    std::vector<attention::AzoReport> azo;  // per sample, training passes only
};

struct ForwardResult {
    Value logits;  // [B, T, classes]
    Value features;  // input of the head, [B, T, C, H, W]
    std::vector<LayerSpikes> spikes;
    std::vector<SmaRecord> sma;
};

class Layer;

class Model {
public:
    /// input: [T, C, H, W] of one sample.
    Model(ModelSpec spec, Shape input, std::uint64_t seed);
    ~Model();
    Model(Model&&) noexcept;
    Model& operator=(Model&&) noexcept;

    /// x: [B, T, C, H, W] (or [T, C, H, W] for one sample).
    ForwardResult forward(const Value& x, ForwardContext& ctx);

    const ModelSpec& spec() const { return *spec_; }
    const Shape& input_shape() const { return input_; }
    ParamRefs& params() { return refs_; }
    std::vector<Value> trainable() const;
    std::size_t param_count() const { return refs_.count(); }
    std::size_t sma_param_count() const;
    std::size_t sma_count() const;
    /// Names of spiking layers, in forward order.
    std::vector<std::string> spiking_layers() const;
    /// Shape of the head input for one sample: [T, C, H, W].
    Shape feature_shape() const { return feature_; }
    std::vector<attention::SmaModule*> sma_modules();

private:
    std::unique_ptr<ModelSpec> spec_;  // layers keep references into it
    Shape input_;
    Shape feature_;
    std::vector<std::unique_ptr<Layer>> layers_;
    ParamRefs refs_;
};

// ---- parameter container ------------------------------------------------------
// Little-endian layout:
//   "SNNP" | u32 version | u64 meta_len | meta bytes | u64 entry_count
//   entry: u8 kind (0 parameter, 1 buffer) | u32 name_len | name | u32 rank |
//          u64 dims[rank] | f64 data[numel]

inline constexpr std::uint32_t kParamsVersion = 1;

/// `metadata` is free text; the CLI stores the resolved config there.
void save_params(Model& model, const std::filesystem::path& path, const std::string& metadata = "");
/// Validates every name and shape against the model before copying.
void load_params(Model& model, const std::filesystem::path& path);
/// Metadata of a container without loading parameters.
std::string read_params_metadata(const std::filesystem::path& path);

}  // namespace snn::model
