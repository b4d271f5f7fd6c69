#include "snn/model/model.hpp"

#include <charconv>

#include "snn/core/error.hpp"
#include "snn/tensor/ops.hpp"

namespace snn::model {

using attention::SmaModule;

Policy parse_policy(const std::string& s) {
    static const char* names[] = {"T1", "T2", "T3", "T4", "S1", "S2", "S3", "S4"};
    for (int i = 0; i < 8; ++i) {
        if (s == names[i]) return static_cast<Policy>(i);
    }
    throw ConfigError("unknown placement policy '" + s + "' (expected T1-T4 or S1-S4)");
}

Location parse_location(const std::string& s) {
    if (s == "L1") return Location::L1;
    if (s == "L2") return Location::L2;
    if (s == "L3") return Location::L3;
    throw ConfigError("unknown SMA location '" + s + "' (expected L1 or L3)");
}

std::string to_string(Policy p) {
    static const char* names[] = {"T1", "T2", "T3", "T4", "S1", "S2", "S3", "S4"};
    return names[static_cast<int>(p)];
}

std::string to_string(Location l) { return l == Location::L1 ? "L1" : l == Location::L2 ? "L2" : "L3"; }

std::vector<bool> sma_blocks(Policy policy, std::size_t n) {
    std::vector<bool> on(n, false);
    const std::size_t half = (n + 1) / 2;  // ceil(n / 2)
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t num = i + 1;  // 1-based block number
        switch (policy) {
            case Policy::T1: break;
            case Policy::T2: on[i] = i == 0; break;
            case Policy::T3: on[i] = i != 0; break;
            case Policy::T4: on[i] = true; break;
            case Policy::S1: on[i] = num > 1 && num % 2 == 1; break;
            case Policy::S2: on[i] = num % 2 == 0; break;
            case Policy::S3: on[i] = num >= 2 && num <= half; break;
            case Policy::S4: on[i] = num > half; break;
        }
    }
    return on;
}

void ModelSpec::validate() const {
    if (placement.location == Location::L2) {
        throw ConfigError(
            "SMA placement L2 (after batch norm) is not supported: networks with SMA behind the BN layer fail to "
            "converge, since attention cannot extract significance from normalized data");
    }
    if (classes < 2) throw ConfigError("model: classes must be >= 2");
    if (arch == Arch::Vgg && blocks.empty()) throw ConfigError("model: vgg needs at least one [block]");
    if (arch == Arch::MsResNet && stages.empty()) throw ConfigError("model: ms_resnet needs at least one [stage]");
    for (const auto& b : blocks) {
        if (b.width == 0 || b.kernel < 1 || b.kernel % 2 == 0) throw ConfigError("model: block width > 0 and odd kernel required");
    }
    for (const auto& s : stages) {
        if (s.width == 0 || s.blocks == 0) throw ConfigError("model: stage width and blocks must be > 0");
        if (s.bottleneck && s.width % 4 != 0) throw ConfigError("model: bottleneck stage width must be divisible by 4");
    }
    if (stem_kernel < 1 || stem_kernel % 2 == 0) throw ConfigError("model: stem_kernel must be odd");
    if (head_pool == 0) throw ConfigError("model: head_pool must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout must lie in [0, 1)");
    neuron.validate();
    if (placement.policy != Policy::T1) sma.validate();
    if (azo_enabled) azo.validate();
}

// ---- config mapping ---------------------------------------------------------

namespace {

std::string num(double v) { return format_number(v); }

std::string join(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::size_t positive(const ConfigSection& s, const std::string& key, long fallback) {
    const long v = s.get_int(key, fallback);
    if (v < 0) throw ConfigError("[" + s.name + "] " + key + " must be non-negative");
    return static_cast<std::size_t>(v);
}

neuron::NeuronConfig parse_neuron(const ConfigSection* s) {
    neuron::NeuronConfig n;
    if (!s) return n;
    s->require_known({"tau", "u_threshold", "u_reset", "surrogate", "alpha", "window", "detach_reset"});
    n.tau = s->get_double("tau", n.tau);
    n.u_threshold = s->get_double("u_threshold", n.u_threshold);
    n.u_reset = s->get_double("u_reset", n.u_reset);
    const std::string sur = s->get_string("surrogate", "atan");
    if (sur == "atan") {
        n.surrogate = neuron::ATan{s->get_double("alpha", 2.0)};
    } else if (sur == "rect") {
        n.surrogate = neuron::RectWindow{s->get_double("window", 1.0)};
    } else {
        throw ConfigError("[neuron] surrogate must be atan or rect, got '" + sur + "'");
    }
    n.detach_reset = s->get_bool("detach_reset", n.detach_reset);
    return n;
}

}  // namespace

ModelSpec parse_model_spec(const ConfigFile& cfg) {
    ModelSpec spec;
    if (const auto* m = cfg.first("model")) {
        m->require_known({"arch", "classes", "placement", "location", "head_pool", "hidden", "dropout", "stem_width",
                          "stem_kernel"});
        const std::string arch = m->get_string("arch", "vgg");
        if (arch == "vgg") {
            spec.arch = Arch::Vgg;
        } else if (arch == "ms_resnet") {
            spec.arch = Arch::MsResNet;
        } else {
            throw ConfigError("[model] arch must be vgg or ms_resnet, got '" + arch + "'");
        }
        spec.classes = positive(*m, "classes", 4);
        spec.placement.policy = parse_policy(m->get_string("placement", "T3"));
        spec.placement.location = parse_location(m->get_string("location", "L1"));
        spec.head_pool = positive(*m, "head_pool", 1);
        spec.hidden = positive(*m, "hidden", static_cast<long>(spec.hidden));
        spec.dropout = m->get_double("dropout", spec.dropout);
        spec.stem_width = positive(*m, "stem_width", static_cast<long>(spec.stem_width));
        spec.stem_kernel = static_cast<int>(m->get_int("stem_kernel", spec.stem_kernel));
    }
    const auto blocks = cfg.all("block");
    if (!blocks.empty()) {
        spec.blocks.clear();
        for (const auto* b : blocks) {
            b->require_known({"width", "kernel", "pool"});
            spec.blocks.push_back({positive(*b, "width", 16), static_cast<int>(b->get_int("kernel", 3)), b->get_bool("pool", true)});
        }
    }
    const auto stages = cfg.all("stage");
    if (!stages.empty()) {
        spec.stages.clear();
        for (const auto* s : stages) {
            s->require_known({"width", "blocks", "bottleneck"});
            spec.stages.push_back({positive(*s, "width", 16), positive(*s, "blocks", 2), s->get_bool("bottleneck", false)});
        }
    }
    spec.neuron = parse_neuron(cfg.first("neuron"));
    if (const auto* s = cfg.first("sma")) {
        s->require_known({"kernels", "scales", "cr", "tr", "activation"});
        if (s->has("kernels")) {
            spec.sma.kernels = s->get_int_list("kernels", {});
        } else if (s->has("scales")) {
            spec.sma.kernels = attention::default_kernels(positive(*s, "scales", 4));
        }
        spec.sma.cr = static_cast<int>(s->get_int("cr", spec.sma.cr));
        spec.sma.tr = static_cast<int>(s->get_int("tr", spec.sma.tr));
        const std::string act = s->get_string("activation", "relu");
        if (act == "relu") {
            spec.sma.activation = attention::EncoderActivation::ReLU;
        } else if (act == "lif") {
            spec.sma.activation = attention::EncoderActivation::LIF;
        } else {
            throw ConfigError("[sma] activation must be relu or lif, got '" + act + "'");
        }
    }
    spec.sma.neuron = spec.neuron;
    if (const auto* a = cfg.first("azo")) {
        a->require_known({"enabled", "rtr", "rcr", "reduce", "guard"});
        spec.azo_enabled = a->get_bool("enabled", true);
        spec.azo.rtr = a->get_double("rtr", spec.azo.rtr);
        spec.azo.rcr = a->get_double("rcr", spec.azo.rcr);
        const std::string red = a->get_string("reduce", "mean");
        if (red != "mean" && red != "max") throw ConfigError("[azo] reduce must be mean or max");
        spec.azo.reduce = red == "max" ? attention::ScaleReduce::Max : attention::ScaleReduce::Mean;
        const std::string guard = a->get_string("guard", "time");
        if (guard != "time" && guard != "channel") throw ConfigError("[azo] guard must be time or channel");
        spec.azo.guard = guard == "channel" ? attention::AzoGuard::Channel : attention::AzoGuard::Time;
    }
    spec.validate();
    return spec;
}

void write_model_spec(const ModelSpec& spec, ConfigFile& cfg) {
    for (const char* name : {"model", "block", "stage", "neuron", "sma", "azo"}) cfg.remove_all(name);
    auto& m = cfg.append("model");
    m.set("arch", spec.arch == Arch::Vgg ? "vgg" : "ms_resnet");
    m.set("classes", std::to_string(spec.classes));
    m.set("placement", to_string(spec.placement.policy));
    m.set("location", to_string(spec.placement.location));
    m.set("head_pool", std::to_string(spec.head_pool));
    m.set("hidden", std::to_string(spec.hidden));
    m.set("dropout", num(spec.dropout));
    if (spec.arch == Arch::Vgg) {
        for (const auto& b : spec.blocks) {
            auto& s = cfg.append("block");
            s.set("width", std::to_string(b.width));
            s.set("kernel", std::to_string(b.kernel));
            s.set("pool", b.pool ? "true" : "false");
        }
    } else {
        m.set("stem_width", std::to_string(spec.stem_width));
        m.set("stem_kernel", std::to_string(spec.stem_kernel));
        for (const auto& st : spec.stages) {
            auto& s = cfg.append("stage");
            s.set("width", std::to_string(st.width));
            s.set("blocks", std::to_string(st.blocks));
            s.set("bottleneck", st.bottleneck ? "true" : "false");
        }
    }
    auto& n = cfg.append("neuron");
    n.set("tau", num(spec.neuron.tau));
    n.set("u_threshold", num(spec.neuron.u_threshold));
    n.set("u_reset", num(spec.neuron.u_reset));
    if (const auto* a = std::get_if<neuron::ATan>(&spec.neuron.surrogate)) {
        n.set("surrogate", "atan");
        n.set("alpha", num(a->alpha));
    } else {
        n.set("surrogate", "rect");
        n.set("window", num(std::get<neuron::RectWindow>(spec.neuron.surrogate).width));
    }
    n.set("detach_reset", spec.neuron.detach_reset ? "true" : "false");
    auto& s = cfg.append("sma");
    s.set("kernels", join(spec.sma.kernels));
    s.set("cr", std::to_string(spec.sma.cr));
    s.set("tr", std::to_string(spec.sma.tr));
    s.set("activation", spec.sma.activation == attention::EncoderActivation::ReLU ? "relu" : "lif");
    auto& a = cfg.append("azo");
    a.set("enabled", spec.azo_enabled ? "true" : "false");
    a.set("rtr", num(spec.azo.rtr));
    a.set("rcr", num(spec.azo.rcr));
    a.set("reduce", spec.azo.reduce == attention::ScaleReduce::Max ? "max" : "mean");
    a.set("guard", spec.azo.guard == attention::AzoGuard::Channel ? "channel" : "time");
}

// ---- layers -----------------------------------------------------------------

struct BatchNorm {
    Value gamma, beta;
    ops::BatchNormStats stats;

    explicit BatchNorm(std::size_t c)
        : gamma(Value::parameter(Shape{c}, std::vector<double>(c, 1.0))),
          beta(Value::parameter(Shape{c}, std::vector<double>(c, 0.0))),
          stats(c) {}

    Value operator()(const Value& x, bool train) {
        ops::BatchNormOptions o;
        o.train = train;
        return ops::batch_norm(x, gamma, beta, stats, o);
    }

    void collect(const std::string& p, ParamRefs& refs) {
        refs.add(p + ".gamma", gamma);
        refs.add(p + ".beta", beta);
        refs.add_buffer(p + ".running_mean", stats.running_mean);
        refs.add_buffer(p + ".running_var", stats.running_var);
    }
};

/// An SMA module together with the AZO wiring on its output.
struct SmaSite {
    std::string name;
    std::unique_ptr<SmaModule> module;

    Value operator()(const Value& x, ForwardContext& ctx, ForwardResult& res, const ModelSpec& spec) {
        attention::SmaOutput out = module->forward(x, ctx.train);
        SmaRecord rec{name, out.w_alpha, out.w_beta, {}};
        Value z = out.z;
        if (ctx.train && ctx.use_azo && spec.azo_enabled) {
            z = attention::azo_apply(z, out.w_alpha, out.w_beta, spec.azo, true, ctx.record ? &rec.azo : nullptr);
        }
        if (ctx.record) res.sma.push_back(std::move(rec));
        return z;
    }
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual Value forward(const Value& x, ForwardContext& ctx, ForwardResult& res) = 0;
    virtual void collect(ParamRefs& refs) = 0;
    virtual void spiking(std::vector<std::string>& names) const = 0;
    virtual void smas(std::vector<SmaModule*>&) {}
};

namespace {

Value conv_kernel(std::size_t out, std::size_t in, int k, Rng& rng) {
    const auto kk = static_cast<std::size_t>(k);
    return kaiming_uniform(Shape{out, in, kk, kk}, in * kk * kk, rng);
}

Value lif(const Value& x, const ModelSpec& spec) { return neuron::lif_sequence(x, spec.neuron, 1); }

void record_spikes(ForwardContext& ctx, ForwardResult& res, const std::string& name, const Value& s) {
    if (ctx.record) res.spikes.push_back({name, s});
}

std::unique_ptr<SmaModule> make_sma(const ModelSpec& spec, std::size_t steps, std::size_t channels, Rng& rng) {
    return std::make_unique<SmaModule>(steps, channels, spec.sma, rng);
}

/// Conv -> [SMA @ L1] -> BN -> LIF -> [SMA @ L3] -> MaxPool.
class ConvBlock final : public Layer {
public:
    ConvBlock(std::string name, const ModelSpec& spec, const ConvBlockSpec& b, std::size_t in, std::size_t steps,
              bool with_sma, Rng& rng)
        : name_(std::move(name)), spec_(spec), b_(b), w_(conv_kernel(b.width, in, b.kernel, rng)), bn_(b.width) {
        if (with_sma) sma_ = SmaSite{name_ + ".sma", make_sma(spec, steps, b.width, rng)};
    }

    Value forward(const Value& x, ForwardContext& ctx, ForwardResult& res) override {
        Value v = ops::conv2d(x, w_, Value(), 1, ops::same_padding(b_.kernel));
        const bool l1 = spec_.placement.location == Location::L1;
        if (sma_.module && l1) v = sma_(v, ctx, res, spec_);
        v = bn_(v, ctx.train);
        v = lif(v, spec_);
        record_spikes(ctx, res, name_ + ".lif", v);
        if (sma_.module && !l1) v = sma_(v, ctx, res, spec_);
        if (b_.pool) v = ops::max_pool2d(v, 2, 2, 0);
        return v;
    }

    void collect(ParamRefs& refs) override {
        refs.add(name_ + ".conv.weight", w_);
        if (sma_.module) sma_.module->collect(sma_.name, refs);
        bn_.collect(name_ + ".bn", refs);
    }

    void spiking(std::vector<std::string>& names) const override { names.push_back(name_ + ".lif"); }
    void smas(std::vector<SmaModule*>& out) override {
        if (sma_.module) out.push_back(sma_.module.get());
    }

private:
    std::string name_;
    const ModelSpec& spec_;
    ConvBlockSpec b_;
    Value w_;
    BatchNorm bn_;
    SmaSite sma_;
};

/// Encoding conv-BN of the MS-ResNet; its output is a membrane current.
class Stem final : public Layer {
public:
    Stem(const ModelSpec& spec, std::size_t in, std::size_t steps, bool with_sma, Rng& rng)
        : spec_(spec), w_(conv_kernel(spec.stem_width, in, spec.stem_kernel, rng)), bn_(spec.stem_width) {
        if (with_sma) sma_ = SmaSite{"stem.sma", make_sma(spec, steps, spec.stem_width, rng)};
    }

    Value forward(const Value& x, ForwardContext& ctx, ForwardResult& res) override {
        Value v = ops::conv2d(x, w_, Value(), 1, ops::same_padding(spec_.stem_kernel));
        if (sma_.module) v = sma_(v, ctx, res, spec_);
        return bn_(v, ctx.train);
    }

    void collect(ParamRefs& refs) override {
        refs.add("stem.conv.weight", w_);
        if (sma_.module) sma_.module->collect(sma_.name, refs);
        bn_.collect("stem.bn", refs);
    }

    void spiking(std::vector<std::string>&) const override {}
    void smas(std::vector<SmaModule*>& out) override {
        if (sma_.module) out.push_back(sma_.module.get());
    }

private:
    const ModelSpec& spec_;
    Value w_;
    BatchNorm bn_;
    SmaSite sma_;
};

/// Membrane-shortcut block. Basic: x + BN(Conv3(LIF(BN(Conv3(LIF(x)))))).
/// Bottleneck: the residual branch is 1x1 (width/4) -> 3x3 (width/4) -> 1x1
/// (width), each conv preceded by LIF and followed by BN. A 1x1 conv-BN
/// projection sits on the shortcut when width or stride change. The SMA
/// module attaches to the first 3x3 conv (L1: after the conv, L3: after the
/// LIF that follows its BN).
class MsBlock final : public Layer {
public:
    MsBlock(std::string name, const ModelSpec& spec, std::size_t in, const StageSpec& st, int stride, std::size_t steps,
            bool with_sma, Rng& rng)
        : name_(std::move(name)), spec_(spec) {
        const std::size_t out = st.width;
        if (st.bottleneck) {
            const std::size_t mid = bottleneck_width(st);
            add_conv(mid, in, 1, 1, rng);
            add_conv(mid, mid, 3, stride, rng);
            add_conv(out, mid, 1, 1, rng);
            sma_at_ = 1;
        } else {
            add_conv(out, in, 3, stride, rng);
            add_conv(out, out, 3, 1, rng);
            sma_at_ = 0;
        }
        if (in != out || stride != 1) {
            proj_ = conv_kernel(out, in, 1, rng);
            proj_bn_ = std::make_unique<BatchNorm>(out);
        }
        proj_stride_ = stride;
        if (with_sma) sma_ = SmaSite{name_ + ".sma", make_sma(spec, steps, convs_[sma_at_].w.shape()[0], rng)};
    }

    Value forward(const Value& x, ForwardContext& ctx, ForwardResult& res) override {
        const bool l1 = spec_.placement.location == Location::L1;
        Value h = lif(x, spec_);
        record_spikes(ctx, res, name_ + ".lif1", h);
        Value v;
        for (std::size_t i = 0; i < convs_.size(); ++i) {
            auto& c = convs_[i];
            v = ops::conv2d(h, c.w, Value(), c.stride, ops::same_padding(c.kernel));
            if (sma_.module && l1 && i == sma_at_) v = sma_(v, ctx, res, spec_);
            v = c.bn(v, ctx.train);
            if (i + 1 < convs_.size()) {
                h = lif(v, spec_);
                record_spikes(ctx, res, name_ + ".lif" + std::to_string(i + 2), h);
                if (sma_.module && !l1 && i == sma_at_) h = sma_(h, ctx, res, spec_);
            }
        }
        const Value shortcut =
            proj_.defined() ? (*proj_bn_)(ops::conv2d(x, proj_, Value(), proj_stride_, 0), ctx.train) : x;
        return ops::add(v, shortcut);
    }

    void collect(ParamRefs& refs) override {
        for (std::size_t i = 0; i < convs_.size(); ++i) {
            const std::string k = std::to_string(i + 1);
            refs.add(name_ + ".conv" + k + ".weight", convs_[i].w);
            if (sma_.module && i == sma_at_) sma_.module->collect(sma_.name, refs);
            convs_[i].bn.collect(name_ + ".bn" + k, refs);
        }
        if (proj_.defined()) {
            refs.add(name_ + ".proj.weight", proj_);
            proj_bn_->collect(name_ + ".proj_bn", refs);
        }
    }

    void spiking(std::vector<std::string>& names) const override {
        for (std::size_t i = 0; i < convs_.size(); ++i) names.push_back(name_ + ".lif" + std::to_string(i + 1));
    }
    void smas(std::vector<SmaModule*>& out) override {
        if (sma_.module) out.push_back(sma_.module.get());
    }

private:
    struct ConvBn {
        Value w;
        BatchNorm bn;
        int kernel, stride;
    };

    void add_conv(std::size_t out, std::size_t in, int k, int stride, Rng& rng) {
        convs_.push_back({conv_kernel(out, in, k, rng), BatchNorm(out), k, stride});
    }

    std::string name_;
    const ModelSpec& spec_;
    std::vector<ConvBn> convs_;
    std::size_t sma_at_ = 0;
    Value proj_;
    int proj_stride_ = 1;
    std::unique_ptr<BatchNorm> proj_bn_;
    SmaSite sma_;
};

/// [LIF (MS-ResNet only)] -> AvgPool -> [FC -> LIF -> Dropout] -> FC.
/// The last FC emits real-valued per-timestep logits.
class Head final : public Layer {
public:
    Head(const ModelSpec& spec, const Shape& feature, bool spike_input, Rng& rng)
        : spec_(spec), spike_input_(spike_input) {
        const std::size_t c = feature[1], h = feature[2], w = feature[3];
        if (h % spec.head_pool != 0 || w % spec.head_pool != 0 || h / spec.head_pool != w / spec.head_pool) {
            throw ConfigError("model: head_pool " + std::to_string(spec.head_pool) + " does not tile the " +
                              std::to_string(h) + "x" + std::to_string(w) + " feature map");
        }
        window_ = static_cast<int>(h / spec.head_pool);
        const std::size_t flat = c * spec.head_pool * spec.head_pool;
        std::size_t in = flat;
        if (spec.hidden > 0) {
            fc1_w_ = kaiming_uniform(Shape{spec.hidden, flat}, flat, rng);
            fc1_b_ = Value::parameter(Shape{spec.hidden}, std::vector<double>(spec.hidden, 0.0));
            in = spec.hidden;
        }
        fc2_w_ = kaiming_uniform(Shape{spec.classes, in}, in, rng);
        fc2_b_ = Value::parameter(Shape{spec.classes}, std::vector<double>(spec.classes, 0.0));
    }

    Value forward(const Value& x, ForwardContext& ctx, ForwardResult& res) override {
        Value v = x;
        if (spike_input_) {
            v = lif(v, spec_);
            record_spikes(ctx, res, "head.lif0", v);
        }
        v = window_ == 1 ? v : ops::avg_pool2d(v, window_);
        const Shape& s = v.shape();
        v = ops::reshape(v, Shape{s[0], s[1], s[2] * s[3] * s[4]});
        if (fc1_w_.defined()) {
            v = lif(ops::affine(v, fc1_w_, fc1_b_), spec_);
            record_spikes(ctx, res, "head.lif1", v);
            if (ctx.train && spec_.dropout > 0.0) {
                if (!ctx.rng) throw std::invalid_argument("model: training forward needs an rng for dropout");
                v = ops::dropout(v, spec_.dropout, *ctx.rng, true);
            }
        }
        return ops::affine(v, fc2_w_, fc2_b_);
    }

    void collect(ParamRefs& refs) override {
        if (fc1_w_.defined()) {
            refs.add("head.fc1.weight", fc1_w_);
            refs.add("head.fc1.bias", fc1_b_);
        }
        refs.add("head.fc2.weight", fc2_w_);
        refs.add("head.fc2.bias", fc2_b_);
    }

    void spiking(std::vector<std::string>& names) const override {
        if (spike_input_) names.push_back("head.lif0");
        if (fc1_w_.defined()) names.push_back("head.lif1");
    }

private:
    const ModelSpec& spec_;
    bool spike_input_;
    int window_ = 1;
    Value fc1_w_, fc1_b_, fc2_w_, fc2_b_;
};

}  // namespace

Model::Model(ModelSpec spec_in, Shape input, std::uint64_t seed)
    : spec_(std::make_unique<ModelSpec>(std::move(spec_in))), input_(std::move(input)) {
    ModelSpec& spec = *spec_;
    spec.validate();
    spec.sma.neuron = spec.neuron;
    if (input_.rank() != 4) throw ShapeError("model: input shape must be [T,C,H,W], got " + input_.str());
    Rng rng(seed);
    const std::size_t T = input_[0];
    std::size_t c = input_[1], h = input_[2], w = input_[3];
    if (spec.arch == Arch::Vgg) {
        const auto on = sma_blocks(spec.placement.policy, spec.blocks.size());
        for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
            const auto& b = spec.blocks[i];
            layers_.push_back(std::make_unique<ConvBlock>("block" + std::to_string(i), spec, b, c, T, on[i], rng));
            c = b.width;
            if (b.pool) {
                if (h < 2 || w < 2) throw ShapeError("model: block " + std::to_string(i) + " pools a map below 2x2");
                h = (h - 2) / 2 + 1;
                w = (w - 2) / 2 + 1;
            }
        }
    } else {
        const auto on = sma_blocks(spec.placement.policy, spec.stages.size() + 1);
        layers_.push_back(std::make_unique<Stem>(spec, c, T, on[0], rng));
        c = spec.stem_width;
        for (std::size_t s = 0; s < spec.stages.size(); ++s) {
            const auto& st = spec.stages[s];
            const std::size_t sma_width = st.bottleneck ? bottleneck_width(st) : st.width;
            if (on[s + 1] && sma_width % static_cast<std::size_t>(spec.sma.cr) != 0) {
                throw ConfigError("model: stage " + std::to_string(s) + " SMA width " + std::to_string(sma_width) +
                                  " is not divisible by sma cr=" + std::to_string(spec.sma.cr));
            }
            for (std::size_t k = 0; k < st.blocks; ++k) {
                const int stride = (s > 0 && k == 0) ? 2 : 1;
                const std::string name = "stage" + std::to_string(s) + ".block" + std::to_string(k);
                layers_.push_back(std::make_unique<MsBlock>(name, spec, c, st, stride, T, on[s + 1] && k == 0, rng));
                c = st.width;
                if (stride == 2) {
                    h = (h - 1) / 2 + 1;
                    w = (w - 1) / 2 + 1;
                }
            }
        }
    }
    feature_ = Shape{T, c, h, w};
    layers_.push_back(std::make_unique<Head>(spec, feature_, spec.arch == Arch::MsResNet, rng));
    for (auto& l : layers_) l->collect(refs_);
}

Model::~Model() = default;
Model::Model(Model&&) noexcept = default;
Model& Model::operator=(Model&&) noexcept = default;

ForwardResult Model::forward(const Value& x_in, ForwardContext& ctx) {
    Value x = x_in;
    const bool single = x.shape().rank() == 4;
    if (single) x = ops::reshape(x, Shape{1, x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]});
    const Shape& s = x.shape();
    if (s.rank() != 5 || s[2] != input_[1] || s[3] != input_[2] || s[4] != input_[3] || s[1] != input_[0]) {
        throw ShapeError("model: built for input " + input_.str() + ", got " + x_in.shape().str());
    }
    ForwardResult res;
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) x = layers_[i]->forward(x, ctx, res);
    res.features = x;
    res.logits = layers_.back()->forward(x, ctx, res);
    if (single) res.logits = ops::reshape(res.logits, Shape{s[1], spec_->classes});
    return res;
}

std::vector<Value> Model::trainable() const {
    std::vector<Value> out;
    for (const auto& p : refs_.params) out.push_back(p.value);
    return out;
}

std::vector<SmaModule*> Model::sma_modules() {
    std::vector<SmaModule*> out;
    for (auto& l : layers_) l->smas(out);
    return out;
}

std::size_t Model::sma_param_count() const {
    std::size_t n = 0;
    for (auto* m : const_cast<Model*>(this)->sma_modules()) n += m->param_count();
    return n;
}

std::size_t Model::sma_count() const { return const_cast<Model*>(this)->sma_modules().size(); }

std::vector<std::string> Model::spiking_layers() const {
    std::vector<std::string> out;
    for (const auto& l : layers_) l->spiking(out);
    return out;
}

}  // namespace snn::model
