#pragma once

// The Claw UNet: a residual encoder, a branch that repeatedly upsamples the
// bottom feature map to every decoder level, a three-input attention gate per
// fusion, and a transposed-convolution head that restores the input size.

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "claw/ops.hpp"

namespace claw {

enum class ShortcutMode { zero_pad, projection };

struct ModelConfig {
    index_t input_size = 512;
    index_t input_channels = 3;
    index_t depth = 4;  // number of encoder stages / decoder fusion levels
    // Channel schedule: stem followed by one entry per stage (length depth+1).
    std::vector<index_t> channels = {64, 64, 128, 256, 512};
    bool enable_attention = true;
    bool enable_residual = true;
    bool enable_bottom_branch = true;
    ShortcutMode shortcut_mode = ShortcutMode::zero_pad;
    // Literal reading of "max-pooling for downsampling": pool before every
    // stage instead of striding the first residual block.
    bool pool_everywhere = false;
    double threshold = 0.5;
    std::uint64_t seed = 0;

    index_t stem_channels() const { return channels.at(0); }

    /// Residual block count per stage; the depth-4 default is the ResNet-34
    /// schedule (3, 4, 6, 3).
    std::vector<index_t> stage_blocks() const {
        static constexpr index_t kResnet34[4] = {3, 4, 6, 3};
        std::vector<index_t> blocks;
        for (index_t s = 0; s < depth; ++s) {
            blocks.push_back(s < 4 ? kResnet34[s] : 3);
        }
        return blocks;
    }

    void validate() const {
        if (depth < 1) {
            throw std::invalid_argument("ModelConfig: depth must be >= 1");
        }
        if (static_cast<index_t>(channels.size()) != depth + 1) {
            throw std::invalid_argument("ModelConfig: channel schedule length must be depth+1, got " +
                                        std::to_string(channels.size()));
        }
        for (index_t c : channels) {
            if (c < 1) throw std::invalid_argument("ModelConfig: channels must be >= 1");
        }
        const index_t div = index_t(1) << (depth + 1);
        if (input_size < div || input_size % div != 0) {
            throw std::invalid_argument("ModelConfig: input_size must be divisible by 2^(depth+1) = " +
                                        std::to_string(div));
        }
        if (input_channels < 1) {
            throw std::invalid_argument("ModelConfig: input_channels must be >= 1");
        }
        if (!(threshold >= 0.0 && threshold <= 1.0)) {
            throw std::invalid_argument("ModelConfig: threshold must lie in [0, 1]");
        }
    }
};

/// 2D boolean grid; ground-truth labels and thresholded predictions.
struct BinaryMask {
    index_t height = 0;
    index_t width = 0;
    std::vector<std::uint8_t> values;

    BinaryMask() = default;
    BinaryMask(index_t h, index_t w, bool init = false)
        : height(h), width(w), values(static_cast<std::size_t>(h * w), init ? 1 : 0) {
        if (h < 1 || w < 1) {
            throw std::invalid_argument("BinaryMask: extents must be >= 1");
        }
    }

    bool at(index_t y, index_t x) const {
        return values[static_cast<std::size_t>(y * width + x)] != 0;
    }
    void set(index_t y, index_t x, bool v) {
        values[static_cast<std::size_t>(y * width + x)] = v ? 1 : 0;
    }
    index_t count() const {
        index_t n = 0;
        for (auto v : values) n += (v != 0);
        return n;
    }
    bool operator==(const BinaryMask& o) const {
        return height == o.height && width == o.width && values == o.values;
    }
};

template <typename T>
struct ConvLayer {
    NodePtr<T> weight;  // (out, in, kh, kw); deconv uses (in, out, kh, kw)
    NodePtr<T> bias;    // (1, out, 1, 1) or null
    index_t stride = 1;
    index_t padding = 0;
};

template <typename T>
struct BatchNormLayer {
    NodePtr<T> gamma;  // (1, C, 1, 1)
    NodePtr<T> beta;   // (1, C, 1, 1)
    BatchNormState<T> state;
    T momentum = T(0.1);
    T eps = T(1e-5);
};

template <typename T>
struct ResidualBlock {
    ConvLayer<T> conv1;  // 3x3, carries the stride
    BatchNormLayer<T> bn1;
    ConvLayer<T> conv2;  // 3x3, stride 1
    BatchNormLayer<T> bn2;
    // Projection shortcut (1x1 conv + norm) when shortcut_mode == projection
    // and the shape changes; zero-pad mode needs no parameters.
    std::optional<ConvLayer<T>> proj;
    std::optional<BatchNormLayer<T>> proj_bn;
    index_t in_channels = 0;
    index_t out_channels = 0;
    index_t stride = 1;
};

/// Conv-norm-relu twice; the non-residual encoder stage body.
template <typename T>
struct DoubleConv {
    ConvLayer<T> conv1;
    BatchNormLayer<T> bn1;
    ConvLayer<T> conv2;
    BatchNormLayer<T> bn2;
};

/// Shared three-input gate: one coefficient map alpha rescales both the
/// encoder skip and the bottom-branch stream. wy is absent when the bottom
/// branch is disabled.
template <typename T>
struct AttentionGate {
    ConvLayer<T> wx;  // 1x1, channels(x) -> f_int, no bias
    std::optional<ConvLayer<T>> wy;
    ConvLayer<T> wg;    // 1x1, channels(g) -> f_int, no bias
    NodePtr<T> b_gate;  // (1, f_int, 1, 1)
    ConvLayer<T> psi;   // 1x1, f_int -> 1, bias is b_psi
};

template <typename T>
struct DecoderStage {
    std::optional<AttentionGate<T>> gate;
    ConvLayer<T> conv_g;  // 3x3 on the upsampled decoder signal
    ConvLayer<T> fuse;    // 3x3 on the concatenated streams, no bias
    BatchNormLayer<T> fuse_bn;
};

template <typename T>
struct EncoderStack {
    // levels[0] is the stem output, levels[depth] the bottom feature map.
    std::vector<NodePtr<T>> levels;
};

template <typename T>
struct BottomBranch {
    // per_level[i] matches the extent and channel count of encoder level i,
    // for i = 0 .. depth-1. Empty when the branch is disabled.
    std::vector<NodePtr<T>> per_level;
};

/// Named reference to one stored tensor. Trainable entries expose their graph
/// node; running statistics only expose storage.
template <typename T>
struct ParamRef {
    std::string name;
    std::vector<index_t> logical_extents;
    Tensor4<T>* value = nullptr;
    NodePtr<T> node;  // null for non-trainable state

    bool trainable() const { return node != nullptr; }
};

namespace model_detail {

/// Deterministic uniform draw in [0, 1); identical across platforms for a
/// given engine state.
inline double unit_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename T>
NodePtr<T> make_param(index_t b, index_t c, index_t h, index_t w) {
    return make_leaf(Tensor4<T>(b, c, h, w), /*requires_grad=*/true);
}

template <typename T>
void fill_uniform(Tensor4<T>& t, double bound, std::mt19937_64& rng) {
    for (T& v : t.data) {
        v = static_cast<T>((2.0 * unit_uniform(rng) - 1.0) * bound);
    }
}

}  // namespace model_detail

template <typename T>
class ClawNet {
public:
    explicit ClawNet(const ModelConfig& config) : config_(config) {
        config_.validate();
        build();
        init_weights();
    }

    ClawNet(const ClawNet&) = delete;
    ClawNet& operator=(const ClawNet&) = delete;
    ClawNet(ClawNet&&) = default;
    ClawNet& operator=(ClawNet&&) = default;

    const ModelConfig& config() const { return config_; }

    /// Stem, pool, then the per-stage bodies; levels[i] is E_i.
    EncoderStack<T> encode(const NodePtr<T>& image, Mode mode) {
        const Tensor4<T>& v = image->value;
        if (v.height != config_.input_size || v.width != config_.input_size) {
            throw std::invalid_argument("encode: input extent " + v.shape_str() +
                                        " does not match configured size " +
                                        std::to_string(config_.input_size));
        }
        if (v.channels != config_.input_channels) {
            throw std::invalid_argument("encode: input channel count mismatch");
        }

        EncoderStack<T> stack;
        NodePtr<T> e0 = relu(bn(stem_bn_, conv(stem_, image), mode));
        stack.levels.push_back(e0);
        NodePtr<T> cur = max_pool2d(e0);
        for (index_t s = 0; s < config_.depth; ++s) {
            const bool stage_downsamples = s > 0;
            if (stage_downsamples && (config_.pool_everywhere || !config_.enable_residual)) {
                cur = max_pool2d(cur);
            }
            if (config_.enable_residual) {
                for (auto& block : res_stages_[static_cast<std::size_t>(s)]) {
                    cur = residual_block(block, cur, mode);
                }
            } else {
                auto& dc = plain_stages_[static_cast<std::size_t>(s)];
                cur = relu(bn(dc.bn1, conv(dc.conv1, cur), mode));
                cur = relu(bn(dc.bn2, conv(dc.conv2, cur), mode));
            }
            stack.levels.push_back(cur);
        }
        return stack;
    }

    /// B_i = conv3x3(upsample2x^(depth-i)(bottom)) with channels reduced to
    /// the level-i schedule.
    BottomBranch<T> bottom_branch(const NodePtr<T>& bottom) {
        BottomBranch<T> branch;
        if (!config_.enable_bottom_branch) return branch;
        branch.per_level.resize(static_cast<std::size_t>(config_.depth));
        NodePtr<T> cur = bottom;
        for (index_t i = config_.depth - 1; i >= 0; --i) {
            cur = upsample2x(cur);
            branch.per_level[static_cast<std::size_t>(i)] =
                conv(bottom_convs_[static_cast<std::size_t>(i)], cur);
        }
        return branch;
    }

    struct GateResult {
        NodePtr<T> gated_x;
        NodePtr<T> gated_y;  // null when the gate has no bottom stream
        NodePtr<T> alpha;
    };

    /// alpha = sigmoid(psi^T relu(Wx x + Wy y + Wg g + b_gate) + b_psi),
    /// broadcast onto both gated streams. g is resampled to x's extent first
    /// when the extents differ.
    GateResult attention_gate(index_t level, const NodePtr<T>& g, const NodePtr<T>& x,
                              const NodePtr<T>& y) {
        auto& gate = *decoder_[static_cast<std::size_t>(level)].gate;
        if (y && !(x->value.height == y->value.height && x->value.width == y->value.width)) {
            throw std::invalid_argument("attention_gate: x and y extents differ");
        }
        NodePtr<T> g_r = g;
        while (g_r->value.height < x->value.height || g_r->value.width < x->value.width) {
            g_r = upsample2x(g_r);
        }
        if (g_r->value.height != x->value.height || g_r->value.width != x->value.width) {
            throw std::invalid_argument("attention_gate: g extent is not a power-of-two divisor of x");
        }

        NodePtr<T> pre = add(conv(gate.wx, x), conv(gate.wg, g_r));
        if (y) {
            pre = add(pre, conv(*gate.wy, y));
        }
        pre = add_channel_bias(pre, gate.b_gate);
        NodePtr<T> alpha = sigmoid(conv(gate.psi, relu(pre)));

        GateResult r;
        r.alpha = alpha;
        r.gated_x = scale_by_map(x, alpha);
        r.gated_y = y ? scale_by_map(y, alpha) : nullptr;
        return r;
    }

    /// One fusion level: upsample the deeper decoder state, gate the skip
    /// streams, concatenate with the convolved decoder signal, fuse.
    NodePtr<T> decoder_stage(index_t level, const NodePtr<T>& deeper, const NodePtr<T>& skip,
                             const NodePtr<T>& bottom_feat, Mode mode) {
        auto& stage = decoder_[static_cast<std::size_t>(level)];
        NodePtr<T> g = upsample2x(deeper);
        if (g->value.height != skip->value.height || g->value.width != skip->value.width) {
            throw std::invalid_argument("decoder_stage: upsampled decoder extent mismatch");
        }

        std::vector<NodePtr<T>> streams;
        if (config_.enable_attention) {
            GateResult gr = attention_gate(level, g, skip, bottom_feat);
            streams.push_back(gr.gated_x);
            if (gr.gated_y) streams.push_back(gr.gated_y);
        } else {
            streams.push_back(skip);
            if (bottom_feat) streams.push_back(bottom_feat);
        }
        streams.push_back(conv(stage.conv_g, g));
        return relu(bn(stage.fuse_bn, conv(stage.fuse, concat_channels(streams)), mode));
    }

    /// Full forward pass to a probability map (batch, 1, size, size) in (0,1).
    NodePtr<T> forward(const NodePtr<T>& image, Mode mode) {
        EncoderStack<T> enc = encode(image, mode);
        BottomBranch<T> branch = bottom_branch(enc.levels.back());
        NodePtr<T> d = enc.levels.back();  // D_depth seeds from the bottom map
        for (index_t i = config_.depth - 1; i >= 0; --i) {
            NodePtr<T> b = config_.enable_bottom_branch
                               ? branch.per_level[static_cast<std::size_t>(i)]
                               : nullptr;
            d = decoder_stage(i, d, enc.levels[static_cast<std::size_t>(i)], b, mode);
        }
        NodePtr<T> up = deconv2d(d, head_deconv_.weight, head_deconv_.bias, head_deconv_.stride);
        return sigmoid(conv(head_conv_, up));
    }

    NodePtr<T> forward(const Tensor4<T>& image, Mode mode) {
        return forward(make_leaf(image), mode);
    }

    /// All stored tensors in declaration order: trainable weights plus the
    /// normalization running statistics. References stay valid while the net
    /// object stays in place.
    std::vector<ParamRef<T>> params() {
        std::vector<ParamRef<T>> out;
        auto add_node = [&out](const std::string& name, const NodePtr<T>& node,
                               std::vector<index_t> extents) {
            out.push_back(ParamRef<T>{name, std::move(extents), &node->value, node});
        };
        auto add_state = [&out](const std::string& name, Tensor4<T>& t) {
            out.push_back(ParamRef<T>{name, {t.channels}, &t, nullptr});
        };
        auto add_conv = [&](const std::string& name, ConvLayer<T>& c) {
            const Tensor4<T>& w = c.weight->value;
            add_node(name + ".weight", c.weight, {w.batch, w.channels, w.height, w.width});
            if (c.bias) add_node(name + ".bias", c.bias, {c.bias->value.channels});
        };
        auto add_bn = [&](const std::string& name, BatchNormLayer<T>& b) {
            add_node(name + ".gamma", b.gamma, {b.gamma->value.channels});
            add_node(name + ".beta", b.beta, {b.beta->value.channels});
            add_state(name + ".running_mean", b.state.running_mean);
            add_state(name + ".running_var", b.state.running_var);
        };

        add_conv("stem.conv", stem_);
        add_bn("stem.bn", stem_bn_);
        for (index_t s = 0; s < config_.depth; ++s) {
            const std::string stage = "enc.stage" + std::to_string(s + 1);
            if (config_.enable_residual) {
                auto& blocks = res_stages_[static_cast<std::size_t>(s)];
                for (std::size_t bidx = 0; bidx < blocks.size(); ++bidx) {
                    const std::string base = stage + ".block" + std::to_string(bidx);
                    add_conv(base + ".conv1", blocks[bidx].conv1);
                    add_bn(base + ".bn1", blocks[bidx].bn1);
                    add_conv(base + ".conv2", blocks[bidx].conv2);
                    add_bn(base + ".bn2", blocks[bidx].bn2);
                    if (blocks[bidx].proj) {
                        add_conv(base + ".proj", *blocks[bidx].proj);
                        add_bn(base + ".proj_bn", *blocks[bidx].proj_bn);
                    }
                }
            } else {
                auto& dc = plain_stages_[static_cast<std::size_t>(s)];
                add_conv(stage + ".conv1", dc.conv1);
                add_bn(stage + ".bn1", dc.bn1);
                add_conv(stage + ".conv2", dc.conv2);
                add_bn(stage + ".bn2", dc.bn2);
            }
        }
        if (config_.enable_bottom_branch) {
            for (index_t i = config_.depth - 1; i >= 0; --i) {
                add_conv("bottom.level" + std::to_string(i) + ".conv",
                         bottom_convs_[static_cast<std::size_t>(i)]);
            }
        }
        for (index_t i = config_.depth - 1; i >= 0; --i) {
            auto& stage = decoder_[static_cast<std::size_t>(i)];
            const std::string base = "dec.level" + std::to_string(i);
            if (stage.gate) {
                add_conv(base + ".gate.wx", stage.gate->wx);
                if (stage.gate->wy) add_conv(base + ".gate.wy", *stage.gate->wy);
                add_conv(base + ".gate.wg", stage.gate->wg);
                add_node(base + ".gate.b", stage.gate->b_gate,
                         {stage.gate->b_gate->value.channels});
                add_conv(base + ".gate.psi", stage.gate->psi);
            }
            add_conv(base + ".convg", stage.conv_g);
            add_conv(base + ".fuse", stage.fuse);
            add_bn(base + ".fuse_bn", stage.fuse_bn);
        }
        add_conv("head.deconv", head_deconv_);
        add_conv("head.conv", head_conv_);
        return out;
    }

    index_t trainable_scalar_count() {
        index_t n = 0;
        for (const auto& p : params()) {
            if (p.trainable()) n += p.value->size();
        }
        return n;
    }

private:
    NodePtr<T> conv(const ConvLayer<T>& c, const NodePtr<T>& x) {
        return conv2d(x, c.weight, c.bias, c.stride, c.padding);
    }
    NodePtr<T> bn(BatchNormLayer<T>& b, const NodePtr<T>& x, Mode mode) {
        return batchnorm2d(x, b.gamma, b.beta, b.state, mode, b.momentum, b.eps);
    }

    NodePtr<T> residual_block(ResidualBlock<T>& block, const NodePtr<T>& x, Mode mode) {
        NodePtr<T> main = bn(block.bn1, conv(block.conv1, x), mode);
        main = bn(block.bn2, conv(block.conv2, relu(main)), mode);

        NodePtr<T> shortcut = x;
        if (block.proj) {
            shortcut = bn(*block.proj_bn, conv(*block.proj, x), mode);
        } else {
            if (block.stride == 2) shortcut = subsample2(shortcut);
            if (block.out_channels > block.in_channels) {
                shortcut = pad_channels(shortcut, block.out_channels - block.in_channels);
            }
        }
        return relu(add(main, shortcut));
    }

    ConvLayer<T> make_conv(index_t out_c, index_t in_c, index_t k, index_t stride,
                           index_t padding, bool with_bias) {
        ConvLayer<T> c;
        c.weight = model_detail::make_param<T>(out_c, in_c, k, k);
        if (with_bias) c.bias = model_detail::make_param<T>(1, out_c, 1, 1);
        c.stride = stride;
        c.padding = padding;
        return c;
    }

    ConvLayer<T> make_deconv(index_t in_c, index_t out_c, index_t k, index_t stride) {
        ConvLayer<T> c;
        c.weight = model_detail::make_param<T>(in_c, out_c, k, k);
        c.bias = model_detail::make_param<T>(1, out_c, 1, 1);
        c.stride = stride;
        return c;
    }

    BatchNormLayer<T> make_bn(index_t c_n) {
        BatchNormLayer<T> b;
        b.gamma = model_detail::make_param<T>(1, c_n, 1, 1);
        b.beta = model_detail::make_param<T>(1, c_n, 1, 1);
        b.state.running_mean = Tensor4<T>(1, c_n, 1, 1);
        b.state.running_var = Tensor4<T>(1, c_n, 1, 1, T(1));
        return b;
    }

    void build() {
        const auto& ch = config_.channels;
        stem_ = make_conv(ch[0], config_.input_channels, 7, 2, 3, /*with_bias=*/false);
        stem_bn_ = make_bn(ch[0]);

        const auto blocks = config_.stage_blocks();
        if (config_.enable_residual) {
            res_stages_.resize(static_cast<std::size_t>(config_.depth));
            for (index_t s = 0; s < config_.depth; ++s) {
                index_t in_c = ch[static_cast<std::size_t>(s)];
                const index_t out_c = ch[static_cast<std::size_t>(s + 1)];
                for (index_t bi = 0; bi < blocks[static_cast<std::size_t>(s)]; ++bi) {
                    const bool first = bi == 0;
                    const bool spatial = first && s > 0 && !config_.pool_everywhere;
                    ResidualBlock<T> block;
                    block.in_channels = first ? in_c : out_c;
                    block.out_channels = out_c;
                    block.stride = spatial ? 2 : 1;
                    block.conv1 = make_conv(out_c, block.in_channels, 3, block.stride, 1, false);
                    block.bn1 = make_bn(out_c);
                    block.conv2 = make_conv(out_c, out_c, 3, 1, 1, false);
                    block.bn2 = make_bn(out_c);
                    const bool shape_change = block.stride != 1 ||
                                              block.in_channels != block.out_channels;
                    if (shape_change && config_.shortcut_mode == ShortcutMode::projection) {
                        block.proj = make_conv(out_c, block.in_channels, 1, block.stride, 0,
                                               false);
                        block.proj_bn = make_bn(out_c);
                    }
                    res_stages_[static_cast<std::size_t>(s)].push_back(std::move(block));
                }
            }
        } else {
            plain_stages_.resize(static_cast<std::size_t>(config_.depth));
            for (index_t s = 0; s < config_.depth; ++s) {
                const index_t in_c = ch[static_cast<std::size_t>(s)];
                const index_t out_c = ch[static_cast<std::size_t>(s + 1)];
                auto& dc = plain_stages_[static_cast<std::size_t>(s)];
                dc.conv1 = make_conv(out_c, in_c, 3, 1, 1, false);
                dc.bn1 = make_bn(out_c);
                dc.conv2 = make_conv(out_c, out_c, 3, 1, 1, false);
                dc.bn2 = make_bn(out_c);
            }
        }

        const index_t bottom_c = ch.back();
        if (config_.enable_bottom_branch) {
            bottom_convs_.resize(static_cast<std::size_t>(config_.depth));
            for (index_t i = 0; i < config_.depth; ++i) {
                bottom_convs_[static_cast<std::size_t>(i)] =
                    make_conv(ch[static_cast<std::size_t>(i)], bottom_c, 3, 1, 1, true);
            }
        }

        decoder_.resize(static_cast<std::size_t>(config_.depth));
        for (index_t i = 0; i < config_.depth; ++i) {
            auto& stage = decoder_[static_cast<std::size_t>(i)];
            const index_t skip_c = ch[static_cast<std::size_t>(i)];
            const index_t deeper_c = ch[static_cast<std::size_t>(i + 1)];
            if (config_.enable_attention) {
                AttentionGate<T> gate;
                const index_t f_int = std::max<index_t>(1, skip_c / 2);
                gate.wx = make_conv(f_int, skip_c, 1, 1, 0, false);
                if (config_.enable_bottom_branch) {
                    gate.wy = make_conv(f_int, skip_c, 1, 1, 0, false);
                }
                gate.wg = make_conv(f_int, deeper_c, 1, 1, 0, false);
                gate.b_gate = model_detail::make_param<T>(1, f_int, 1, 1);
                gate.psi = make_conv(1, f_int, 1, 1, 0, true);
                stage.gate = std::move(gate);
            }
            stage.conv_g = make_conv(skip_c, deeper_c, 3, 1, 1, true);
            const index_t fused_in = skip_c * (config_.enable_bottom_branch ? 2 : 1) + skip_c;
            stage.fuse = make_conv(skip_c, fused_in, 3, 1, 1, false);
            stage.fuse_bn = make_bn(skip_c);
        }

        const index_t head_mid = std::max<index_t>(1, config_.stem_channels() / 2);
        head_deconv_ = make_deconv(config_.stem_channels(), head_mid, 2, 2);
        head_conv_ = make_conv(1, head_mid, 1, 1, 0, true);
    }

    /// Deterministic initialization from the config seed: convolution weights
    /// from a fan-in-scaled uniform, norm scales one, every bias zero.
    void init_weights() {
        std::mt19937_64 rng(config_.seed);
        for (auto& p : params()) {
            if (!p.trainable()) continue;
            Tensor4<T>& t = *p.value;
            if (p.logical_extents.size() == 4) {
                const double fan_in =
                    static_cast<double>(t.channels) * static_cast<double>(t.height) *
                    static_cast<double>(t.width);
                model_detail::fill_uniform(t, 1.0 / std::sqrt(fan_in), rng);
            } else if (p.name.ends_with(".gamma")) {
                t.fill(T(1));
            } else {
                t.fill(T(0));  // biases, betas, gate offsets
            }
        }
    }

    ModelConfig config_;
    ConvLayer<T> stem_;
    BatchNormLayer<T> stem_bn_;
    std::vector<std::vector<ResidualBlock<T>>> res_stages_;
    std::vector<DoubleConv<T>> plain_stages_;
    std::vector<ConvLayer<T>> bottom_convs_;
    std::vector<DecoderStage<T>> decoder_;
    ConvLayer<T> head_deconv_;
    ConvLayer<T> head_conv_;
};

/// Thresholds a (1, 1, h, w) probability map; a pixel is foreground iff its
/// probability is >= threshold (ties go to foreground).
template <typename T>
BinaryMask predict_mask(const Tensor4<T>& prob_map, double threshold) {
    if (prob_map.batch != 1 || prob_map.channels != 1) {
        throw std::invalid_argument("predict_mask: expected a (1,1,h,w) probability map");
    }
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
        throw std::invalid_argument("predict_mask: threshold must lie in [0, 1]");
    }
    BinaryMask mask(prob_map.height, prob_map.width);
    for (index_t y = 0; y < prob_map.height; ++y) {
        for (index_t x = 0; x < prob_map.width; ++x) {
            mask.set(y, x, static_cast<double>(prob_map(0, 0, y, x)) >= threshold);
        }
    }
    return mask;
}

}  // namespace claw
