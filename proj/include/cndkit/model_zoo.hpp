#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cndkit/error.hpp"
#include "cndkit/graph_ir.hpp"

namespace cnd {

/// Filter counts of a fire module: a 1x1 squeeze feeding a 1x1 expand and
/// then a 3x3 expand. Valid iff all counts are positive and
/// s1x1 < e1x1 + e3x3.
struct FireModuleSpec {
    std::int64_t s1x1 = 0;
    std::int64_t e1x1 = 0;
    std::int64_t e3x3 = 0;

    bool valid() const { return s1x1 >= 1 && e1x1 >= 1 && e3x3 >= 1 && s1x1 < e1x1 + e3x3; }

    friend bool operator==(const FireModuleSpec&, const FireModuleSpec&) = default;
};

inline std::string to_string(const FireModuleSpec& s) {
    return "(" + std::to_string(s.s1x1) + ", " + std::to_string(s.e1x1) + ", " + std::to_string(s.e3x3) + ")";
}

inline void check_fire_spec(const FireModuleSpec& spec, const std::string& module) {
    if (spec.valid()) return;
    if (spec.s1x1 < 1 || spec.e1x1 < 1 || spec.e3x3 < 1) {
        throw Error(ErrorCode::InvalidFireSpec, module + ": filter counts must be positive, got " + to_string(spec));
    }
    throw Error(ErrorCode::InvalidFireSpec, module + ": s1x1=" + std::to_string(spec.s1x1) +
                                                " is not < e1x1+e3x3=" + std::to_string(spec.e1x1 + spec.e3x3));
}

inline constexpr std::size_t kEntryResidualModules = 3;
inline constexpr std::size_t kMiddleModules = 8;

/// Filter plan for the fire-module Xception. Module outputs of the entry
/// flow stay at 128/256/728 and the middle flow stays at 728 channels, so
/// every residual projection keeps its original width; the savings come
/// from the 1x1 squeeze/expand layers and the narrower input to each 3x3.
/// Lands at 15.90M parameters for 299x299x3 and 101 classes.
struct OptimizedConfig {
    std::vector<FireModuleSpec> entry_fire;
    std::vector<FireModuleSpec> middle_fire;
    std::array<std::int64_t, 4> exit_filters{728, 1024, 1536, 2048};

    static OptimizedConfig defaults() {
        OptimizedConfig c;
        c.entry_fire = {{32, 64, 128}, {64, 128, 256}, {128, 256, 728}};
        c.middle_fire.assign(kMiddleModules, FireModuleSpec{384, 672, 728});
        return c;
    }

    void validate() const {
        if (entry_fire.size() != kEntryResidualModules) {
            throw Error(ErrorCode::InvalidFireSpec, "entry_fire needs " + std::to_string(kEntryResidualModules) +
                                                        " specs, got " + std::to_string(entry_fire.size()));
        }
        if (middle_fire.size() != kMiddleModules) {
            throw Error(ErrorCode::InvalidFireSpec, "middle_fire needs " + std::to_string(kMiddleModules) +
                                                        " specs, got " + std::to_string(middle_fire.size()));
        }
        for (std::size_t i = 0; i < entry_fire.size(); ++i) check_fire_spec(entry_fire[i], entry_module_tag(i));
        for (std::size_t i = 0; i < middle_fire.size(); ++i) check_fire_spec(middle_fire[i], middle_module_tag(i));
        for (auto f : exit_filters) {
            if (f < 1) throw Error(ErrorCode::InvalidArgument, "exit filters must be positive");
        }
    }

    static std::string entry_module_tag(std::size_t i) { return "entry_flow/module" + std::to_string(i + 2); }
    static std::string middle_module_tag(std::size_t i) { return "middle_flow/module" + std::to_string(i + 5); }

    /// Module tag -> spec, the form the fire-insertion pass consumes.
    std::map<std::string, FireModuleSpec> module_specs() const {
        std::map<std::string, FireModuleSpec> out;
        for (std::size_t i = 0; i < entry_fire.size(); ++i) out[entry_module_tag(i)] = entry_fire[i];
        for (std::size_t i = 0; i < middle_fire.size(); ++i) out[middle_module_tag(i)] = middle_fire[i];
        return out;
    }
};

inline std::string id_prefix(const std::string& module_tag) {
    std::string p = module_tag;
    std::replace(p.begin(), p.end(), '/', '_');
    return p;
}

/// Squeeze -> expand1 -> expand3, each followed by BatchNorm and ReLU.
/// The module's output is the last node; its channel count is e3x3.
inline std::vector<LayerNode> make_fire_module(const std::string& input_id, const std::string& module_tag,
                                               const FireModuleSpec& spec, int stride_out = 1) {
    check_fire_spec(spec, module_tag);
    if (stride_out != 1 && stride_out != 2) {
        throw Error(ErrorCode::InvalidArgument, "stride_out must be 1 or 2");
    }
    const std::string prefix = id_prefix(module_tag);
    std::vector<LayerNode> out;
    std::string prev = input_id;
    auto stage = [&](const char* role, std::int64_t filters, int kernel, int stride) {
        const std::string id = prefix + "_" + role;
        out.push_back({id, layer::SeparableConv2D{filters, kernel, stride, Padding::Same, false}, {prev},
                       module_tag + "/" + role});
        out.push_back({id + "_bn", layer::BatchNorm{}, {id}, module_tag});
        out.push_back({id + "_act", layer::Activation{ActivationFn::Relu}, {id + "_bn"}, module_tag});
        prev = id + "_act";
    };
    stage("squeeze", spec.s1x1, 1, 1);
    stage("expand1", spec.e1x1, 1, 1);
    stage("expand3", spec.e3x3, 3, stride_out);
    return out;
}

namespace detail {

class GraphBuilder {
public:
    GraphBuilder(std::string name, TensorShape input, std::int64_t num_classes) {
        graph_.name = std::move(name);
        graph_.input_shape = input;
        graph_.num_classes = num_classes;
    }

    const std::string& add(std::string id, LayerKind kind, std::vector<std::string> inputs,
                           std::optional<std::string> tag = std::nullopt) {
        graph_ = add_layer(std::move(graph_), LayerNode{std::move(id), std::move(kind), std::move(inputs), std::move(tag)});
        return graph_.nodes.back().id;
    }

    std::string append(const std::vector<LayerNode>& nodes) {
        for (const auto& n : nodes) graph_ = add_layer(std::move(graph_), n);
        return graph_.nodes.back().id;
    }

    /// conv -> BN (-> activation); returns the last id.
    std::string conv_bn(const std::string& id, LayerKind conv, const std::string& in, const std::string& tag,
                        std::optional<std::string> conv_tag = std::nullopt,
                        std::optional<ActivationFn> act = std::nullopt) {
        add(id, std::move(conv), {in}, conv_tag ? conv_tag : tag);
        std::string last = add(id + "_bn", layer::BatchNorm{}, {id}, conv_tag ? conv_tag : tag);
        if (act) last = add(id + "_act", layer::Activation{*act}, {last}, tag);
        return last;
    }

    ModelGraph& graph() { return graph_; }

    ModelGraph finish() && {
        validate(graph_);
        return std::move(graph_);
    }

private:
    ModelGraph graph_;
};

inline void check_classes(std::int64_t num_classes) {
    if (num_classes < 2) {
        throw Error(ErrorCode::InvalidArgument,
                    "classification head needs at least 2 classes, got " + std::to_string(num_classes));
    }
}

inline layer::SeparableConv2D sep(std::int64_t filters, int kernel = 3) {
    return {filters, kernel, 1, Padding::Same, false};
}

inline layer::Conv2D conv(std::int64_t filters, int kernel, int stride, Padding padding) {
    return {filters, kernel, stride, padding, false};
}

inline ModelGraph build_xception_family(const TensorShape& input, std::int64_t num_classes,
                                        const OptimizedConfig* fire) {
    check_classes(num_classes);
    if (fire) fire->validate();
    const std::array<std::int64_t, 4> exit =
        fire ? fire->exit_filters : std::array<std::int64_t, 4>{728, 1024, 1536, 2048};
    // In the fire variant every module's leading separable conv is 1x1.
    const int lead_kernel = fire ? 1 : 3;

    GraphBuilder b(fire ? "optimized-xception" : "xception", input, num_classes);
    std::string x = b.add("input", layer::Input{}, {});

    const std::string m1 = "entry_flow/module1";
    x = b.conv_bn("block1_conv1", conv(32, 3, 2, Padding::Valid), x, m1, std::nullopt, ActivationFn::Relu);
    x = b.conv_bn("block1_conv2", conv(64, 3, 1, Padding::Valid), x, m1, std::nullopt, ActivationFn::Relu);
    std::int64_t channels = 64;

    const std::array<std::int64_t, 3> entry_filters{128, 256, 728};
    for (std::size_t i = 0; i < entry_filters.size(); ++i) {
        const int block = static_cast<int>(i) + 2;
        const std::string tag = OptimizedConfig::entry_module_tag(i);
        const std::string name = "block" + std::to_string(block);
        const std::int64_t out_ch = fire ? fire->entry_fire[i].e3x3 : entry_filters[i];

        const std::string residual =
            b.conv_bn(name + "_shortcut", conv(out_ch, 1, 2, Padding::Same), x, tag, tag + "/shortcut");
        std::string y = x;
        if (block > 2) y = b.add(name + "_input_act", layer::Activation{ActivationFn::Relu}, {y}, tag);
        if (fire) {
            y = b.append(make_fire_module(y, tag, fire->entry_fire[i]));
        } else {
            y = b.conv_bn(name + "_sepconv1", sep(entry_filters[i]), y, tag, std::nullopt, ActivationFn::Relu);
            y = b.conv_bn(name + "_sepconv2", sep(entry_filters[i]), y, tag);
        }
        y = b.add(name + "_pool", layer::MaxPool{3, 2, Padding::Same}, {y}, tag);
        x = b.add(name + "_add", layer::Add{}, {y, residual}, tag);
        channels = out_ch;
    }

    for (std::size_t i = 0; i < kMiddleModules; ++i) {
        const int block = static_cast<int>(i) + 5;
        const std::string tag = OptimizedConfig::middle_module_tag(i);
        const std::string name = "block" + std::to_string(block);
        std::string residual = x;
        std::string y = b.add(name + "_input_act", layer::Activation{ActivationFn::Relu}, {x}, tag);
        std::int64_t out_ch = 728;
        if (fire) {
            out_ch = fire->middle_fire[i].e3x3;
            y = b.append(make_fire_module(y, tag, fire->middle_fire[i]));
        } else {
            y = b.conv_bn(name + "_sepconv1", sep(728), y, tag, std::nullopt, ActivationFn::Relu);
            y = b.conv_bn(name + "_sepconv2", sep(728), y, tag, std::nullopt, ActivationFn::Relu);
            y = b.conv_bn(name + "_sepconv3", sep(728), y, tag);
        }
        if (out_ch != channels) {
            residual = b.conv_bn(id_prefix(tag) + "_shortcut", conv(out_ch, 1, 1, Padding::Same), x, tag,
                                 tag + "/shortcut");
        }
        x = b.add(name + "_add", layer::Add{}, {y, residual}, tag);
        channels = out_ch;
    }

    const std::string m13 = "exit_flow/module13";
    const std::string residual =
        b.conv_bn("block13_shortcut", conv(exit[1], 1, 2, Padding::Same), x, m13, m13 + "/shortcut");
    std::string y = b.add("block13_input_act", layer::Activation{ActivationFn::Relu}, {x}, m13);
    y = b.conv_bn("block13_sepconv1", sep(exit[0], lead_kernel), y, m13, std::nullopt, ActivationFn::Relu);
    y = b.conv_bn("block13_sepconv2", sep(exit[1]), y, m13);
    y = b.add("block13_pool", layer::MaxPool{3, 2, Padding::Same}, {y}, m13);
    x = b.add("block13_add", layer::Add{}, {y, residual}, m13);

    const std::string m14 = "exit_flow/module14";
    x = b.conv_bn("block14_sepconv1", sep(exit[2], lead_kernel), x, m14, std::nullopt, ActivationFn::Relu);
    x = b.conv_bn("block14_sepconv2", sep(exit[3]), x, m14, std::nullopt, ActivationFn::Relu);

    x = b.add("avg_pool", layer::GlobalAvgPool{}, {x}, "head");
    b.add("predictions", layer::Dense{num_classes, true}, {x}, "head");
    return std::move(b).finish();
}

} // namespace detail

/// Canonical Xception: 36 convolutional layers in 14 modules, residual
/// connections around modules 2-13, GlobalAvgPool + Dense head.
inline ModelGraph build_xception(const TensorShape& input_shape = {299, 299, 3}, std::int64_t num_classes = 101) {
    return detail::build_xception_family(input_shape, num_classes, nullptr);
}

/// Xception with fire modules in place of the entry and middle separable
/// stacks and 1x1 leading separable convs in the exit flow. Downsampling
/// positions and residual structure match build_xception.
inline ModelGraph build_optimized_xception(const TensorShape& input_shape = {299, 299, 3},
                                           std::int64_t num_classes = 101,
                                           const OptimizedConfig& config = OptimizedConfig::defaults()) {
    return detail::build_xception_family(input_shape, num_classes, &config);
}

/// MobileNetV2, width multiplier 1.0. Depthwise layers are SeparableConv2D
/// nodes with depthwise_only set.
inline ModelGraph build_mobilenet_v2(const TensorShape& input_shape = {224, 224, 3}, std::int64_t num_classes = 101) {
    detail::check_classes(num_classes);
    using detail::conv;
    detail::GraphBuilder b("mobilenetv2", input_shape, num_classes);
    std::string x = b.add("input", layer::Input{}, {});
    x = b.conv_bn("conv1", conv(32, 3, 2, Padding::Same), x, "stem/module0", std::nullopt, ActivationFn::Relu6);
    std::int64_t channels = 32;

    struct Stage {
        int expansion;
        std::int64_t filters;
        int repeats;
        int stride;
    };
    static constexpr Stage stages[] = {{1, 16, 1, 1},  {6, 24, 2, 2},  {6, 32, 3, 2}, {6, 64, 4, 2},
                                       {6, 96, 3, 1},  {6, 160, 3, 2}, {6, 320, 1, 1}};
    int block = 1;
    for (const auto& stage : stages) {
        for (int r = 0; r < stage.repeats; ++r, ++block) {
            const int stride = r == 0 ? stage.stride : 1;
            const std::string tag = "bottleneck/module" + std::to_string(block);
            const std::string name = "block" + std::to_string(block);
            const std::int64_t expanded = channels * stage.expansion;
            std::string y = x;
            if (stage.expansion != 1) {
                y = b.conv_bn(name + "_expand", conv(expanded, 1, 1, Padding::Same), y, tag, tag + "/expand",
                              ActivationFn::Relu6);
            }
            y = b.conv_bn(name + "_depthwise", layer::SeparableConv2D{expanded, 3, stride, Padding::Same, true}, y,
                          tag, tag + "/depthwise", ActivationFn::Relu6);
            y = b.conv_bn(name + "_project", conv(stage.filters, 1, 1, Padding::Same), y, tag, tag + "/project");
            if (stride == 1 && channels == stage.filters) {
                y = b.add(name + "_add", layer::Add{}, {y, x}, tag);
            }
            x = y;
            channels = stage.filters;
        }
    }
    x = b.conv_bn("conv_top", conv(1280, 1, 1, Padding::Same), x, "top/module" + std::to_string(block),
                  std::nullopt, ActivationFn::Relu6);
    x = b.add("avg_pool", layer::GlobalAvgPool{}, {x}, "head");
    b.add("predictions", layer::Dense{num_classes, true}, {x}, "head");
    return std::move(b).finish();
}

} // namespace cnd
