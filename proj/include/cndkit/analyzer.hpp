#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cndkit/graph_ir.hpp"

namespace cnd {

/// Parameter accounting for one node. `kernel_params` is the pure
/// channels x filters x kernel-elements product (for separable layers the
/// depthwise and pointwise parts summed); `aux_params` holds biases and
/// BatchNorm scale/shift/statistics.
struct LayerParams {
    std::string id;
    std::string kind;
    std::int64_t in_channels = 0;
    std::int64_t filters = 0;
    std::int64_t kernel_elements = 0;
    std::int64_t kernel_params = 0;
    std::int64_t depthwise_params = 0;
    std::int64_t aux_params = 0;
    std::int64_t trainable = 0;

    std::int64_t total() const { return kernel_params + aux_params; }
};

struct ParamReport {
    std::vector<LayerParams> per_layer;
    std::int64_t total = 0;
    std::int64_t total_trainable = 0;
};

inline LayerParams count_params_layer(const LayerNode& node, std::int64_t input_channels) {
    LayerParams p;
    p.id = node.id;
    p.kind = std::string(kind_name(node.kind));
    p.in_channels = input_channels;
    const std::int64_t c = input_channels;
    if (const auto* conv = std::get_if<layer::Conv2D>(&node.kind)) {
        p.filters = conv->filters;
        p.kernel_elements = std::int64_t{conv->kernel} * conv->kernel;
        p.kernel_params = c * conv->filters * p.kernel_elements;
        p.aux_params = conv->has_bias ? conv->filters : 0;
        p.trainable = p.total();
    } else if (const auto* sep = std::get_if<layer::SeparableConv2D>(&node.kind)) {
        p.filters = sep->filters;
        p.kernel_elements = std::int64_t{sep->kernel} * sep->kernel;
        p.depthwise_params = c * p.kernel_elements;
        p.kernel_params = p.depthwise_params + (sep->depthwise_only ? 0 : c * sep->filters);
        p.trainable = p.total();
    } else if (is<layer::BatchNorm>(node.kind)) {
        p.filters = c;
        p.aux_params = 4 * c;
        p.trainable = 2 * c;
    } else if (const auto* dense = std::get_if<layer::Dense>(&node.kind)) {
        p.filters = dense->units;
        p.kernel_elements = 1;
        p.kernel_params = dense->units * c;
        p.aux_params = dense->has_bias ? dense->units : 0;
        p.trainable = p.total();
    }
    return p;
}

namespace detail {

inline std::int64_t input_channels(const LayerNode& node, const ShapeMap& shapes, const TensorShape& graph_input) {
    if (node.inputs.empty()) return graph_input.channels;
    return shapes.at(node.inputs.front()).channels;
}

} // namespace detail

inline ParamReport count_params(const ModelGraph& graph) {
    const auto shapes = infer_shapes(graph);
    ParamReport report;
    for (const auto& id : topo_sort(graph)) {
        const LayerNode& node = *graph.find(id);
        auto entry = count_params_layer(node, detail::input_channels(node, shapes, graph.input_shape));
        report.total += entry.total();
        report.total_trainable += entry.trainable;
        report.per_layer.push_back(std::move(entry));
    }
    return report;
}

/// Round half up to tenths of a million: 21'068'429 -> 211 (i.e. 21.1M).
inline std::int64_t round_tenth_million(std::int64_t params) { return (params + 50'000) / 100'000; }

inline std::string format_millions(std::int64_t params) {
    const auto tenths = round_tenth_million(params);
    return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10) + "M";
}

/// Multiply-accumulate count of the forward pass.
inline std::int64_t flops_estimate(const ModelGraph& graph) {
    const auto shapes = infer_shapes(graph);
    std::int64_t total = 0;
    for (const auto& node : graph.nodes) {
        const TensorShape& out = shapes.at(node.id);
        const std::int64_t c = detail::input_channels(node, shapes, graph.input_shape);
        if (const auto* conv = std::get_if<layer::Conv2D>(&node.kind)) {
            total += out.area() * conv->filters * c * conv->kernel * conv->kernel;
        } else if (const auto* sep = std::get_if<layer::SeparableConv2D>(&node.kind)) {
            const std::int64_t pointwise = sep->depthwise_only ? 0 : c * sep->filters;
            total += out.area() * (c * sep->kernel * sep->kernel + pointwise);
        } else if (const auto* dense = std::get_if<layer::Dense>(&node.kind)) {
            total += dense->units * c;
        }
    }
    return total;
}

inline std::int64_t flops_estimate(ModelGraph graph, const TensorShape& input_shape) {
    graph.input_shape = input_shape;
    return flops_estimate(graph);
}

/// Output elements of every node at the given batch size, in topological order.
inline std::vector<std::pair<std::string, std::int64_t>> activation_sizes(const ModelGraph& graph,
                                                                          std::int64_t batch) {
    if (batch < 1) throw Error(ErrorCode::InvalidArgument, "batch must be >= 1");
    const auto shapes = infer_shapes(graph);
    std::vector<std::pair<std::string, std::int64_t>> out;
    for (const auto& id : topo_sort(graph)) out.emplace_back(id, batch * shapes.at(id).elements());
    return out;
}

enum class RunMode { Training, Inference };
enum class Optimizer { SgdMomentum, Adam };

inline int state_multiplier(Optimizer o) { return o == Optimizer::Adam ? 2 : 1; }

struct MemoryAssumptions {
    std::int64_t bytes_per_scalar = 4;
    Optimizer optimizer = Optimizer::Adam;
    RunMode mode = RunMode::Training;
    std::int64_t batch_size = 1;
    std::int64_t overhead_bytes = 0;
};

/// Modeled memory footprint. Training: all weights, gradients and optimizer
/// state for trainable parameters, and twice the summed forward activations.
/// Inference: weights plus the peak over nodes of (inputs + output).
struct MemoryEstimate {
    std::int64_t weights_bytes = 0;
    std::int64_t gradients_bytes = 0;
    std::int64_t optimizer_state_bytes = 0;
    std::int64_t activations_bytes = 0;
    std::int64_t total_bytes = 0;
    MemoryAssumptions assumptions;
};

inline MemoryEstimate memory_estimate(const ModelGraph& graph, const MemoryAssumptions& a) {
    if (a.batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch must be >= 1");
    if (a.overhead_bytes < 0) throw Error(ErrorCode::InvalidArgument, "overhead must be >= 0");
    const auto params = count_params(graph);
    const auto shapes = infer_shapes(graph);
    const std::int64_t b = a.bytes_per_scalar;

    MemoryEstimate m;
    m.assumptions = a;
    m.weights_bytes = params.total * b;
    std::int64_t activation_elems = 0;
    if (a.mode == RunMode::Training) {
        m.gradients_bytes = params.total_trainable * b;
        m.optimizer_state_bytes = params.total_trainable * b * state_multiplier(a.optimizer);
        for (const auto& node : graph.nodes) activation_elems += shapes.at(node.id).elements();
        activation_elems *= 2;
    } else {
        for (const auto& node : graph.nodes) {
            std::int64_t live = shapes.at(node.id).elements();
            for (const auto& in : node.inputs) live += shapes.at(in).elements();
            activation_elems = std::max(activation_elems, live);
        }
    }
    m.activations_bytes = activation_elems * a.batch_size * b;
    m.total_bytes = m.weights_bytes + m.gradients_bytes + m.optimizer_state_bytes + m.activations_bytes +
                    a.overhead_bytes;
    return m;
}

} // namespace cnd
