#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <type_traits>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include "cndkit/error.hpp"

namespace cnd {

/// Activation-map dimensions in HWC order.
struct TensorShape {
    std::int64_t height = 1;
    std::int64_t width = 1;
    std::int64_t channels = 1;

    std::int64_t area() const { return height * width; }
    std::int64_t elements() const { return height * width * channels; }
    bool valid() const { return height >= 1 && width >= 1 && channels >= 1; }

    friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

inline std::string to_string(const TensorShape& s) {
    return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" + std::to_string(s.channels);
}

enum class Padding { Same, Valid };
enum class ActivationFn { Relu, Relu6, Softmax, Sigmoid };

inline std::string_view to_string(Padding p) { return p == Padding::Same ? "same" : "valid"; }

inline std::string_view to_string(ActivationFn f) {
    switch (f) {
        case ActivationFn::Relu: return "relu";
        case ActivationFn::Relu6: return "relu6";
        case ActivationFn::Softmax: return "softmax";
        case ActivationFn::Sigmoid: return "sigmoid";
    }
    return "relu";
}

namespace layer {

struct Input {
    friend bool operator==(const Input&, const Input&) = default;
};

struct Conv2D {
    std::int64_t filters = 1;
    int kernel = 3;
    int stride = 1;
    Padding padding = Padding::Same;
    bool has_bias = false;
    friend bool operator==(const Conv2D&, const Conv2D&) = default;
};

/// Depthwise followed by pointwise, fused into one node. With
/// `depthwise_only` the pointwise stage is absent and `filters` must equal
/// the input channel count (the MobileNetV2 depthwise layer).
struct SeparableConv2D {
    std::int64_t filters = 1;
    int kernel = 3;
    int stride = 1;
    Padding padding = Padding::Same;
    bool depthwise_only = false;
    friend bool operator==(const SeparableConv2D&, const SeparableConv2D&) = default;
};

struct MaxPool {
    int pool_size = 2;
    int stride = 2;
    Padding padding = Padding::Valid;
    friend bool operator==(const MaxPool&, const MaxPool&) = default;
};

struct GlobalAvgPool {
    friend bool operator==(const GlobalAvgPool&, const GlobalAvgPool&) = default;
};

struct BatchNorm {
    friend bool operator==(const BatchNorm&, const BatchNorm&) = default;
};

struct Activation {
    ActivationFn fn = ActivationFn::Relu;
    friend bool operator==(const Activation&, const Activation&) = default;
};

struct Add {
    friend bool operator==(const Add&, const Add&) = default;
};

struct Dense {
    std::int64_t units = 1;
    bool has_bias = true;
    friend bool operator==(const Dense&, const Dense&) = default;
};

} // namespace layer

using LayerKind = std::variant<layer::Input, layer::Conv2D, layer::SeparableConv2D, layer::MaxPool,
                               layer::GlobalAvgPool, layer::BatchNorm, layer::Activation, layer::Add,
                               layer::Dense>;

template <typename T>
bool is(const LayerKind& kind) {
    return std::holds_alternative<T>(kind);
}

inline std::string_view kind_name(const LayerKind& kind) {
    static constexpr std::string_view names[] = {"Input",       "Conv2D",    "SeparableConv2D",
                                                 "MaxPool",     "GlobalAvgPool", "BatchNorm",
                                                 "Activation",  "Add",       "Dense"};
    return names[kind.index()];
}

inline bool is_conv(const LayerKind& kind) {
    return is<layer::Conv2D>(kind) || is<layer::SeparableConv2D>(kind);
}

/// Number of inputs a node of this kind consumes.
inline std::size_t arity(const LayerKind& kind) {
    if (is<layer::Input>(kind)) return 0;
    if (is<layer::Add>(kind)) return 2;
    return 1;
}

/// One-line human summary, e.g. "SeparableConv2D(128,3x3,s1,same)".
inline std::string describe(const LayerKind& kind) {
    auto k = [](int v) { return std::to_string(v) + "x" + std::to_string(v); };
    return std::visit(
        [&](const auto& l) -> std::string {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, layer::Conv2D>) {
                return "Conv2D(" + std::to_string(l.filters) + "," + k(l.kernel) + ",s" +
                       std::to_string(l.stride) + "," + std::string(to_string(l.padding)) +
                       (l.has_bias ? ",bias" : "") + ")";
            } else if constexpr (std::is_same_v<T, layer::SeparableConv2D>) {
                return std::string(l.depthwise_only ? "DepthwiseConv2D(" : "SeparableConv2D(") +
                       std::to_string(l.filters) + "," + k(l.kernel) + ",s" + std::to_string(l.stride) +
                       "," + std::string(to_string(l.padding)) + ")";
            } else if constexpr (std::is_same_v<T, layer::MaxPool>) {
                return "MaxPool(" + k(l.pool_size) + ",s" + std::to_string(l.stride) + "," +
                       std::string(to_string(l.padding)) + ")";
            } else if constexpr (std::is_same_v<T, layer::Activation>) {
                return "Activation(" + std::string(to_string(l.fn)) + ")";
            } else if constexpr (std::is_same_v<T, layer::Dense>) {
                return "Dense(" + std::to_string(l.units) + (l.has_bias ? ",bias" : "") + ")";
            } else {
                return std::string(kind_name(LayerKind{l}));
            }
        },
        kind);
}

/// Throws InvalidAttribute when a kind's attributes are out of range.
inline void check_attributes(const LayerKind& kind, std::string_view id) {
    auto fail = [&](const std::string& what) {
        throw Error(ErrorCode::InvalidAttribute, "node '" + std::string(id) + "': " + what);
    };
    auto check_conv = [&](std::int64_t filters, int kernel, int stride) {
        if (filters < 1) fail("filters must be >= 1");
        if (kernel != 1 && kernel != 3) fail("kernel must be 1 or 3, got " + std::to_string(kernel));
        if (stride != 1 && stride != 2) fail("stride must be 1 or 2, got " + std::to_string(stride));
    };
    if (const auto* c = std::get_if<layer::Conv2D>(&kind)) {
        check_conv(c->filters, c->kernel, c->stride);
    } else if (const auto* s = std::get_if<layer::SeparableConv2D>(&kind)) {
        check_conv(s->filters, s->kernel, s->stride);
    } else if (const auto* p = std::get_if<layer::MaxPool>(&kind)) {
        if (p->pool_size < 1) fail("pool_size must be >= 1");
        if (p->stride < 1) fail("stride must be >= 1");
    } else if (const auto* d = std::get_if<layer::Dense>(&kind)) {
        if (d->units < 1) fail("units must be >= 1");
    }
}

struct LayerNode {
    std::string id;
    LayerKind kind;
    std::vector<std::string> inputs;
    std::optional<std::string> tag;

    friend bool operator==(const LayerNode&, const LayerNode&) = default;
};

/// Nodes are kept in insertion order. Graphs built through add_layer are
/// always topologically ordered; deserialized graphs need not be.
struct ModelGraph {
    std::string name;
    TensorShape input_shape{299, 299, 3};
    std::int64_t num_classes = 2;
    std::map<std::string, std::string> metadata;
    std::vector<LayerNode> nodes;

    const LayerNode* find(std::string_view id) const {
        auto it = std::find_if(nodes.begin(), nodes.end(), [&](const LayerNode& n) { return n.id == id; });
        return it == nodes.end() ? nullptr : &*it;
    }

    friend bool operator==(const ModelGraph&, const ModelGraph&) = default;
};

using ShapeMap = std::unordered_map<std::string, TensorShape>;

namespace detail {

inline std::unordered_map<std::string, std::size_t> index_by_id(const ModelGraph& graph) {
    std::unordered_map<std::string, std::size_t> index;
    index.reserve(graph.nodes.size());
    for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
        if (!index.emplace(graph.nodes[i].id, i).second) {
            throw Error(ErrorCode::DuplicateId, "node id '" + graph.nodes[i].id + "' appears twice");
        }
    }
    return index;
}

inline void check_arity(const LayerNode& node) {
    if (node.inputs.size() != arity(node.kind)) {
        throw Error(ErrorCode::ArityMismatch, "node '" + node.id + "' of kind " +
                                                  std::string(kind_name(node.kind)) + " needs " +
                                                  std::to_string(arity(node.kind)) + " input(s), got " +
                                                  std::to_string(node.inputs.size()));
    }
}

} // namespace detail

/// Appends `node`, rejecting duplicate ids, dangling inputs, bad arity and
/// out-of-range attributes.
inline ModelGraph add_layer(ModelGraph graph, LayerNode node) {
    if (graph.find(node.id) != nullptr) {
        throw Error(ErrorCode::DuplicateId, "node id '" + node.id + "' already present");
    }
    detail::check_arity(node);
    check_attributes(node.kind, node.id);
    for (const auto& in : node.inputs) {
        if (graph.find(in) == nullptr) {
            throw Error(ErrorCode::UnknownInput, "node '" + node.id + "' references unknown input '" + in + "'");
        }
    }
    if (is<layer::Input>(node.kind) &&
        std::any_of(graph.nodes.begin(), graph.nodes.end(),
                    [](const LayerNode& n) { return is<layer::Input>(n.kind); })) {
        throw Error(ErrorCode::InvalidGraph, "graph already has an Input node");
    }
    graph.nodes.push_back(std::move(node));
    return graph;
}

/// Kahn's algorithm; among ready nodes the earliest-inserted goes first.
inline std::vector<std::string> topo_sort(const ModelGraph& graph) {
    const auto index = detail::index_by_id(graph);
    const std::size_t n = graph.nodes.size();
    std::vector<std::size_t> pending(n, 0);
    std::vector<std::vector<std::size_t>> consumers(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& in : graph.nodes[i].inputs) {
            auto it = index.find(in);
            if (it == index.end()) {
                throw Error(ErrorCode::UnknownInput,
                            "node '" + graph.nodes[i].id + "' references unknown input '" + in + "'");
            }
            consumers[it->second].push_back(i);
            ++pending[i];
        }
    }
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
    for (std::size_t i = 0; i < n; ++i) {
        if (pending[i] == 0) ready.push(i);
    }
    std::vector<std::string> order;
    order.reserve(n);
    while (!ready.empty()) {
        const std::size_t i = ready.top();
        ready.pop();
        order.push_back(graph.nodes[i].id);
        for (std::size_t c : consumers[i]) {
            if (--pending[c] == 0) ready.push(c);
        }
    }
    if (order.size() != n) {
        std::string stuck;
        for (std::size_t i = 0; i < n; ++i) {
            if (pending[i] > 0) stuck += (stuck.empty() ? "" : ", ") + graph.nodes[i].id;
        }
        throw Error(ErrorCode::CycleDetected, "cycle through nodes: " + stuck);
    }
    return order;
}

/// Number of output positions along one axis.
inline std::int64_t output_extent(std::int64_t dim, int window, int stride, Padding padding) {
    if (padding == Padding::Same) return (dim + stride - 1) / stride;
    if (dim < window) return 0;
    return (dim - window) / stride + 1;
}

namespace detail {

inline TensorShape spatial(const TensorShape& in, int window, int stride, Padding padding, std::int64_t channels,
                           const std::string& id) {
    TensorShape out{output_extent(in.height, window, stride, padding),
                    output_extent(in.width, window, stride, padding), channels};
    if (out.height < 1 || out.width < 1) {
        throw Error(ErrorCode::NonPositiveDim, "node '" + id + "': window " + std::to_string(window) +
                                                   " exceeds input " + to_string(in) + " under valid padding");
    }
    return out;
}

} // namespace detail

/// Output shape of a single node given its input shapes.
inline TensorShape infer_node_shape(const LayerNode& node, const std::vector<TensorShape>& in,
                                    const TensorShape& graph_input) {
    return std::visit(
        [&](const auto& l) -> TensorShape {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, layer::Input>) {
                return graph_input;
            } else if constexpr (std::is_same_v<T, layer::Conv2D>) {
                return detail::spatial(in[0], l.kernel, l.stride, l.padding, l.filters, node.id);
            } else if constexpr (std::is_same_v<T, layer::SeparableConv2D>) {
                if (l.depthwise_only && l.filters != in[0].channels) {
                    throw Error(ErrorCode::ShapeMismatch, "depthwise node '" + node.id + "' has " +
                                                              std::to_string(l.filters) + " filters but " +
                                                              std::to_string(in[0].channels) + " input channels");
                }
                return detail::spatial(in[0], l.kernel, l.stride, l.padding, l.filters, node.id);
            } else if constexpr (std::is_same_v<T, layer::MaxPool>) {
                return detail::spatial(in[0], l.pool_size, l.stride, l.padding, in[0].channels, node.id);
            } else if constexpr (std::is_same_v<T, layer::GlobalAvgPool>) {
                return TensorShape{1, 1, in[0].channels};
            } else if constexpr (std::is_same_v<T, layer::Dense>) {
                return TensorShape{1, 1, l.units};
            } else if constexpr (std::is_same_v<T, layer::Add>) {
                if (!(in[0] == in[1])) {
                    throw Error(ErrorCode::ShapeMismatch, "Add node '" + node.id + "' joins " + to_string(in[0]) +
                                                              " and " + to_string(in[1]));
                }
                return in[0];
            } else {
                return in[0];
            }
        },
        node.kind);
}

inline ShapeMap infer_shapes(const ModelGraph& graph) {
    if (!graph.input_shape.valid()) {
        throw Error(ErrorCode::NonPositiveDim, "input shape " + to_string(graph.input_shape) + " is not positive");
    }
    const auto order = topo_sort(graph);
    const auto index = detail::index_by_id(graph);
    ShapeMap shapes;
    shapes.reserve(order.size());
    std::vector<TensorShape> in;
    for (const auto& id : order) {
        const LayerNode& node = graph.nodes[index.at(id)];
        detail::check_arity(node);
        in.clear();
        for (const auto& src : node.inputs) in.push_back(shapes.at(src));
        shapes.emplace(id, infer_node_shape(node, in, graph.input_shape));
    }
    return shapes;
}

/// Consumers of each node, in node-list order.
inline std::unordered_map<std::string, std::vector<std::string>> consumers_of(const ModelGraph& graph) {
    std::unordered_map<std::string, std::vector<std::string>> out;
    for (const auto& n : graph.nodes) out[n.id];
    for (const auto& n : graph.nodes) {
        for (const auto& in : n.inputs) out[in].push_back(n.id);
    }
    return out;
}

/// Full structural check: ids, references, arity, attributes, acyclicity,
/// single Input, single terminal node, and shape consistency.
inline void validate(const ModelGraph& graph) {
    if (graph.num_classes < 1) {
        throw Error(ErrorCode::InvalidGraph, "num_classes must be positive");
    }
    detail::index_by_id(graph);
    std::size_t inputs = 0;
    for (const auto& n : graph.nodes) {
        detail::check_arity(n);
        check_attributes(n.kind, n.id);
        if (is<layer::Input>(n.kind)) ++inputs;
    }
    if (inputs != 1) {
        throw Error(ErrorCode::InvalidGraph, "expected exactly one Input node, found " + std::to_string(inputs));
    }
    topo_sort(graph);
    const auto consumers = consumers_of(graph);
    std::size_t terminals = 0;
    for (const auto& n : graph.nodes) {
        if (consumers.at(n.id).empty()) ++terminals;
    }
    if (terminals != 1) {
        throw Error(ErrorCode::InvalidGraph,
                    "expected exactly one terminal node, found " + std::to_string(terminals));
    }
    infer_shapes(graph);
}

// Tags follow "<flow>/module<N>[/<role>]"; nodes outside any module carry
// other tags (e.g. "head") or none.

struct TagParts {
    std::string module;  // "<flow>/module<N>", empty when not in a module
    std::string role;    // trailing role segment, may be empty
};

inline TagParts parse_tag(const std::optional<std::string>& tag) {
    if (!tag) return {};
    const std::string& t = *tag;
    const auto first = t.find('/');
    if (first == std::string::npos) return {};
    const auto second = t.find('/', first + 1);
    const std::string segment = t.substr(first + 1, second == std::string::npos ? std::string::npos : second - first - 1);
    if (segment.rfind("module", 0) != 0) return {};
    if (second == std::string::npos) return {t, ""};
    return {t.substr(0, second), t.substr(second + 1)};
}

inline std::string module_of(const LayerNode& node) { return parse_tag(node.tag).module; }
inline std::string role_of(const LayerNode& node) { return parse_tag(node.tag).role; }

/// Distinct module keys in node-list order.
inline std::vector<std::string> module_keys(const ModelGraph& graph) {
    std::vector<std::string> keys;
    for (const auto& n : graph.nodes) {
        auto m = module_of(n);
        if (!m.empty() && std::find(keys.begin(), keys.end(), m) == keys.end()) keys.push_back(std::move(m));
    }
    return keys;
}

/// Structural equality ignoring node ids: nodes are paired by walking back
/// from the terminal node through ordered inputs.
inline bool isomorphic(const ModelGraph& a, const ModelGraph& b) {
    if (a.nodes.size() != b.nodes.size() || !(a.input_shape == b.input_shape) || a.num_classes != b.num_classes) {
        return false;
    }
    auto terminal = [](const ModelGraph& g) -> const LayerNode* {
        const auto consumers = consumers_of(g);
        const LayerNode* found = nullptr;
        for (const auto& n : g.nodes) {
            if (consumers.at(n.id).empty()) {
                if (found) return nullptr;
                found = &n;
            }
        }
        return found;
    };
    const LayerNode* ta = terminal(a);
    const LayerNode* tb = terminal(b);
    if (!ta || !tb) return false;
    std::unordered_map<std::string, std::string> pairing;
    std::unordered_set<std::string> used_b;
    std::vector<std::pair<const LayerNode*, const LayerNode*>> stack{{ta, tb}};
    while (!stack.empty()) {
        auto [na, nb] = stack.back();
        stack.pop_back();
        auto it = pairing.find(na->id);
        if (it != pairing.end()) {
            if (it->second != nb->id) return false;
            continue;
        }
        if (used_b.count(nb->id)) return false;
        if (!(na->kind == nb->kind) || na->tag != nb->tag || na->inputs.size() != nb->inputs.size()) return false;
        pairing.emplace(na->id, nb->id);
        used_b.insert(nb->id);
        for (std::size_t i = 0; i < na->inputs.size(); ++i) {
            const LayerNode* ia = a.find(na->inputs[i]);
            const LayerNode* ib = b.find(nb->inputs[i]);
            if (!ia || !ib) return false;
            stack.emplace_back(ia, ib);
        }
    }
    return pairing.size() == a.nodes.size();
}

} // namespace cnd
