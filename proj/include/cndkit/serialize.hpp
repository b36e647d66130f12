#pragma once

#include <set>
#include <string>
#include <string_view>

#include <json.hpp>

#include "cndkit/error.hpp"
#include "cndkit/graph_ir.hpp"

namespace cnd {

inline constexpr int kSchemaVersion = 1;

using ordered_json = nlohmann::ordered_json;

namespace detail {

inline ordered_json attrs_to_json(const LayerKind& kind) {
    ordered_json a = ordered_json::object();
    std::visit(
        [&](const auto& l) {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, layer::Conv2D>) {
                a["filters"] = l.filters;
                a["kernel"] = l.kernel;
                a["stride"] = l.stride;
                a["padding"] = to_string(l.padding);
                a["has_bias"] = l.has_bias;
            } else if constexpr (std::is_same_v<T, layer::SeparableConv2D>) {
                a["filters"] = l.filters;
                a["kernel"] = l.kernel;
                a["stride"] = l.stride;
                a["padding"] = to_string(l.padding);
                a["depthwise_only"] = l.depthwise_only;
            } else if constexpr (std::is_same_v<T, layer::MaxPool>) {
                a["pool_size"] = l.pool_size;
                a["stride"] = l.stride;
                a["padding"] = to_string(l.padding);
            } else if constexpr (std::is_same_v<T, layer::Activation>) {
                a["function"] = to_string(l.fn);
            } else if constexpr (std::is_same_v<T, layer::Dense>) {
                a["units"] = l.units;
                a["has_bias"] = l.has_bias;
            }
        },
        kind);
    return a;
}

/// Reads attributes with strict key checking; `where` prefixes error paths.
class AttrReader {
public:
    AttrReader(const nlohmann::json& attrs, std::string where) : attrs_(attrs), where_(std::move(where)) {
        if (!attrs_.is_object()) fail("attrs", "expected an object");
    }

    template <typename T>
    T get(const std::string& key) {
        seen_.insert(key);
        auto it = attrs_.find(key);
        if (it == attrs_.end()) fail(key, "missing attribute");
        try {
            if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
                if (!it->is_number_integer()) fail(key, "expected an integer");
            }
            return it->template get<T>();
        } catch (const nlohmann::json::exception&) {
            fail(key, "wrong type");
        }
        return T{};
    }

    Padding padding() {
        const auto p = get<std::string>("padding");
        if (p == "same") return Padding::Same;
        if (p == "valid") return Padding::Valid;
        fail("padding", "unknown padding '" + p + "'");
        return Padding::Same;
    }

    ActivationFn activation() {
        const auto f = get<std::string>("function");
        if (f == "relu") return ActivationFn::Relu;
        if (f == "relu6") return ActivationFn::Relu6;
        if (f == "softmax") return ActivationFn::Softmax;
        if (f == "sigmoid") return ActivationFn::Sigmoid;
        fail("function", "unknown activation '" + f + "'");
        return ActivationFn::Relu;
    }

    void finish() const {
        for (const auto& [key, value] : attrs_.items()) {
            if (!seen_.count(key)) fail(key, "unknown attribute");
        }
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        throw Error(ErrorCode::ParseError, "field " + where_ + "." + key + ": " + what);
    }

private:
    const nlohmann::json& attrs_;
    std::string where_;
    std::set<std::string> seen_;
};

inline LayerKind kind_from_json(const std::string& kind, const nlohmann::json& attrs, const std::string& where) {
    AttrReader r(attrs, where + ".attrs");
    LayerKind out;
    if (kind == "Input") {
        out = layer::Input{};
    } else if (kind == "Conv2D") {
        layer::Conv2D c;
        c.filters = r.get<std::int64_t>("filters");
        c.kernel = r.get<int>("kernel");
        c.stride = r.get<int>("stride");
        c.padding = r.padding();
        c.has_bias = r.get<bool>("has_bias");
        out = c;
    } else if (kind == "SeparableConv2D") {
        layer::SeparableConv2D s;
        s.filters = r.get<std::int64_t>("filters");
        s.kernel = r.get<int>("kernel");
        s.stride = r.get<int>("stride");
        s.padding = r.padding();
        s.depthwise_only = r.get<bool>("depthwise_only");
        out = s;
    } else if (kind == "MaxPool") {
        layer::MaxPool p;
        p.pool_size = r.get<int>("pool_size");
        p.stride = r.get<int>("stride");
        p.padding = r.padding();
        out = p;
    } else if (kind == "GlobalAvgPool") {
        out = layer::GlobalAvgPool{};
    } else if (kind == "BatchNorm") {
        out = layer::BatchNorm{};
    } else if (kind == "Activation") {
        out = layer::Activation{r.activation()};
    } else if (kind == "Add") {
        out = layer::Add{};
    } else if (kind == "Dense") {
        layer::Dense d;
        d.units = r.get<std::int64_t>("units");
        d.has_bias = r.get<bool>("has_bias");
        out = d;
    } else {
        throw Error(ErrorCode::ParseError, "field " + where + ".kind: unknown layer kind '" + kind + "'");
    }
    r.finish();
    return out;
}

inline void check_keys(const nlohmann::json& obj, std::initializer_list<std::string_view> allowed,
                       const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw Error(ErrorCode::ParseError, "field " + where + "." + key + ": unknown field");
        }
    }
    for (auto key : allowed) {
        if (!obj.contains(std::string(key))) {
            throw Error(ErrorCode::ParseError, "field " + where + "." + std::string(key) + ": missing");
        }
    }
}

inline std::size_t line_of(std::string_view text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

} // namespace detail

inline ordered_json to_json(const ModelGraph& graph) {
    ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["name"] = graph.name;
    j["input_shape"] = {graph.input_shape.height, graph.input_shape.width, graph.input_shape.channels};
    j["num_classes"] = graph.num_classes;
    j["metadata"] = ordered_json::object();
    for (const auto& [k, v] : graph.metadata) j["metadata"][k] = v;
    j["nodes"] = ordered_json::array();
    for (const auto& n : graph.nodes) {
        ordered_json node;
        node["id"] = n.id;
        node["kind"] = kind_name(n.kind);
        node["attrs"] = detail::attrs_to_json(n.kind);
        node["inputs"] = n.inputs;
        node["tag"] = n.tag ? ordered_json(*n.tag) : ordered_json(nullptr);
        j["nodes"].push_back(std::move(node));
    }
    return j;
}

/// Validates first; output is byte-stable for a given graph.
inline std::string serialize(const ModelGraph& graph) {
    validate(graph);
    return to_json(graph).dump(2) + "\n";
}

inline ModelGraph from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(ErrorCode::ParseError, "top level must be an object");
    if (!j.contains("schema_version") || !j["schema_version"].is_number_integer()) {
        throw Error(ErrorCode::ParseError, "field schema_version: missing or not an integer");
    }
    const auto version = j["schema_version"].get<std::int64_t>();
    if (version != kSchemaVersion) {
        throw Error(ErrorCode::SchemaVersionUnsupported, "schema_version " + std::to_string(version) +
                                                             " (supported: " + std::to_string(kSchemaVersion) + ")");
    }
    detail::check_keys(j, {"schema_version", "name", "input_shape", "num_classes", "metadata", "nodes"}, "model");
    ModelGraph g;
    try {
        g.name = j.at("name").get<std::string>();
        const auto& shape = j.at("input_shape");
        if (!shape.is_array() || shape.size() != 3) {
            throw Error(ErrorCode::ParseError, "field input_shape: expected [H,W,C]");
        }
        g.input_shape = {shape[0].get<std::int64_t>(), shape[1].get<std::int64_t>(), shape[2].get<std::int64_t>()};
        g.num_classes = j.at("num_classes").get<std::int64_t>();
        for (const auto& [k, v] : j.at("metadata").items()) g.metadata[k] = v.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("model header: ") + e.what());
    }
    if (!j.contains("nodes")) throw Error(ErrorCode::ParseError, "field nodes: missing");
    const auto& nodes = j.at("nodes");
    if (!nodes.is_array()) throw Error(ErrorCode::ParseError, "field nodes: expected an array");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const std::string where = "nodes[" + std::to_string(i) + "]";
        const auto& jn = nodes[i];
        if (!jn.is_object()) throw Error(ErrorCode::ParseError, "field " + where + ": expected an object");
        detail::check_keys(jn, {"id", "kind", "attrs", "inputs", "tag"}, where);
        LayerNode n;
        try {
            n.id = jn.at("id").get<std::string>();
            const auto kind = jn.at("kind").get<std::string>();
            n.kind = detail::kind_from_json(kind, jn.at("attrs"), where);
            n.inputs = jn.at("inputs").get<std::vector<std::string>>();
            if (!jn.at("tag").is_null()) n.tag = jn.at("tag").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::ParseError, "field " + where + ": " + e.what());
        }
        g.nodes.push_back(std::move(n));
    }
    validate(g);
    return g;
}

inline ModelGraph deserialize(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::ParseError,
                    "line " + std::to_string(detail::line_of(text, e.byte == 0 ? 0 : e.byte - 1)) + ": " + e.what());
    }
    return from_json(j);
}

} // namespace cnd
