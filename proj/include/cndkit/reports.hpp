#pragma once

// JSON and text renderings of analysis and pass results, plus parsing of the
// fire-module config files the CLI accepts.

#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "cndkit/analyzer.hpp"
#include "cndkit/cnd_transform.hpp"
#include "cndkit/model_zoo.hpp"
#include "cndkit/pareto.hpp"

namespace cnd {

inline std::string_view to_string(RunMode m) { return m == RunMode::Training ? "training" : "inference"; }
inline std::string_view to_string(Optimizer o) { return o == Optimizer::Adam ? "adam" : "sgd_momentum"; }

inline nlohmann::ordered_json to_json(const PassReport& r) {
    nlohmann::ordered_json j;
    j["pass_name"] = r.pass_name;
    j["nodes_changed"] = nlohmann::ordered_json::array();
    for (const auto& c : r.nodes_changed) {
        j["nodes_changed"].push_back({{"id", c.id}, {"before", c.before}, {"after", c.after}});
    }
    j["params_before"] = r.params_before;
    j["params_after"] = r.params_after;
    j["violations"] = r.violations;
    return j;
}

inline std::string render(const PassReport& r) {
    std::ostringstream os;
    os << r.pass_name << ": " << r.nodes_changed.size() << " node change(s)\n";
    for (const auto& c : r.nodes_changed) {
        os << "  " << std::left << std::setw(34) << c.id << std::setw(40) << c.before << c.after << "\n";
    }
    os << "params: " << r.params_before << " -> " << r.params_after << " (" << format_millions(r.params_before)
       << " -> " << format_millions(r.params_after) << ")\n";
    for (const auto& v : r.violations) os << "violation: " << v << "\n";
    return os.str();
}

inline nlohmann::ordered_json to_json(const ParamReport& r) {
    nlohmann::ordered_json j;
    j["total"] = r.total;
    j["total_trainable"] = r.total_trainable;
    j["total_rounded"] = format_millions(r.total);
    j["per_layer"] = nlohmann::ordered_json::array();
    for (const auto& p : r.per_layer) {
        j["per_layer"].push_back({{"id", p.id},
                                  {"kind", p.kind},
                                  {"in_channels", p.in_channels},
                                  {"filters", p.filters},
                                  {"kernel_elements", p.kernel_elements},
                                  {"kernel_params", p.kernel_params},
                                  {"depthwise_params", p.depthwise_params},
                                  {"aux_params", p.aux_params},
                                  {"trainable", p.trainable}});
    }
    return j;
}

inline nlohmann::ordered_json to_json(const MemoryEstimate& m) {
    nlohmann::ordered_json j;
    j["weights_bytes"] = m.weights_bytes;
    j["gradients_bytes"] = m.gradients_bytes;
    j["optimizer_state_bytes"] = m.optimizer_state_bytes;
    j["activations_bytes"] = m.activations_bytes;
    j["total_bytes"] = m.total_bytes;
    j["assumptions"] = {{"bytes_per_scalar", m.assumptions.bytes_per_scalar},
                        {"optimizer", to_string(m.assumptions.optimizer)},
                        {"optimizer_state_multiplier", state_multiplier(m.assumptions.optimizer)},
                        {"mode", to_string(m.assumptions.mode)},
                        {"batch_size", m.assumptions.batch_size},
                        {"overhead_bytes", m.assumptions.overhead_bytes}};
    return j;
}

struct AnalysisReport {
    std::string model;
    ParamReport params;
    std::int64_t flops = 0;
    MemoryEstimate memory;
};

inline AnalysisReport analyze(const ModelGraph& graph, const MemoryAssumptions& assumptions) {
    return {graph.name, count_params(graph), flops_estimate(graph), memory_estimate(graph, assumptions)};
}

inline nlohmann::ordered_json to_json(const AnalysisReport& r) {
    nlohmann::ordered_json j;
    j["model"] = r.model;
    j["params"] = to_json(r.params);
    j["flops"] = r.flops;
    j["memory"] = to_json(r.memory);
    return j;
}

inline std::string render(const AnalysisReport& r) {
    std::ostringstream os;
    os << "model: " << r.model << "\n";
    os << std::left << std::setw(36) << "layer" << std::setw(18) << "kind" << std::right << std::setw(8) << "N"
       << std::setw(8) << "M" << std::setw(6) << "psi" << std::setw(12) << "kernel" << std::setw(10) << "aux"
       << "\n";
    for (const auto& p : r.params.per_layer) {
        if (p.total() == 0) continue;
        os << std::left << std::setw(36) << p.id << std::setw(18) << p.kind << std::right << std::setw(8)
           << p.in_channels << std::setw(8) << p.filters << std::setw(6) << p.kernel_elements << std::setw(12)
           << p.kernel_params << std::setw(10) << p.aux_params << "\n";
    }
    const auto& m = r.memory;
    os << "total params: " << r.params.total << " (" << format_millions(r.params.total) << ")\n";
    os << "trainable params: " << r.params.total_trainable << "\n";
    os << "flops (MACs): " << r.flops << "\n";
    os << "memory (" << to_string(m.assumptions.mode) << ", " << to_string(m.assumptions.optimizer) << ", batch "
       << m.assumptions.batch_size << "):\n";
    os << "  weights:         " << m.weights_bytes << "\n";
    os << "  gradients:       " << m.gradients_bytes << "\n";
    os << "  optimizer_state: " << m.optimizer_state_bytes << "\n";
    os << "  activations:     " << m.activations_bytes << "\n";
    os << "  overhead:        " << m.assumptions.overhead_bytes << "\n";
    os << "  total:           " << m.total_bytes << "\n";
    return os.str();
}

namespace detail {

inline FireModuleSpec fire_spec_from_json(const nlohmann::json& j, const std::string& where) {
    if (j.is_array()) {
        if (j.size() != 3) throw Error(ErrorCode::ParseError, where + ": expected [s1x1, e1x1, e3x3]");
        return {j[0].get<std::int64_t>(), j[1].get<std::int64_t>(), j[2].get<std::int64_t>()};
    }
    if (!j.is_object()) throw Error(ErrorCode::ParseError, where + ": expected an object");
    for (const auto& [k, v] : j.items()) {
        if (k != "s1x1" && k != "e1x1" && k != "e3x3") {
            throw Error(ErrorCode::ParseError, where + "." + k + ": unknown field");
        }
    }
    return {j.at("s1x1").get<std::int64_t>(), j.at("e1x1").get<std::int64_t>(), j.at("e3x3").get<std::int64_t>()};
}

template <typename F>
auto parse_json_document(std::string_view text, F&& body) {
    try {
        const auto j = nlohmann::json::parse(text.begin(), text.end());
        return body(j);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, e.what());
    }
}

} // namespace detail

/// {"entry_fire": [...3 specs], "middle_fire": [...8 specs], "exit_filters": [4 ints]}.
/// Specs are {"s1x1":..,"e1x1":..,"e3x3":..} or [s1x1, e1x1, e3x3].
/// Missing keys keep their defaults.
inline OptimizedConfig parse_optimized_config(std::string_view text) {
    return detail::parse_json_document(text, [](const nlohmann::json& j) {
        if (!j.is_object()) throw Error(ErrorCode::ParseError, "config must be an object");
        OptimizedConfig c = OptimizedConfig::defaults();
        for (const auto& [k, v] : j.items()) {
            if (k == "entry_fire" || k == "middle_fire") {
                auto& dst = k == "entry_fire" ? c.entry_fire : c.middle_fire;
                dst.clear();
                for (std::size_t i = 0; i < v.size(); ++i) {
                    dst.push_back(detail::fire_spec_from_json(v.at(i), k + "[" + std::to_string(i) + "]"));
                }
            } else if (k == "exit_filters") {
                if (!v.is_array() || v.size() != 4) throw Error(ErrorCode::ParseError, "exit_filters: expected 4 integers");
                for (std::size_t i = 0; i < 4; ++i) c.exit_filters[i] = v[i].get<std::int64_t>();
            } else {
                throw Error(ErrorCode::ParseError, k + ": unknown field");
            }
        }
        return c;
    });
}

/// {"<flow>/module<N>": spec, ...}
inline std::map<std::string, FireModuleSpec> parse_fire_specs(std::string_view text) {
    return detail::parse_json_document(text, [](const nlohmann::json& j) {
        if (!j.is_object()) throw Error(ErrorCode::ParseError, "specs must be an object keyed by module tag");
        std::map<std::string, FireModuleSpec> out;
        for (const auto& [k, v] : j.items()) out[k] = detail::fire_spec_from_json(v, k);
        return out;
    });
}

inline std::string render(const std::vector<ModelMeasurement>& records, const QuadrantConfig& config) {
    config.validate();
    std::ostringstream os;
    os << "accuracy frontier: " << format_number(config.accuracy_frontier) << "\n";
    if (records.empty()) {
        os << "no records\n";
        return os.str();
    }
    const double frontier = resolve_memory_frontier(records, config);
    os << "memory frontier: " << format_number(frontier) << "\n";
    os << std::left << std::setw(20) << "model" << std::right << std::setw(10) << "test_acc" << std::setw(12)
       << "avg_mem_mb" << "  " << "quadrant" << "\n";
    for (const auto& r : records) {
        os << std::left << std::setw(20) << r.model << std::right << std::setw(10) << format_number(r.test_acc)
           << std::setw(12) << format_number(r.avg_mem_mb) << "  " << to_string(classify_quadrant(r, config, frontier))
           << "\n";
    }
    os << "pareto front:";
    for (const auto& r : pareto_front(records)) os << " " << r.model;
    os << "\n";
    return os.str();
}

} // namespace cnd
