#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cndkit/analyzer.hpp"
#include "cndkit/graph_ir.hpp"
#include "cndkit/model_zoo.hpp"

namespace cnd {

struct NodeChange {
    std::string id;
    std::string before;  // "-" when the node was inserted
    std::string after;   // "-" when the node was removed

    friend bool operator==(const NodeChange&, const NodeChange&) = default;
};

struct PassReport {
    std::string pass_name;
    std::vector<NodeChange> nodes_changed;
    std::int64_t params_before = 0;
    std::int64_t params_after = 0;
    std::vector<std::string> violations;
};

template <typename Result>
struct PassResult {
    ModelGraph graph;
    Result report;
};

// ---------------------------------------------------------------------------
// Shared module helpers

namespace detail {

/// Separable convs of a module's main path, in topological order.
inline std::vector<std::string> main_separable_convs(const ModelGraph& graph, const std::vector<std::string>& order,
                                                     const std::string& module) {
    std::vector<std::string> out;
    for (const auto& id : order) {
        const LayerNode& n = *graph.find(id);
        if (is<layer::SeparableConv2D>(n.kind) && module_of(n) == module && role_of(n) != "shortcut") {
            out.push_back(id);
        }
    }
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Fire constraint validation

/// One message per fire module that violates s1x1 < e1x1 + e3x3 or is
/// missing one of its three convolutions.
inline std::vector<std::string> validate_fire_constraints(const ModelGraph& graph) {
    struct Triple {
        std::optional<std::int64_t> s, e1, e3;
    };
    std::vector<std::string> order;
    std::map<std::string, Triple> triples;
    for (const auto& n : graph.nodes) {
        if (!is_conv(n.kind)) continue;
        const auto parts = parse_tag(n.tag);
        if (parts.role != "squeeze" && parts.role != "expand1" && parts.role != "expand3") continue;
        const std::int64_t filters = std::visit(
            [](const auto& l) -> std::int64_t {
                if constexpr (requires { l.filters; }) return l.filters;
                return 0;
            },
            n.kind);
        if (!triples.count(parts.module)) order.push_back(parts.module);
        auto& t = triples[parts.module];
        (parts.role == "squeeze" ? t.s : parts.role == "expand1" ? t.e1 : t.e3) = filters;
    }
    std::vector<std::string> violations;
    for (const auto& module : order) {
        const auto& t = triples.at(module);
        if (!t.s || !t.e1 || !t.e3) {
            violations.push_back(module + ": incomplete fire module (needs squeeze, expand1 and expand3)");
            continue;
        }
        if (!(*t.s < *t.e1 + *t.e3)) {
            violations.push_back(module + ": s1x1=" + std::to_string(*t.s) + " e1x1=" + std::to_string(*t.e1) +
                                 " e3x3=" + std::to_string(*t.e3) + " violates s1x1 < e1x1 + e3x3 (" +
                                 std::to_string(*t.s) + " >= " + std::to_string(*t.e1 + *t.e3) + ")");
        }
    }
    return violations;
}

// ---------------------------------------------------------------------------
// Kernel replacement

/// In every tagged module, a leading 3x3 separable conv becomes 1x1.
/// Filters, stride and padding are kept. Modules whose first separable
/// conv is already 1x1 are left alone, so the pass is idempotent.
inline PassResult<PassReport> strategy1_replace_kernels(const ModelGraph& graph) {
    PassReport report;
    report.pass_name = "strategy1_replace_kernels";
    report.params_before = count_params(graph).total;

    ModelGraph out = graph;
    const auto order = topo_sort(graph);
    std::unordered_set<std::string> visited;
    for (const auto& id : order) {
        const LayerNode& n = *graph.find(id);
        const std::string module = module_of(n);
        if (module.empty() || role_of(n) == "shortcut" || !is<layer::SeparableConv2D>(n.kind)) continue;
        if (!visited.insert(module).second) continue;
        const auto& sep = std::get<layer::SeparableConv2D>(n.kind);
        if (sep.kernel != 3) continue;
        auto& target = *std::find_if(out.nodes.begin(), out.nodes.end(), [&](const LayerNode& m) { return m.id == id; });
        auto rewritten = sep;
        rewritten.kernel = 1;
        target.kind = rewritten;
        report.nodes_changed.push_back({id, describe(n.kind), describe(target.kind)});
    }
    report.params_after = count_params(out).total;
    report.violations = validate_fire_constraints(out);
    return {std::move(out), std::move(report)};
}

// ---------------------------------------------------------------------------
// Fire-module insertion

namespace detail {

inline ModelGraph insert_fire(const ModelGraph& graph, const std::string& module, const FireModuleSpec& spec,
                              std::vector<NodeChange>& changes) {
    const auto order = topo_sort(graph);
    const auto seps = main_separable_convs(graph, order, module);
    if (seps.empty()) {
        bool exists = std::any_of(graph.nodes.begin(), graph.nodes.end(),
                                  [&](const LayerNode& n) { return module_of(n) == module; });
        throw Error(ErrorCode::UnknownModuleTag,
                    exists ? module + " has no separable convolutions to replace" : "no module tagged " + module);
    }
    const auto consumers = consumers_of(graph);

    // Body: the chain from the first separable conv through the last one,
    // extended over trailing BatchNorm/Activation nodes.
    std::vector<std::string> body{seps.front()};
    const std::string& last_sep = seps.back();
    bool passed_last = seps.front() == last_sep;
    while (true) {
        const auto& next = consumers.at(body.back());
        if (next.size() != 1) break;
        const LayerNode& cand = *graph.find(next.front());
        if (module_of(cand) != module) break;
        const bool chain_kind = is<layer::SeparableConv2D>(cand.kind) || is<layer::BatchNorm>(cand.kind) ||
                                is<layer::Activation>(cand.kind);
        if (passed_last && !(is<layer::BatchNorm>(cand.kind) || is<layer::Activation>(cand.kind))) break;
        if (!chain_kind) {
            throw Error(ErrorCode::UnknownModuleTag,
                        module + ": separable convolutions are not a single chain (interrupted at '" + cand.id + "')");
        }
        body.push_back(cand.id);
        if (cand.id == last_sep) passed_last = true;
    }
    if (!passed_last) {
        throw Error(ErrorCode::UnknownModuleTag, module + ": separable convolutions are not a single chain");
    }

    const std::string body_in = graph.find(body.front())->inputs.front();
    const std::string body_out = body.back();
    const std::unordered_set<std::string> removed(body.begin(), body.end());
    const auto fire = make_fire_module(body_in, module, spec);
    const std::string fire_out = fire.back().id;
    for (const auto& n : fire) {
        if (graph.find(n.id) && !removed.count(n.id)) {
            throw Error(ErrorCode::DuplicateId, "fire node id '" + n.id + "' already used outside " + module);
        }
    }

    ModelGraph out = graph;
    out.nodes.clear();
    for (const auto& n : graph.nodes) {
        if (removed.count(n.id)) {
            if (n.id == body.front()) out.nodes.insert(out.nodes.end(), fire.begin(), fire.end());
            if (is_conv(n.kind)) changes.push_back({n.id, describe(n.kind), "-"});
            continue;
        }
        LayerNode copy = n;
        for (auto& in : copy.inputs) {
            if (in == body_out) in = fire_out;
        }
        out.nodes.push_back(std::move(copy));
    }
    for (const auto& n : fire) {
        if (is_conv(n.kind)) changes.push_back({n.id, "-", describe(n.kind)});
    }

    // Residual: the module's Add, if any, joins the main path with either a
    // projection (conv tagged shortcut, possibly behind BatchNorm) or the
    // module input itself.
    auto add_it = std::find_if(out.nodes.begin(), out.nodes.end(), [&](const LayerNode& n) {
        return is<layer::Add>(n.kind) && module_of(n) == module;
    });
    if (add_it == out.nodes.end()) return out;

    const std::string add_id = add_it->id;
    std::size_t shortcut_slot = 2;
    for (std::size_t slot = 0; slot < 2; ++slot) {
        const LayerNode* src = out.find(add_it->inputs[slot]);
        if (src && role_of(*src) == "shortcut") shortcut_slot = slot;
    }
    if (shortcut_slot == 2) {
        // Identity residual: the input that is not downstream of the fire module.
        for (std::size_t slot = 0; slot < 2; ++slot) {
            std::string cur = add_it->inputs[slot];
            bool from_fire = false;
            std::unordered_set<std::string> seen;
            std::vector<std::string> stack{cur};
            while (!stack.empty() && !from_fire) {
                cur = stack.back();
                stack.pop_back();
                if (!seen.insert(cur).second) continue;
                if (cur == fire_out) from_fire = true;
                const LayerNode* n = out.find(cur);
                if (n && module_of(*n) == module) {
                    for (const auto& in : n->inputs) stack.push_back(in);
                }
            }
            if (!from_fire) shortcut_slot = slot;
        }
    }
    if (shortcut_slot == 2) {
        throw Error(ErrorCode::ResidualShapeBroken, module + ": cannot identify the residual branch of '" + add_id + "'");
    }

    const std::string shortcut_src = add_it->inputs[shortcut_slot];
    const LayerNode* src_node = out.find(shortcut_src);
    if (role_of(*src_node) == "shortcut") {
        // Walk back to the projection conv and resize it.
        std::string cur = shortcut_src;
        while (true) {
            auto it = std::find_if(out.nodes.begin(), out.nodes.end(), [&](const LayerNode& n) { return n.id == cur; });
            if (auto* c = std::get_if<layer::Conv2D>(&it->kind)) {
                if (c->filters != spec.e3x3) {
                    const std::string before = describe(it->kind);
                    c->filters = spec.e3x3;
                    changes.push_back({it->id, before, describe(it->kind)});
                }
                break;
            }
            if (it->inputs.size() != 1 || role_of(*out.find(it->inputs.front())) != "shortcut") {
                throw Error(ErrorCode::ResidualShapeBroken, module + ": shortcut branch has no projection conv");
            }
            cur = it->inputs.front();
        }
    }
    // Identity residuals are widened, if needed, by repair_identity_residuals.
    return out;
}

/// After a width change upstream, an untouched module with an identity
/// residual can end up adding tensors of different depth. Such residuals get
/// a 1x1 projection to the main path's width.
inline ModelGraph repair_identity_residuals(ModelGraph graph, std::vector<NodeChange>& changes) {
    while (true) {
        const auto order = topo_sort(graph);
        ShapeMap shapes;
        std::vector<TensorShape> in;
        const LayerNode* broken = nullptr;
        for (const auto& id : order) {
            const LayerNode& n = *graph.find(id);
            in.clear();
            for (const auto& src : n.inputs) in.push_back(shapes.at(src));
            if (is<layer::Add>(n.kind) && in[0].area() == in[1].area() && in[0].channels != in[1].channels) {
                broken = &n;
                break;
            }
            shapes.emplace(id, infer_node_shape(n, in, graph.input_shape));
        }
        if (!broken) return graph;

        const std::string module = module_of(*broken);
        std::size_t slot = 2;
        for (std::size_t i = 0; i < 2; ++i) {
            const LayerNode& src = *graph.find(broken->inputs[i]);
            if (role_of(src) != "shortcut" && module_of(src) != module) slot = i;
        }
        if (module.empty() || slot == 2) {
            throw Error(ErrorCode::ResidualShapeBroken, "Add node '" + broken->id + "' joins " +
                                                            to_string(shapes.at(broken->inputs[0])) + " and " +
                                                            to_string(shapes.at(broken->inputs[1])));
        }
        const std::int64_t width = shapes.at(broken->inputs[1 - slot]).channels;
        const std::string prefix = id_prefix(module);
        const std::string tag = module + "/shortcut";
        const std::string add_id = broken->id;
        std::vector<LayerNode> projection{
            {prefix + "_shortcut", layer::Conv2D{width, 1, 1, Padding::Same, false}, {broken->inputs[slot]}, tag},
            {prefix + "_shortcut_bn", layer::BatchNorm{}, {prefix + "_shortcut"}, tag}};
        for (const auto& n : projection) {
            if (graph.find(n.id)) throw Error(ErrorCode::DuplicateId, "node id '" + n.id + "' already present");
        }
        auto pos = std::find_if(graph.nodes.begin(), graph.nodes.end(), [&](const LayerNode& n) { return n.id == add_id; });
        pos->inputs[slot] = projection.back().id;
        changes.push_back({projection.front().id, "-", describe(projection.front().kind)});
        graph.nodes.insert(pos, projection.begin(), projection.end());
    }
}

} // namespace detail

/// Replaces the separable stack of each targeted module with a fire module
/// and keeps its residual Add consistent by resizing or inserting the 1x1
/// projection. All specs are checked before anything is rewritten.
inline PassResult<PassReport> strategy2_insert_fire(const ModelGraph& graph,
                                                    const std::map<std::string, FireModuleSpec>& specs) {
    for (const auto& [module, spec] : specs) check_fire_spec(spec, module);
    const auto known = module_keys(graph);
    for (const auto& [module, spec] : specs) {
        if (std::find(known.begin(), known.end(), module) == known.end()) {
            throw Error(ErrorCode::UnknownModuleTag, "no module tagged " + module);
        }
    }

    PassReport report;
    report.pass_name = "strategy2_insert_fire";
    report.params_before = count_params(graph).total;

    ModelGraph out = graph;
    // Rewrite in network order so each module sees its final input width.
    for (const auto& module : known) {
        auto it = specs.find(module);
        if (it == specs.end()) continue;
        out = detail::insert_fire(out, module, it->second, report.nodes_changed);
    }
    try {
        out = detail::repair_identity_residuals(std::move(out), report.nodes_changed);
        infer_shapes(out);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ShapeMismatch) throw Error(ErrorCode::ResidualShapeBroken, e.what());
        throw;
    }
    validate(out);
    report.params_after = count_params(out).total;
    report.violations = validate_fire_constraints(out);
    return {std::move(out), std::move(report)};
}

// ---------------------------------------------------------------------------
// Downsampling audit

struct DownsampleEntry {
    std::string id;
    double depth_fraction = 0.0;
    TensorShape input;
    TensorShape output;
};

struct DownsampleAudit {
    std::vector<DownsampleEntry> entries;
    std::int64_t early_pool_count = 0;
    bool late_downsample_flag = false;
    double total_reduction_log2 = 0.0;
    double late_reduction_log2 = 0.0;
};

/// Lists stride-2 convolutions and MaxPool nodes with their depth fraction
/// (topological index over node count - 1). Spatial reduction of an entry is
/// log2(input area / output area); the flag is set when at least half of the
/// summed reduction happens at depth fraction >= 0.5.
inline DownsampleAudit strategy3_audit(const ModelGraph& graph) {
    const auto order = topo_sort(graph);
    const auto shapes = infer_shapes(graph);
    DownsampleAudit audit;
    const double denom = order.size() > 1 ? static_cast<double>(order.size() - 1) : 1.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const LayerNode& n = *graph.find(order[i]);
        bool listed = is<layer::MaxPool>(n.kind);
        if (const auto* c = std::get_if<layer::Conv2D>(&n.kind)) listed = c->stride == 2;
        if (const auto* s = std::get_if<layer::SeparableConv2D>(&n.kind)) listed = s->stride == 2;
        if (!listed) continue;
        DownsampleEntry e{n.id, static_cast<double>(i) / denom, shapes.at(n.inputs.front()), shapes.at(n.id)};
        const double reduction =
            std::log2(static_cast<double>(e.input.area()) / static_cast<double>(e.output.area()));
        audit.total_reduction_log2 += reduction;
        if (e.depth_fraction >= 0.5) {
            audit.late_reduction_log2 += reduction;
        } else if (is<layer::MaxPool>(n.kind)) {
            ++audit.early_pool_count;
        }
        audit.entries.push_back(std::move(e));
    }
    audit.late_downsample_flag =
        audit.total_reduction_log2 > 0.0 && audit.late_reduction_log2 >= 0.5 * audit.total_reduction_log2;
    return audit;
}

// ---------------------------------------------------------------------------
// Diff

struct DiffRow {
    std::string module;
    std::vector<int> kernels_a, kernels_b;
    std::vector<std::int64_t> filters_a, filters_b;
    std::int64_t params_a = 0;
    std::int64_t params_b = 0;
};

struct DiffReport {
    std::string name_a, name_b;
    std::vector<DiffRow> rows;
    std::int64_t total_a = 0;
    std::int64_t total_b = 0;

    /// (a - b) / a, in percent.
    double reduction_percent() const {
        return total_a == 0 ? 0.0 : 100.0 * static_cast<double>(total_a - total_b) / static_cast<double>(total_a);
    }
};

inline DiffReport diff(const ModelGraph& original, const ModelGraph& transformed) {
    DiffReport report;
    report.name_a = original.name;
    report.name_b = transformed.name;
    std::vector<std::string> keys;
    std::map<std::string, DiffRow> rows;
    const std::string other = "(outside modules)";
    auto collect = [&](const ModelGraph& g, bool first) {
        const auto params = count_params(g);
        std::unordered_map<std::string, std::int64_t> by_id;
        for (const auto& p : params.per_layer) by_id[p.id] = p.total();
        for (const auto& id : topo_sort(g)) {
            const LayerNode& n = *g.find(id);
            std::string key = module_of(n);
            if (key.empty()) key = other;
            if (!rows.count(key)) {
                keys.push_back(key);
                rows[key].module = key;
            }
            DiffRow& row = rows[key];
            (first ? row.params_a : row.params_b) += by_id.at(id);
            std::visit(
                [&](const auto& l) {
                    if constexpr (requires { l.kernel; }) {
                        (first ? row.kernels_a : row.kernels_b).push_back(l.kernel);
                        (first ? row.filters_a : row.filters_b).push_back(l.filters);
                    }
                },
                n.kind);
        }
        (first ? report.total_a : report.total_b) = params.total;
    };
    collect(original, true);
    collect(transformed, false);
    for (const auto& k : keys) report.rows.push_back(rows.at(k));
    return report;
}

inline std::string render(const DiffReport& report) {
    auto join = [](const auto& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
        return s.empty() ? std::string("-") : s;
    };
    std::ostringstream os;
    os << std::left << std::setw(24) << "module" << std::setw(18) << "kernels(a)" << std::setw(18) << "kernels(b)"
       << std::setw(26) << "filters(a)" << std::setw(26) << "filters(b)" << std::right << std::setw(12)
       << "params(a)" << std::setw(12) << "params(b)" << std::setw(12) << "delta" << "\n";
    for (const auto& r : report.rows) {
        os << std::left << std::setw(24) << r.module << std::setw(18) << join(r.kernels_a) << std::setw(18)
           << join(r.kernels_b) << std::setw(26) << join(r.filters_a) << std::setw(26) << join(r.filters_b)
           << std::right << std::setw(12) << r.params_a << std::setw(12) << r.params_b << std::setw(12)
           << (r.params_b - r.params_a) << "\n";
    }
    os << "total " << report.name_a << ": " << report.total_a << " (" << format_millions(report.total_a) << ")\n";
    os << "total " << report.name_b << ": " << report.total_b << " (" << format_millions(report.total_b) << ")\n";
    os << "reduction: " << std::fixed << std::setprecision(2) << report.reduction_percent() << "%\n";
    return os.str();
}

} // namespace cnd
