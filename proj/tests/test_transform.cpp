#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "cndkit/analyzer.hpp"
#include "cndkit/cnd_transform.hpp"
#include "cndkit/model_zoo.hpp"

using namespace cnd;

namespace {

/// in -> [sep(f0,k0) -> sep(f1,k1) ...] all tagged `module`.
ModelGraph sep_chain(const std::vector<std::pair<std::int64_t, int>>& layers, const std::string& module,
                     TensorShape in = {16, 16, 64}) {
    ModelGraph g;
    g.name = "chain";
    g.input_shape = in;
    g = add_layer(g, {"in", layer::Input{}, {}, {}});
    std::string prev = "in";
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string id = "s" + std::to_string(i);
        g = add_layer(g, {id, layer::SeparableConv2D{layers[i].first, layers[i].second, 1, Padding::Same, false},
                          {prev}, module});
        prev = id;
    }
    return g;
}

std::int64_t params(const ModelGraph& g) { return count_params(g).total; }

std::size_t adds(const ModelGraph& g) {
    return static_cast<std::size_t>(
        std::count_if(g.nodes.begin(), g.nodes.end(), [](const LayerNode& n) { return is<layer::Add>(n.kind); }));
}

std::int64_t depthwise_params(const ModelGraph& g, const std::string& id) {
    for (const auto& p : count_params(g).per_layer) {
        if (p.id == id) return p.depthwise_params;
    }
    return -1;
}

} // namespace

TEST(Strategy1, SingleModuleFirstKernelOnly) {
    const auto g = sep_chain({{128, 3}, {128, 3}}, "entry_flow/module2");
    const auto r = strategy1_replace_kernels(g);
    ASSERT_EQ(r.report.nodes_changed.size(), 1u);
    EXPECT_EQ(r.report.nodes_changed[0].id, "s0");
    EXPECT_EQ(std::get<layer::SeparableConv2D>(r.graph.find("s0")->kind).kernel, 1);
    EXPECT_EQ(std::get<layer::SeparableConv2D>(r.graph.find("s1")->kind).kernel, 3);
    EXPECT_EQ(std::get<layer::SeparableConv2D>(r.graph.find("s0")->kind).filters, 128);
    EXPECT_LT(r.report.params_after, r.report.params_before);
}

TEST(Strategy1, NoThreeByThreeIsIdentity) {
    const auto g = sep_chain({{32, 1}, {16, 1}}, "middle_flow/module5");
    const auto r = strategy1_replace_kernels(g);
    EXPECT_TRUE(r.report.nodes_changed.empty());
    EXPECT_EQ(r.graph, g);
    EXPECT_EQ(r.report.params_before, r.report.params_after);
}

TEST(Strategy1, UntaggedGraphIsIdentity) {
    const auto g = sep_chain({{128, 3}}, "");
    auto untagged = g;
    for (auto& n : untagged.nodes) n.tag.reset();
    const auto r = strategy1_replace_kernels(untagged);
    EXPECT_EQ(r.graph, untagged);
}

TEST(Strategy1, NineFoldDepthwiseReduction) {
    const auto g = sep_chain({{128, 3}}, "entry_flow/module2");
    const auto r = strategy1_replace_kernels(g);
    EXPECT_EQ(depthwise_params(g, "s0"), 576);
    EXPECT_EQ(depthwise_params(r.graph, "s0"), 64);
}

TEST(Strategy1, XceptionEveryRewrittenNodeShrinksNineFold) {
    const auto g = build_xception();
    const auto r = strategy1_replace_kernels(g);
    EXPECT_EQ(r.report.nodes_changed.size(), 13u);
    for (const auto& c : r.report.nodes_changed) {
        EXPECT_EQ(depthwise_params(g, c.id), 9 * depthwise_params(r.graph, c.id)) << c.id;
    }
}

TEST(Strategy1, Idempotent) {
    const auto once = strategy1_replace_kernels(build_xception());
    const auto twice = strategy1_replace_kernels(once.graph);
    EXPECT_EQ(twice.graph, once.graph);
    EXPECT_TRUE(twice.report.nodes_changed.empty());
}

TEST(Strategy1, PreservesStructure) {
    const auto g = build_xception();
    const auto r = strategy1_replace_kernels(g).graph;
    EXPECT_EQ(r.num_classes, g.num_classes);
    EXPECT_EQ(r.input_shape, g.input_shape);
    EXPECT_EQ(adds(r), adds(g));
    EXPECT_EQ(strategy3_audit(r).entries.size(), strategy3_audit(g).entries.size());
}

TEST(Strategy2, ExpandThreeSeesE1Channels) {
    const auto g = build_xception();
    const auto r = strategy2_insert_fire(g, {{"middle_flow/module5", {128, 256, 256}}});
    const auto shapes = infer_shapes(r.graph);
    const LayerNode* e3 = r.graph.find("middle_flow_module5_expand3");
    ASSERT_NE(e3, nullptr);
    EXPECT_EQ(shapes.at(e3->inputs[0]).channels, 256);
    EXPECT_LT(256, shapes.at("block4_add").channels);
    // Output width changed to 256, so the identity residual became a projection.
    const LayerNode* proj = r.graph.find("middle_flow_module5_shortcut");
    ASSERT_NE(proj, nullptr);
    EXPECT_EQ(std::get<layer::Conv2D>(proj->kind).filters, 256);
    // Module 6 is untouched but now receives 256 channels; its residual is widened back to 728.
    const LayerNode* next = r.graph.find("middle_flow_module6_shortcut");
    ASSERT_NE(next, nullptr);
    EXPECT_EQ(std::get<layer::Conv2D>(next->kind).filters, 728);
    EXPECT_NO_THROW(validate(r.graph));
    EXPECT_EQ(adds(r.graph), 12u);
}

TEST(Strategy2, InvalidSpecLeavesGraphUntouched) {
    const auto g = build_xception();
    try {
        strategy2_insert_fire(g, {{"middle_flow/module5", {128, 256, 256}}, {"middle_flow/module6", {64, 32, 16}}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidFireSpec);
        EXPECT_NE(std::string(e.what()).find("middle_flow/module6"), std::string::npos);
    }
    EXPECT_EQ(g, build_xception());
}

TEST(Strategy2, UnknownModuleTag) {
    try {
        strategy2_insert_fire(build_xception(), {{"middle_flow/module99", {16, 32, 32}}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnknownModuleTag);
    }
}

TEST(Strategy2, EntryModuleProjectionResized) {
    const auto r = strategy2_insert_fire(build_xception(), {{"entry_flow/module3", {32, 64, 200}}});
    EXPECT_EQ(std::get<layer::Conv2D>(r.graph.find("block3_shortcut")->kind).filters, 200);
    EXPECT_NO_THROW(validate(r.graph));
}

TEST(Strategy2, RandomSpecsReduceParams) {
    std::mt19937 rng(99);
    const auto g = build_xception();
    const auto before = params(g);
    auto pick = [&](std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };
    for (int t = 0; t < 40; ++t) {
        std::map<std::string, FireModuleSpec> specs;
        // Middle modules: every count up to the original 728 filters.
        for (int m = 5; m <= 12; ++m) {
            if (pick(0, 1) == 0) continue;
            const auto e1 = pick(1, 728), e3 = pick(1, 728);
            specs["middle_flow/module" + std::to_string(m)] = {pick(1, std::min<std::int64_t>(728, e1 + e3 - 1)), e1, e3};
        }
        // Entry modules: squeeze and expand1 at most half the original filters.
        const std::int64_t entry[] = {128, 256, 728};
        for (int i = 0; i < 3; ++i) {
            if (pick(0, 1) == 0) continue;
            const auto e1 = pick(1, entry[i] / 2), e3 = pick(1, entry[i]);
            specs[OptimizedConfig::entry_module_tag(static_cast<std::size_t>(i))] = {
                pick(1, std::min(entry[i] / 2, e1 + e3 - 1)), e1, e3};
        }
        if (specs.empty()) continue;
        const auto r = strategy2_insert_fire(g, specs);
        EXPECT_EQ(r.report.params_before, before);
        EXPECT_LT(r.report.params_after, before);
        EXPECT_EQ(r.report.params_after, params(r.graph));
        EXPECT_TRUE(r.report.violations.empty());
        EXPECT_EQ(adds(r.graph), 12u);
        EXPECT_EQ(strategy3_audit(r.graph).entries.size(), strategy3_audit(g).entries.size());
    }
}

TEST(Strategy2, MonotoneInSqueeze) {
    const auto g = strategy1_replace_kernels(build_xception()).graph;
    std::int64_t prev = 0;
    for (std::int64_t s = 1; s < 512; s += 37) {
        const auto after = strategy2_insert_fire(g, {{"middle_flow/module7", {s, 256, 256}}}).report.params_after;
        EXPECT_GE(after, prev);
        prev = after;
    }
}

TEST(Strategy2, ReportListsInsertedAndRemovedNodes) {
    const auto r = strategy2_insert_fire(build_xception(), {{"middle_flow/module5", {64, 128, 728}}});
    const auto& ch = r.report.nodes_changed;
    auto has = [&](const std::string& id) {
        return std::any_of(ch.begin(), ch.end(), [&](const NodeChange& c) { return c.id == id; });
    };
    EXPECT_TRUE(has("block5_sepconv1"));
    EXPECT_TRUE(has("block5_sepconv3"));
    EXPECT_TRUE(has("middle_flow_module5_squeeze"));
    EXPECT_FALSE(has("middle_flow_module5_shortcut"));
}

TEST(Composition, MatchesOptimizedBuilder) {
    const auto config = OptimizedConfig::defaults();
    const auto s1 = strategy1_replace_kernels(build_xception());
    const auto s2 = strategy2_insert_fire(s1.graph, config.module_specs());
    const auto built = build_optimized_xception({299, 299, 3}, 101, config);
    EXPECT_TRUE(isomorphic(s2.graph, built));
    EXPECT_EQ(params(s2.graph), params(built));
}

TEST(Composition, NonDefaultConfig) {
    auto config = OptimizedConfig::defaults();
    config.entry_fire[1] = {48, 96, 192};
    config.middle_fire[0] = {96, 192, 512};
    config.middle_fire[1] = {96, 192, 512};
    const auto s2 = strategy2_insert_fire(strategy1_replace_kernels(build_xception()).graph, config.module_specs());
    EXPECT_TRUE(isomorphic(s2.graph, build_optimized_xception({299, 299, 3}, 101, config)));
}

TEST(FireConstraints, OptimizedModelClean) {
    EXPECT_TRUE(validate_fire_constraints(build_optimized_xception()).empty());
}

TEST(FireConstraints, HandBuiltViolation) {
    ModelGraph g;
    g.input_shape = {8, 8, 16};
    g = add_layer(g, {"in", layer::Input{}, {}, {}});
    g = add_layer(g, {"s", layer::SeparableConv2D{64, 1, 1, Padding::Same, false}, {"in"}, "x_flow/module3/squeeze"});
    g = add_layer(g, {"e1", layer::SeparableConv2D{32, 1, 1, Padding::Same, false}, {"s"}, "x_flow/module3/expand1"});
    g = add_layer(g, {"e3", layer::SeparableConv2D{16, 3, 1, Padding::Same, false}, {"e1"}, "x_flow/module3/expand3"});
    const auto v = validate_fire_constraints(g);
    ASSERT_EQ(v.size(), 1u);
    for (const char* part : {"x_flow/module3", "64", "32", "16"}) EXPECT_NE(v[0].find(part), std::string::npos);
}

TEST(FireConstraints, NoFireTagsIsVacuous) {
    EXPECT_TRUE(validate_fire_constraints(build_xception()).empty());
    EXPECT_TRUE(validate_fire_constraints(build_mobilenet_v2()).empty());
}

TEST(Strategy3, XceptionAudit) {
    const auto g = build_xception();
    const auto audit = strategy3_audit(g);
    const auto shapes = infer_shapes(g);
    std::vector<std::string> ids;
    for (const auto& e : audit.entries) {
        ids.push_back(e.id);
        EXPECT_EQ(e.output, shapes.at(e.id));
        EXPECT_EQ(e.input, shapes.at(g.find(e.id)->inputs[0]));
    }
    EXPECT_EQ(ids.front(), "block1_conv1");
    for (const char* pool : {"block2_pool", "block3_pool", "block4_pool", "block13_pool"}) {
        EXPECT_NE(std::find(ids.begin(), ids.end(), pool), ids.end()) << pool;
    }
    for (std::size_t i = 1; i < audit.entries.size(); ++i) {
        EXPECT_LE(audit.entries[i - 1].depth_fraction, audit.entries[i].depth_fraction);
    }
    EXPECT_EQ(audit.early_pool_count, 3);
    EXPECT_FALSE(audit.late_downsample_flag);
}

TEST(Strategy3, EarlyPoolingNotLate) {
    ModelGraph g;
    g.input_shape = {64, 64, 4};
    g = add_layer(g, {"n0", layer::Input{}, {}, {}});
    for (int i = 1; i < 20; ++i) {
        const std::string id = "n" + std::to_string(i);
        const std::string prev = "n" + std::to_string(i - 1);
        if (i <= 2) g = add_layer(g, {id, layer::MaxPool{2, 2, Padding::Valid}, {prev}, {}});
        else g = add_layer(g, {id, layer::BatchNorm{}, {prev}, {}});
    }
    const auto audit = strategy3_audit(g);
    EXPECT_EQ(audit.entries.size(), 2u);
    EXPECT_EQ(audit.early_pool_count, 2);
    EXPECT_FALSE(audit.late_downsample_flag);
}

TEST(Strategy3, SingleFinalDownsampleIsLate) {
    ModelGraph g;
    g.input_shape = {32, 32, 4};
    g = add_layer(g, {"n0", layer::Input{}, {}, {}});
    for (int i = 1; i < 10; ++i) {
        const std::string id = "n" + std::to_string(i);
        const std::string prev = "n" + std::to_string(i - 1);
        if (i == 9) g = add_layer(g, {id, layer::Conv2D{8, 3, 2, Padding::Same, false}, {prev}, {}});
        else g = add_layer(g, {id, layer::BatchNorm{}, {prev}, {}});
    }
    const auto audit = strategy3_audit(g);
    ASSERT_EQ(audit.entries.size(), 1u);
    EXPECT_DOUBLE_EQ(audit.entries[0].depth_fraction, 1.0);
    EXPECT_TRUE(audit.late_downsample_flag);
}

TEST(Diff, XceptionVsOptimized) {
    const auto d = diff(build_xception(), build_optimized_xception());
    EXPECT_NEAR(d.reduction_percent(), 100.0 * (1.0 - 15.8 / 21.1), 1.5);
    EXPECT_DOUBLE_EQ(d.reduction_percent(), 100.0 * (d.total_a - d.total_b) / static_cast<double>(d.total_a));
    std::int64_t sum_a = 0, sum_b = 0;
    for (const auto& r : d.rows) {
        sum_a += r.params_a;
        sum_b += r.params_b;
    }
    EXPECT_EQ(sum_a, d.total_a);
    EXPECT_EQ(sum_b, d.total_b);
    EXPECT_NE(render(d).find("reduction: 24.53%"), std::string::npos) << render(d);
}

TEST(Diff, SelfIsZero) {
    const auto g = build_mobilenet_v2();
    const auto d = diff(g, g);
    EXPECT_EQ(d.reduction_percent(), 0.0);
    for (const auto& r : d.rows) {
        EXPECT_EQ(r.params_a, r.params_b);
        EXPECT_EQ(r.kernels_a, r.kernels_b);
        EXPECT_EQ(r.filters_a, r.filters_b);
    }
}
