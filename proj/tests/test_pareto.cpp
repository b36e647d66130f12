#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "cndkit/pareto.hpp"
#include "oracles.hpp"

using namespace cnd;

namespace {

std::string fixture(const std::string& name) {
    std::ifstream in(std::string(CNDKIT_FIXTURE_DIR) + "/" + name);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::set<std::string> names(const std::vector<ModelMeasurement>& v) {
    std::set<std::string> out;
    for (const auto& r : v) out.insert(r.model);
    return out;
}

std::string label(const std::vector<ModelMeasurement>& records, const std::string& model) {
    const QuadrantConfig config;
    const double frontier = memory_frontier(records);
    for (const auto& r : records) {
        if (r.model == model) return std::string(to_string(classify_quadrant(r, config, frontier)));
    }
    return "missing";
}

ModelMeasurement rec(std::string name, double acc, double mem) {
    ModelMeasurement m;
    m.model = std::move(name);
    m.experiment = "x";
    m.test_acc = acc;
    m.avg_mem_mb = mem;
    return m;
}

std::vector<ModelMeasurement> sorted(std::vector<ModelMeasurement> v) {
    std::sort(v.begin(), v.end(), front_order);
    return v;
}

ErrorCode load_code(const std::string& text) {
    try {
        load_measurements(text);
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "accepted";
    return ErrorCode::InvalidArgument;
}

const std::string kHeader = std::string(kMeasurementHeader) + "\n";

} // namespace

TEST(LoadMeasurements, CaltechFixture) {
    const auto r = load_measurements(fixture("caltech101.csv"));
    ASSERT_EQ(r.size(), 4u);
    EXPECT_EQ(r[0].model, "Optimized");
    EXPECT_DOUBLE_EQ(r[0].test_acc, 76.21);
    EXPECT_EQ(r[0].params, 15'800'000);
    EXPECT_DOUBLE_EQ(*r[0].avg_epoch_time_s, 523.88);
}

TEST(LoadMeasurements, PcbFixturesHaveEmptyOptionals) {
    for (const char* f : {"pcb_scratch.csv", "pcb_pretrained.csv"}) {
        const auto r = load_measurements(fixture(f));
        ASSERT_EQ(r.size(), 4u);
        EXPECT_FALSE(r[0].avg_epoch_time_s.has_value());
        EXPECT_FALSE(r[0].params.has_value());
        EXPECT_TRUE(r[0].avg_inf_time_ms.has_value());
    }
}

TEST(LoadMeasurements, AccuracyOutOfRange) {
    EXPECT_EQ(load_code(kHeader + "M,e,90,120,800,,,\n"), ErrorCode::RangeError);
    EXPECT_EQ(load_code(kHeader + "M,e,-1,50,800,,,\n"), ErrorCode::RangeError);
    EXPECT_EQ(load_code(kHeader + "M,e,90,50,0,,,\n"), ErrorCode::RangeError);
}

TEST(LoadMeasurements, HeaderOnlyIsEmpty) {
    EXPECT_TRUE(load_measurements(kHeader).empty());
}

TEST(LoadMeasurements, ParseErrorsNameRowAndColumn) {
    try {
        load_measurements(kHeader + "A,e,1,2,3,,,\nB,e,1,abc,3,,,\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ParseError);
        EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("test_acc"), std::string::npos) << e.what();
    }
    EXPECT_EQ(load_code(kHeader + "A,e,1,2\n"), ErrorCode::ParseError);
    EXPECT_EQ(load_code("model,acc\nA,1\n"), ErrorCode::ParseError);
}

TEST(LoadMeasurements, CrlfAndQuotedNames) {
    const auto r = load_measurements(std::string(kMeasurementHeader) + "\r\n\"Net, v2\",e,1,2,3,,,\r\n");
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].model, "Net, v2");
    EXPECT_EQ(load_measurements(write_measurements(r)), r);
}

TEST(LoadMeasurements, WriteRoundTrip) {
    const auto r = load_measurements(fixture("caltech101.csv"));
    EXPECT_EQ(load_measurements(write_measurements(r)), r);
}

TEST(MemoryFrontier, Midpoints) {
    EXPECT_DOUBLE_EQ(memory_frontier(load_measurements(fixture("caltech101.csv"))), 848.8);
    EXPECT_DOUBLE_EQ(memory_frontier(load_measurements(fixture("pcb_scratch.csv"))), 871.5);
    EXPECT_DOUBLE_EQ(memory_frontier({rec("a", 50, 123.25)}), 123.25);
}

TEST(MemoryFrontier, EmptyInput) {
    try {
        memory_frontier({});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
    }
}

TEST(Quadrants, CaltechFigure) {
    const auto r = load_measurements(fixture("caltech101.csv"));
    EXPECT_EQ(label(r, "Optimized"), "HighAccLowMem");
    EXPECT_EQ(label(r, "Xception"), "HighAccHighMem");
    EXPECT_EQ(label(r, "EfficientNetV2B1"), "LowAccLowMem");
    EXPECT_EQ(label(r, "MobileNetV2"), "LowAccLowMem");
}

TEST(Quadrants, PcbScratchFigure) {
    const auto r = load_measurements(fixture("pcb_scratch.csv"));
    EXPECT_EQ(label(r, "Optimized"), "HighAccLowMem");
    EXPECT_EQ(label(r, "Xception"), "HighAccHighMem");
    EXPECT_EQ(label(r, "EfficientNetV2B1"), "LowAccHighMem");
    EXPECT_EQ(label(r, "MobileNetV2"), "LowAccLowMem");
}

TEST(Quadrants, BoundaryIsHighAccLowMem) {
    QuadrantConfig c;
    EXPECT_EQ(classify_quadrant(rec("b", 70.0, 500.0), c, 500.0), QuadrantLabel::HighAccLowMem);
    EXPECT_EQ(classify_quadrant(rec("b", 69.99, 500.01), c, 500.0), QuadrantLabel::LowAccHighMem);
}

TEST(Quadrants, ConfigValidation) {
    QuadrantConfig c;
    c.accuracy_frontier = 100.0;
    EXPECT_THROW(c.validate(), Error);
    c.accuracy_frontier = 0.0;
    EXPECT_THROW(c.validate(), Error);
    c.accuracy_frontier = 50.0;
    c.memory_frontier = -1.0;
    EXPECT_THROW(c.validate(), Error);
}

TEST(ParetoFront, Caltech) {
    const auto front = pareto_front(load_measurements(fixture("caltech101.csv")));
    EXPECT_EQ(names(front), (std::set<std::string>{"EfficientNetV2B1", "MobileNetV2", "Optimized"}));
    ASSERT_EQ(front.size(), 3u);
    EXPECT_EQ(front[0].model, "EfficientNetV2B1");
    EXPECT_EQ(front[2].model, "Optimized");
}

TEST(ParetoFront, PcbScratch) {
    const auto r = load_measurements(fixture("pcb_scratch.csv"));
    const auto front = pareto_front(r);
    EXPECT_EQ(names(front), (std::set<std::string>{"MobileNetV2", "Optimized"}));
    EXPECT_TRUE(dominates(r[0], r[1]));
    // EfficientNetV2B1 is more accurate than MobileNetV2 (55.25 vs 50.50), so
    // only the optimized model dominates it.
    EXPECT_TRUE(dominates(r[0], r[2]));
    EXPECT_FALSE(dominates(r[3], r[2]));
}

TEST(ParetoFront, SingleAndEmpty) {
    EXPECT_EQ(pareto_front({rec("a", 1, 1)}).size(), 1u);
    EXPECT_TRUE(pareto_front({}).empty());
}

TEST(ParetoFront, FixturesMatchOracle) {
    for (const char* f : {"caltech101.csv", "pcb_scratch.csv", "pcb_pretrained.csv"}) {
        const auto r = load_measurements(fixture(f));
        EXPECT_EQ(pareto_front(r), sorted(oracle::pareto_front(r))) << f;
    }
}

TEST(ParetoFront, RandomInstancesMatchOracle) {
    std::mt19937 rng(4242);
    for (int t = 0; t < 1000; ++t) {
        const auto n = std::uniform_int_distribution<int>(0, 100)(rng);
        // Coarse grids force ties in both objectives.
        const int grid = std::uniform_int_distribution<int>(3, 60)(rng);
        std::uniform_int_distribution<int> cell(0, grid);
        std::vector<ModelMeasurement> v;
        for (int i = 0; i < n; ++i) {
            v.push_back(rec("m" + std::to_string(i), 100.0 * cell(rng) / grid, 100.0 + 900.0 * cell(rng) / grid));
        }
        const auto front = pareto_front(v);
        ASSERT_EQ(front, sorted(oracle::pareto_front(v))) << "instance " << t;
        for (const auto& a : front)
            for (const auto& b : front) EXPECT_FALSE(dominates(a, b));
    }
}

TEST(ParetoFront, PermutationStable) {
    std::mt19937 rng(8);
    auto r = load_measurements(fixture("caltech101.csv"));
    const auto p = load_measurements(fixture("pcb_scratch.csv"));
    r.insert(r.end(), p.begin(), p.end());
    const auto front = pareto_front(r);
    const auto plot = export_plot_data(sorted(r), {});
    for (int t = 0; t < 50; ++t) {
        std::shuffle(r.begin(), r.end(), rng);
        EXPECT_EQ(pareto_front(r), front);
        EXPECT_DOUBLE_EQ(memory_frontier(r), memory_frontier(sorted(r)));
        EXPECT_EQ(export_plot_data(sorted(r), {}), plot);
    }
}

TEST(ExportPlotData, CaltechRowsAndHeader) {
    const auto r = load_measurements(fixture("caltech101.csv"));
    const auto text = export_plot_data(r, {});
    EXPECT_EQ(text,
              "# accuracy_frontier=70\n"
              "# memory_frontier=848.8\n"
              "model,test_acc,avg_mem_mb,quadrant,on_front\n"
              "Optimized,76.21,847.9,HighAccLowMem,1\n"
              "Xception,75.89,874.6,HighAccHighMem,0\n"
              "EfficientNetV2B1,30.53,823,LowAccLowMem,1\n"
              "MobileNetV2,58.11,838.6,LowAccLowMem,1\n");
}

TEST(ExportPlotData, EmptyInputHeaderOnly) {
    EXPECT_EQ(export_plot_data({}, {}),
              "# accuracy_frontier=70\n# memory_frontier=none\nmodel,test_acc,avg_mem_mb,quadrant,on_front\n");
}

TEST(ExportPlotData, QuadrantColumnMatchesClassifier) {
    const auto r = load_measurements(fixture("pcb_pretrained.csv"));
    QuadrantConfig c;
    c.memory_frontier = 830.0;
    std::istringstream lines(export_plot_data(r, c));
    std::string line;
    std::size_t row = 0;
    while (std::getline(lines, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("model,", 0) == 0) continue;
        EXPECT_NE(line.find(std::string(to_string(classify_quadrant(r[row], c, 830.0)))), std::string::npos);
        ++row;
    }
    EXPECT_EQ(row, r.size());
}

TEST(Quadrants, HighFrontierMakesAllLowAcc) {
    QuadrantConfig c;
    c.accuracy_frontier = 95;
    const auto r = load_measurements(fixture("caltech101.csv"));
    const double f = memory_frontier(r);
    for (const auto& m : r) {
        const auto q = classify_quadrant(m, c, f);
        EXPECT_TRUE(q == QuadrantLabel::LowAccLowMem || q == QuadrantLabel::LowAccHighMem);
    }
}
