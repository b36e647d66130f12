// cndkit: build, transform, analyze and compare CNN architectures.
//
// Exit codes: 0 success, 1 validation/constraint failure, 2 I/O error,
// 3 parse/schema error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "cndkit/cndkit.hpp"

namespace {

enum ExitStatus : int { kOk = 0, kValidation = 1, kIo = 2, kParse = 3 };

int exit_code_for(cnd::ErrorCode code) {
    switch (code) {
        case cnd::ErrorCode::IoError: return kIo;
        case cnd::ErrorCode::ParseError:
        case cnd::ErrorCode::SchemaVersionUnsupported:
        case cnd::ErrorCode::RangeError: return kParse;
        default: return kValidation;
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw cnd::Error(cnd::ErrorCode::IoError, "cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw cnd::Error(cnd::ErrorCode::IoError, "cannot write '" + path + "'");
    out << content;
    if (!out.flush()) throw cnd::Error(cnd::ErrorCode::IoError, "write to '" + path + "' failed");
}

/// Any failure to turn the file into a valid graph counts as a parse error.
cnd::ModelGraph read_model(const std::string& path) {
    const std::string text = read_file(path);
    try {
        return cnd::deserialize(text);
    } catch (const cnd::Error& e) {
        if (e.code() == cnd::ErrorCode::ParseError || e.code() == cnd::ErrorCode::SchemaVersionUnsupported) throw;
        throw cnd::Error(cnd::ErrorCode::ParseError, path + ": " + e.what());
    }
}

/// Config files that are not well-formed JSON of the expected shape are parse errors.
template <typename F>
void with_config_errors_as_parse(F&& f) {
    try {
        f();
    } catch (const cnd::Error& e) {
        if (e.code() == cnd::ErrorCode::IoError) throw;
        throw cnd::Error(cnd::ErrorCode::ParseError, e.what());
    }
}

cnd::TensorShape parse_shape(const std::string& text) {
    cnd::TensorShape s;
    char x1 = 0, x2 = 0;
    std::istringstream in(text);
    if (!(in >> s.height >> x1 >> s.width >> x2 >> s.channels) || x1 != 'x' || x2 != 'x' || !in.eof() ||
        !s.valid()) {
        throw cnd::Error(cnd::ErrorCode::InvalidArgument, "--input expects HxWxC with positive sizes, got '" + text + "'");
    }
    return s;
}

struct BuildArgs {
    std::string model;
    std::int64_t classes = 101;
    std::string input;
    std::string config;
    std::string out;
};

int cmd_build(const BuildArgs& a) {
    std::optional<cnd::TensorShape> shape;
    if (!a.input.empty()) shape = parse_shape(a.input);
    cnd::ModelGraph g;
    if (a.model == "xception") {
        g = cnd::build_xception(shape.value_or(cnd::TensorShape{299, 299, 3}), a.classes);
    } else if (a.model == "optimized-xception") {
        cnd::OptimizedConfig config = cnd::OptimizedConfig::defaults();
        if (!a.config.empty()) {
            const std::string text = read_file(a.config);
            with_config_errors_as_parse([&] {
                config = cnd::parse_optimized_config(text);
            });
        }
        g = cnd::build_optimized_xception(shape.value_or(cnd::TensorShape{299, 299, 3}), a.classes, config);
    } else {
        g = cnd::build_mobilenet_v2(shape.value_or(cnd::TensorShape{224, 224, 3}), a.classes);
    }
    const std::string json = cnd::serialize(g);
    const auto total = cnd::count_params(g).total;
    const std::string summary =
        g.name + ": " + std::to_string(total) + " params (" + cnd::format_millions(total) + ")";
    if (a.out.empty()) {
        std::cout << json;
        std::cerr << summary << "\n";
    } else {
        write_file(a.out, json);
        std::cout << summary << "\n";
    }
    return kOk;
}

struct TransformArgs {
    std::string in;
    std::string pass = "all";
    std::string specs;
    std::string out;
    std::string report;
    std::string format = "table";
};

int cmd_transform(const TransformArgs& a) {
    cnd::ModelGraph g = read_model(a.in);
    std::map<std::string, cnd::FireModuleSpec> specs = cnd::OptimizedConfig::defaults().module_specs();
    if (!a.specs.empty()) {
        const std::string text = read_file(a.specs);
        with_config_errors_as_parse([&] {
            specs = cnd::parse_fire_specs(text);
        });
    }
    std::vector<cnd::PassReport> reports;
    if (a.pass == "strategy1" || a.pass == "all") {
        auto r = cnd::strategy1_replace_kernels(g);
        g = std::move(r.graph);
        reports.push_back(std::move(r.report));
    }
    if (a.pass == "strategy2" || a.pass == "all") {
        auto r = cnd::strategy2_insert_fire(g, specs);
        g = std::move(r.graph);
        reports.push_back(std::move(r.report));
    }

    nlohmann::ordered_json report_json = nlohmann::ordered_json::array();
    for (const auto& r : reports) report_json.push_back(cnd::to_json(r));
    if (!a.out.empty()) write_file(a.out, cnd::serialize(g));
    if (!a.report.empty()) write_file(a.report, report_json.dump(2) + "\n");
    if (a.format == "json") {
        std::cout << report_json.dump(2) << "\n";
    } else {
        for (const auto& r : reports) std::cout << cnd::render(r);
    }
    const auto violations = cnd::validate_fire_constraints(g);
    for (const auto& v : violations) std::cerr << "violation: " << v << "\n";
    return violations.empty() ? kOk : kValidation;
}

struct AnalyzeArgs {
    std::string in;
    std::string format = "table";
    std::int64_t batch = 32;
    std::string mode = "training";
    std::string optimizer = "adam";
    std::int64_t overhead = 0;
};

int cmd_analyze(const AnalyzeArgs& a) {
    const cnd::ModelGraph g = read_model(a.in);
    cnd::MemoryAssumptions m;
    m.batch_size = a.batch;
    m.mode = a.mode == "inference" ? cnd::RunMode::Inference : cnd::RunMode::Training;
    m.optimizer = a.optimizer == "sgd" ? cnd::Optimizer::SgdMomentum : cnd::Optimizer::Adam;
    m.overhead_bytes = a.overhead;
    const auto report = cnd::analyze(g, m);
    if (a.format == "json") {
        std::cout << cnd::to_json(report).dump(2) << "\n";
    } else {
        std::cout << cnd::render(report);
    }
    return kOk;
}

int cmd_diff(const std::string& path_a, const std::string& path_b) {
    const cnd::ModelGraph a = read_model(path_a);
    const cnd::ModelGraph b = read_model(path_b);
    std::cout << cnd::render(cnd::diff(a, b));
    return kOk;
}

struct ParetoArgs {
    std::string csv;
    double accuracy_frontier = 70.0;
    std::string memory_frontier = "auto";
    std::string out;
};

int cmd_pareto(const ParetoArgs& a) {
    const auto records = cnd::load_measurements(read_file(a.csv));
    cnd::QuadrantConfig config;
    config.accuracy_frontier = a.accuracy_frontier;
    if (a.memory_frontier != "auto") {
        try {
            std::size_t used = 0;
            config.memory_frontier = std::stod(a.memory_frontier, &used);
            if (used != a.memory_frontier.size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw cnd::Error(cnd::ErrorCode::InvalidArgument,
                             "--memory-frontier expects 'auto' or a number, got '" + a.memory_frontier + "'");
        }
    }
    config.validate();
    std::cout << cnd::render(records, config);
    if (!a.out.empty()) write_file(a.out, cnd::export_plot_data(records, config));
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cndkit: compact-network-design toolkit for CNN architectures"};
    app.require_subcommand(1);

    BuildArgs build;
    auto* b = app.add_subcommand("build", "Build a zoo model and write it as model JSON");
    b->add_option("model", build.model, "Model to build")
        ->required()
        ->check(CLI::IsMember({"xception", "optimized-xception", "mobilenetv2"}));
    b->add_option("--classes", build.classes, "Number of output classes")->capture_default_str();
    b->add_option("--input", build.input, "Input shape HxWxC (default 299x299x3; 224x224x3 for mobilenetv2)");
    b->add_option("--config", build.config, "Fire-module config JSON for optimized-xception");
    b->add_option("--out", build.out, "Output path (stdout when omitted)");

    TransformArgs transform;
    auto* t = app.add_subcommand("transform", "Apply compact-network-design passes to a model");
    t->add_option("--in", transform.in, "Input model JSON")->required();
    t->add_option("--pass", transform.pass, "Pass to apply")
        ->check(CLI::IsMember({"strategy1", "strategy2", "all"}))
        ->capture_default_str();
    t->add_option("--specs", transform.specs, "Fire specs JSON keyed by module tag (default: built-in config)");
    t->add_option("--out", transform.out, "Transformed model output path");
    t->add_option("--report", transform.report, "Pass report JSON output path");
    t->add_option("--format", transform.format, "Report display format")
        ->check(CLI::IsMember({"json", "table"}))
        ->capture_default_str();

    AnalyzeArgs analyze;
    auto* an = app.add_subcommand("analyze", "Parameter, FLOP and memory analysis of a model");
    an->add_option("--in", analyze.in, "Input model JSON")->required();
    an->add_option("--format", analyze.format)->check(CLI::IsMember({"json", "table"}))->capture_default_str();
    an->add_option("--batch", analyze.batch)->check(CLI::PositiveNumber)->capture_default_str();
    an->add_option("--mode", analyze.mode)->check(CLI::IsMember({"training", "inference"}))->capture_default_str();
    an->add_option("--optimizer", analyze.optimizer)->check(CLI::IsMember({"sgd", "adam"}))->capture_default_str();
    an->add_option("--overhead", analyze.overhead, "Constant overhead in bytes")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();

    std::string diff_a, diff_b;
    auto* d = app.add_subcommand("diff", "Module-by-module comparison of two models");
    d->add_option("--a", diff_a, "Original model JSON")->required();
    d->add_option("--b", diff_b, "Transformed model JSON")->required();

    ParetoArgs pareto;
    auto* p = app.add_subcommand("pareto", "Quadrant and Pareto-front analysis of measurement CSV");
    p->add_option("--csv", pareto.csv, "Measurement CSV")->required();
    p->add_option("--accuracy-frontier", pareto.accuracy_frontier)->capture_default_str();
    p->add_option("--memory-frontier", pareto.memory_frontier, "'auto' (midpoint of min/max) or MB value")
        ->capture_default_str();
    p->add_option("--out", pareto.out, "Write plot data CSV here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kValidation;
    }

    try {
        if (*b) return cmd_build(build);
        if (*t) return cmd_transform(transform);
        if (*an) return cmd_analyze(analyze);
        if (*d) return cmd_diff(diff_a, diff_b);
        if (*p) return cmd_pareto(pareto);
    } catch (const cnd::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    }
    return kOk;
}
