#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cndkit/error.hpp"

namespace cnd {

/// One measured model: a row of a results table.
struct ModelMeasurement {
    std::string model;
    std::string experiment;
    double train_acc = 0.0;
    double test_acc = 0.0;
    double avg_mem_mb = 0.0;
    std::optional<double> avg_epoch_time_s;
    std::optional<double> avg_inf_time_ms;
    std::optional<std::int64_t> params;

    friend bool operator==(const ModelMeasurement&, const ModelMeasurement&) = default;
};

enum class QuadrantLabel { HighAccLowMem, HighAccHighMem, LowAccLowMem, LowAccHighMem };

inline std::string_view to_string(QuadrantLabel q) {
    switch (q) {
        case QuadrantLabel::HighAccLowMem: return "HighAccLowMem";
        case QuadrantLabel::HighAccHighMem: return "HighAccHighMem";
        case QuadrantLabel::LowAccLowMem: return "LowAccLowMem";
        case QuadrantLabel::LowAccHighMem: return "LowAccHighMem";
    }
    return "LowAccHighMem";
}

/// Accuracy frontier in percent; memory frontier is either the midpoint of
/// the observed min/max memory or an explicit value in MB.
struct QuadrantConfig {
    double accuracy_frontier = 70.0;
    std::optional<double> memory_frontier;

    void validate() const {
        if (!(accuracy_frontier > 0.0 && accuracy_frontier < 100.0)) {
            throw Error(ErrorCode::InvalidArgument, "accuracy frontier must lie in (0, 100)");
        }
        if (memory_frontier && !(*memory_frontier > 0.0)) {
            throw Error(ErrorCode::InvalidArgument, "memory frontier must be positive");
        }
    }
};

inline constexpr std::string_view kMeasurementHeader =
    "model,experiment,train_acc,test_acc,avg_mem_mb,avg_epoch_time_s,avg_inf_time_ms,params";

/// Shortest round-trip decimal form.
inline std::string format_number(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

namespace detail {

inline std::string csv_field(const std::string& v) {
    if (v.find_first_of(",\"\n") == std::string::npos) return v;
    std::string out = "\"";
    for (char c : v) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

inline std::vector<std::string> split_csv_line(std::string_view line, std::size_t row) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw Error(ErrorCode::ParseError, "row " + std::to_string(row) + ": unterminated quote");
    fields.push_back(std::move(cur));
    return fields;
}

template <typename T>
T parse_number(const std::string& text, std::size_t row, std::string_view column) {
    T value{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        throw Error(ErrorCode::ParseError, "row " + std::to_string(row) + ", column " + std::string(column) +
                                               ": '" + text + "' is not a number");
    }
    return value;
}

} // namespace detail

/// Parses the measurement CSV. Row numbers in errors are 1-based file lines.
inline std::vector<ModelMeasurement> load_measurements(std::string_view text) {
    if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
    std::vector<ModelMeasurement> out;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (!header_seen) {
            if (line != kMeasurementHeader) {
                throw Error(ErrorCode::ParseError, "row 1: expected header '" + std::string(kMeasurementHeader) + "'");
            }
            header_seen = true;
            continue;
        }
        const auto f = detail::split_csv_line(line, line_no);
        if (f.size() != 8) {
            throw Error(ErrorCode::ParseError, "row " + std::to_string(line_no) + ": expected 8 columns, got " +
                                                   std::to_string(f.size()));
        }
        ModelMeasurement m;
        m.model = f[0];
        m.experiment = f[1];
        if (m.model.empty()) throw Error(ErrorCode::ParseError, "row " + std::to_string(line_no) + ", column model: empty");
        m.train_acc = detail::parse_number<double>(f[2], line_no, "train_acc");
        m.test_acc = detail::parse_number<double>(f[3], line_no, "test_acc");
        m.avg_mem_mb = detail::parse_number<double>(f[4], line_no, "avg_mem_mb");
        if (!f[5].empty()) m.avg_epoch_time_s = detail::parse_number<double>(f[5], line_no, "avg_epoch_time_s");
        if (!f[6].empty()) m.avg_inf_time_ms = detail::parse_number<double>(f[6], line_no, "avg_inf_time_ms");
        if (!f[7].empty()) m.params = detail::parse_number<std::int64_t>(f[7], line_no, "params");
        for (auto [value, column] : {std::pair{m.train_acc, "train_acc"}, std::pair{m.test_acc, "test_acc"}}) {
            if (!(value >= 0.0 && value <= 100.0)) {
                throw Error(ErrorCode::RangeError, "row " + std::to_string(line_no) + ", column " + column + ": " +
                                                       format_number(value) + " outside [0, 100]");
            }
        }
        if (!(m.avg_mem_mb > 0.0)) {
            throw Error(ErrorCode::RangeError,
                        "row " + std::to_string(line_no) + ", column avg_mem_mb: must be positive");
        }
        out.push_back(std::move(m));
    }
    if (!header_seen) throw Error(ErrorCode::ParseError, "row 1: missing header");
    return out;
}

inline std::string write_measurements(const std::vector<ModelMeasurement>& records) {
    auto opt = [](const auto& v) { return v ? format_number(static_cast<double>(*v)) : std::string(); };
    std::string out(kMeasurementHeader);
    out += "\n";
    for (const auto& r : records) {
        out += detail::csv_field(r.model) + "," + detail::csv_field(r.experiment) + "," + format_number(r.train_acc) + "," + format_number(r.test_acc) +
               "," + format_number(r.avg_mem_mb) + "," + opt(r.avg_epoch_time_s) + "," + opt(r.avg_inf_time_ms) +
               "," + (r.params ? std::to_string(*r.params) : std::string()) + "\n";
    }
    return out;
}

/// Midpoint of the smallest and largest average memory.
inline double memory_frontier(const std::vector<ModelMeasurement>& records) {
    if (records.empty()) throw Error(ErrorCode::EmptyInput, "memory frontier needs at least one record");
    auto [lo, hi] = std::minmax_element(records.begin(), records.end(), [](const auto& a, const auto& b) {
        return a.avg_mem_mb < b.avg_mem_mb;
    });
    return (lo->avg_mem_mb + hi->avg_mem_mb) / 2.0;
}

/// High accuracy iff test_acc >= accuracy frontier; low memory iff
/// avg_mem_mb <= memory frontier.
inline QuadrantLabel classify_quadrant(const ModelMeasurement& r, const QuadrantConfig& config, double frontier_mem) {
    const bool high_acc = r.test_acc >= config.accuracy_frontier;
    const bool low_mem = r.avg_mem_mb <= frontier_mem;
    if (high_acc) return low_mem ? QuadrantLabel::HighAccLowMem : QuadrantLabel::HighAccHighMem;
    return low_mem ? QuadrantLabel::LowAccLowMem : QuadrantLabel::LowAccHighMem;
}

inline double resolve_memory_frontier(const std::vector<ModelMeasurement>& records, const QuadrantConfig& config) {
    return config.memory_frontier ? *config.memory_frontier : memory_frontier(records);
}

/// s dominates r: at least as accurate and at most as memory-hungry, strictly
/// better in one of the two.
inline bool dominates(const ModelMeasurement& s, const ModelMeasurement& r) {
    return s.test_acc >= r.test_acc && s.avg_mem_mb <= r.avg_mem_mb &&
           (s.test_acc > r.test_acc || s.avg_mem_mb < r.avg_mem_mb);
}

/// Canonical order of front members: ascending memory, then descending
/// accuracy, then model name.
inline bool front_order(const ModelMeasurement& a, const ModelMeasurement& b) {
    if (a.avg_mem_mb != b.avg_mem_mb) return a.avg_mem_mb < b.avg_mem_mb;
    if (a.test_acc != b.test_acc) return a.test_acc > b.test_acc;
    if (a.model != b.model) return a.model < b.model;
    return a.experiment < b.experiment;
}

/// Non-dominated subset via a sweep over memory. Within a group of equal
/// memory only the most accurate records can survive, and they survive iff
/// every strictly cheaper record is strictly less accurate.
inline std::vector<ModelMeasurement> pareto_front(std::vector<ModelMeasurement> records) {
    std::sort(records.begin(), records.end(), front_order);
    std::vector<ModelMeasurement> front;
    std::optional<double> best_cheaper;
    for (std::size_t i = 0; i < records.size();) {
        std::size_t j = i;
        while (j < records.size() && records[j].avg_mem_mb == records[i].avg_mem_mb) ++j;
        const double group_best = records[i].test_acc;
        if (!best_cheaper || group_best > *best_cheaper) {
            for (std::size_t k = i; k < j && records[k].test_acc == group_best; ++k) front.push_back(records[k]);
        }
        best_cheaper = best_cheaper ? std::max(*best_cheaper, group_best) : group_best;
        i = j;
    }
    return front;
}

/// Plot-ready CSV with the two frontier values as leading comment lines.
inline std::string export_plot_data(const std::vector<ModelMeasurement>& records, const QuadrantConfig& config) {
    config.validate();
    std::string out = "# accuracy_frontier=" + format_number(config.accuracy_frontier) + "\n";
    if (records.empty()) {
        out += "# memory_frontier=" + (config.memory_frontier ? format_number(*config.memory_frontier) : "none") + "\n";
        out += "model,test_acc,avg_mem_mb,quadrant,on_front\n";
        return out;
    }
    const double frontier = resolve_memory_frontier(records, config);
    out += "# memory_frontier=" + format_number(frontier) + "\n";
    out += "model,test_acc,avg_mem_mb,quadrant,on_front\n";
    const auto front = pareto_front(records);
    for (const auto& r : records) {
        const bool on_front = std::find(front.begin(), front.end(), r) != front.end();
        out += detail::csv_field(r.model) + "," + format_number(r.test_acc) + "," + format_number(r.avg_mem_mb) + "," +
               std::string(to_string(classify_quadrant(r, config, frontier))) + "," + (on_front ? "1" : "0") + "\n";
    }
    return out;
}

} // namespace cnd
