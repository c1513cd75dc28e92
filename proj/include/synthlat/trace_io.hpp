#pragma once

// Text format for trace sets. One block per trace:
//
//   # element=S_ab
//   # phi_rad=0.78539816339744828
//   # units=linear
//   freq_GHz,value
//   4.1489,1.0031
//   ...
//
// File-level keys (`provenance`, `generated`) may precede the first block.
// `slope_window` is an optional block key written once slope removal ran.

#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

#include "synthlat/errors.hpp"
#include "synthlat/format.hpp"
#include "synthlat/traces.hpp"

namespace synthlat {

inline std::string element_label(const Trace& t) {
    if (t.out.size() == 1 && t.in.size() == 1) return "S_" + t.out + t.in;
    return "S_" + t.out + "," + t.in;
}

inline void write_traces(const TraceSet& ts, std::ostream& os, std::optional<std::string> generated = std::nullopt) {
    if (generated) os << "# generated=" << *generated << '\n';
    if (!ts.provenance.empty()) os << "# provenance=" << ts.provenance << '\n';
    for (const auto& t : ts.traces) {
        os << "# element=" << element_label(t) << '\n';
        os << "# phi_rad=" << format_double(t.loop_phase) << '\n';
        os << "# units=" << to_string(t.units) << '\n';
        if (t.slope_window) os << "# slope_window=" << *t.slope_window << '\n';
        os << "freq_GHz,value\n";
        for (std::size_t i = 0; i < t.size(); ++i)
            os << format_double(t.freq_GHz[i]) << ',' << format_double(t.values[i]) << '\n';
    }
}

inline void write_traces(const TraceSet& ts, const std::string& path,
                         std::optional<std::string> generated = std::nullopt) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    write_traces(ts, os, std::move(generated));
    if (!os) throw Error("failed writing '" + path + "'");
}

namespace detail {

struct PendingBlock {
    std::size_t line = 0;
    std::optional<std::string> element;
    std::optional<double> phase;
    std::optional<Units> units;
    std::optional<int> slope_window;
    bool has_columns = false;
    Trace trace;
};

inline void parse_element(std::string_view text, std::size_t line, Trace& t) {
    if (text.substr(0, 2) != "S_" || text.size() < 4) throw ParseError(line, "malformed element '" + std::string(text) + "'");
    text.remove_prefix(2);
    if (auto comma = text.find(','); comma != std::string_view::npos) {
        t.out = std::string(text.substr(0, comma));
        t.in = std::string(text.substr(comma + 1));
    } else if (text.size() == 2) {
        t.out = std::string(text.substr(0, 1));
        t.in = std::string(text.substr(1, 1));
    } else {
        throw ParseError(line, "malformed element 'S_" + std::string(text) + "'");
    }
    if (t.out.empty() || t.in.empty()) throw ParseError(line, "malformed element 'S_" + std::string(text) + "'");
}

inline void finish_block(PendingBlock& b, TraceSet& ts) {
    if (!b.has_columns) throw ParseError(b.line, "trace block has no 'freq_GHz,value' header");
    if (b.trace.freq_GHz.empty()) throw ParseError(b.line, "trace block has no data rows");
    ts.traces.push_back(std::move(b.trace));
}

}  // namespace detail

inline TraceSet read_traces(std::istream& is) {
    TraceSet ts;
    std::optional<detail::PendingBlock> block;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(is, raw)) {
        ++line_no;
        std::string_view line(raw);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;

        if (line.front() == '#') {
            line.remove_prefix(1);
            while (!line.empty() && line.front() == ' ') line.remove_prefix(1);
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) throw ParseError(line_no, "header line without '='");
            const std::string key(line.substr(0, eq));
            const std::string_view value = line.substr(eq + 1);

            if (key == "element") {
                if (block) detail::finish_block(*block, ts);
                block.emplace();
                block->line = line_no;
                detail::parse_element(value, line_no, block->trace);
                block->element = std::string(value);
                continue;
            }
            if (!block) {
                if (key == "provenance") ts.provenance = std::string(value);
                else if (key != "generated") throw ParseError(line_no, "unknown file header key '" + key + "'");
                continue;
            }
            if (block->has_columns) throw ParseError(line_no, "header key '" + key + "' after data rows");
            if (key == "phi_rad") {
                double p = 0.0;
                if (!try_parse_double(value, p)) throw ParseError(line_no, "bad phi_rad value");
                block->phase = p;
            } else if (key == "units") {
                if (value == "dB") block->units = Units::dB;
                else if (value == "linear") block->units = Units::linear;
                else throw ParseError(line_no, "unknown units '" + std::string(value) + "'");
            } else if (key == "slope_window") {
                double w = 0.0;
                if (!try_parse_double(value, w) || w < 1 || w != std::floor(w)) throw ParseError(line_no, "bad slope_window");
                block->slope_window = static_cast<int>(w);
            } else {
                throw ParseError(line_no, "unknown trace header key '" + key + "'");
            }
            continue;
        }

        if (!block) throw ParseError(line_no, "data before the first '# element=' header");
        if (!block->has_columns) {
            if (line != "freq_GHz,value") throw ParseError(line_no, "expected column header 'freq_GHz,value'");
            if (!block->phase) throw ParseError(line_no, "trace block is missing the 'phi_rad' header");
            if (!block->units) throw ParseError(line_no, "trace block is missing the 'units' header");
            block->trace.loop_phase = *block->phase;
            block->trace.units = *block->units;
            block->trace.slope_window = block->slope_window;
            block->has_columns = true;
            continue;
        }
        const auto comma = line.find(',');
        double f = 0.0, v = 0.0;
        if (comma == std::string_view::npos || !try_parse_double(line.substr(0, comma), f) ||
            !try_parse_double(line.substr(comma + 1), v))
            throw ParseError(line_no, "malformed data row");
        if (!std::isfinite(f) || !std::isfinite(v)) throw ParseError(line_no, "non-finite data value");
        auto& t = block->trace;
        if (!t.freq_GHz.empty() && !(f > t.freq_GHz.back()))
            throw ParseError(line_no, "frequency grid is not strictly increasing");
        t.freq_GHz.push_back(f);
        t.values.push_back(v);
    }
    if (block) detail::finish_block(*block, ts);
    try {
        ts.validate();
    } catch (const InvalidArgument& e) {
        throw ParseError(line_no, e.what());
    }
    return ts;
}

inline TraceSet read_traces(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open '" + path + "'");
    return read_traces(is);
}

}  // namespace synthlat
