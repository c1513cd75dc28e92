#pragma once

// Scattering-trace data model and the magnitude preprocessing chain:
// dB -> linear, background normalization, reflection slope removal, and the
// noise-floor combination used for frequency-converting transmission.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "synthlat/errors.hpp"

namespace synthlat {

enum class Units { dB, linear };
enum class TraceKind { reflection, transmission };

inline std::string to_string(Units u) { return u == Units::dB ? "dB" : "linear"; }

/// Endpoint window (points) used by remove_slope.
inline constexpr int kSlopeWindow = 5;

/// Magnitude trace of one scattering element S_{out,in} at one loop phase.
/// freq_GHz is the probe frequency applied at the input node.
struct Trace {
    std::string out;
    std::string in;
    double loop_phase = 0.0;
    std::vector<double> freq_GHz;
    std::vector<double> values;
    Units units = Units::linear;
    std::optional<int> slope_window;  // set once remove_slope has run

    TraceKind kind() const { return out == in ? TraceKind::reflection : TraceKind::transmission; }
    std::size_t size() const { return freq_GHz.size(); }

    void validate() const {
        if (out.empty() || in.empty()) throw InvalidArgument("trace: empty element label");
        if (freq_GHz.size() != values.size())
            throw InvalidArgument("trace S_" + out + in + ": frequency and value counts differ");
        if (freq_GHz.empty()) throw InvalidArgument("trace S_" + out + in + ": no points");
        for (std::size_t i = 0; i < freq_GHz.size(); ++i) {
            if (!std::isfinite(freq_GHz[i]) || !std::isfinite(values[i]))
                throw InvalidArgument("trace S_" + out + in + ": non-finite point");
            if (i > 0 && !(freq_GHz[i] > freq_GHz[i - 1]))
                throw InvalidArgument("trace S_" + out + in + ": frequency grid not strictly increasing");
        }
        if (!std::isfinite(loop_phase)) throw InvalidArgument("trace S_" + out + in + ": non-finite loop phase");
    }
};

struct TraceSet {
    std::vector<Trace> traces;
    std::string provenance;

    std::size_t size() const { return traces.size(); }

    std::size_t total_points() const {
        std::size_t n = 0;
        for (const auto& t : traces) n += t.size();
        return n;
    }

    const Trace* find(const std::string& out, const std::string& in, double loop_phase) const {
        for (const auto& t : traces)
            if (t.out == out && t.in == in && t.loop_phase == loop_phase) return &t;
        return nullptr;
    }

    void validate() const {
        for (std::size_t i = 0; i < traces.size(); ++i) {
            traces[i].validate();
            for (std::size_t j = 0; j < i; ++j) {
                const auto& a = traces[i];
                const auto& b = traces[j];
                if (a.out == b.out && a.in == b.in) {
                    if (a.loop_phase == b.loop_phase)
                        throw InvalidArgument("duplicate trace S_" + a.out + a.in + " at phi=" +
                                              std::to_string(a.loop_phase));
                    if (a.size() != b.size())
                        throw InvalidArgument("traces of S_" + a.out + a.in + " have different grid lengths");
                }
            }
        }
    }

    /// Sorts row-major by (out, in) position in `labels`, then phase ascending.
    void sort(const std::vector<std::string>& labels) {
        auto pos = [&labels](const std::string& l) {
            auto it = std::find(labels.begin(), labels.end(), l);
            if (it == labels.end()) throw InvalidArgument("trace references unknown mode '" + l + "'");
            return static_cast<std::size_t>(it - labels.begin());
        };
        std::stable_sort(traces.begin(), traces.end(), [&](const Trace& a, const Trace& b) {
            return std::make_tuple(pos(a.out), pos(a.in), a.loop_phase) <
                   std::make_tuple(pos(b.out), pos(b.in), b.loop_phase);
        });
    }
};

inline Trace db_to_linear(const Trace& t) {
    if (t.units != Units::dB) throw InvalidState("db_to_linear: trace S_" + t.out + t.in + " is already linear");
    Trace out = t;
    for (double& v : out.values) v = std::pow(10.0, v / 20.0);
    out.units = Units::linear;
    return out;
}

inline Trace linear_to_db(const Trace& t) {
    if (t.units != Units::linear) throw InvalidState("linear_to_db: trace S_" + t.out + t.in + " is already in dB");
    Trace out = t;
    for (double& v : out.values) {
        if (!(v > 0.0)) throw InvalidArgument("linear_to_db: nonpositive magnitude");
        v = 20.0 * std::log10(v);
    }
    out.units = Units::dB;
    return out;
}

/// Pointwise division by a background trace recorded with the pumps off.
/// For transmission the background is the noise floor, so the result is in
/// units of the noise floor.
inline Trace normalize_background(const Trace& t, const Trace& background) {
    if (t.units != Units::linear || background.units != Units::linear)
        throw InvalidState("normalize_background: both traces must be linear");
    if (t.freq_GHz != background.freq_GHz)
        throw InvalidArgument("normalize_background: background grid does not match trace S_" + t.out + t.in);
    Trace out = t;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        if (!(background.values[i] > 0.0)) throw InvalidArgument("normalize_background: nonpositive background");
        out.values[i] /= background.values[i];
    }
    return out;
}

/// Divides a reflection trace by the line through the mean of its first and
/// last `window` points.
inline Trace remove_slope(const Trace& t, int window = kSlopeWindow) {
    if (t.kind() != TraceKind::reflection)
        throw InvalidArgument("remove_slope: trace S_" + t.out + t.in + " is not a reflection trace");
    if (t.units != Units::linear) throw InvalidState("remove_slope: trace must be linear");
    const auto n = t.size();
    if (window < 1 || n < 2 * static_cast<std::size_t>(window))
        throw InvalidArgument("remove_slope: trace shorter than two endpoint windows");
    const auto w = static_cast<std::size_t>(window);
    double f0 = 0.0, v0 = 0.0, f1 = 0.0, v1 = 0.0;
    for (std::size_t i = 0; i < w; ++i) {
        f0 += t.freq_GHz[i];
        v0 += t.values[i];
        f1 += t.freq_GHz[n - w + i];
        v1 += t.values[n - w + i];
    }
    f0 /= static_cast<double>(w);
    v0 /= static_cast<double>(w);
    f1 /= static_cast<double>(w);
    v1 /= static_cast<double>(w);
    const double slope = (v1 - v0) / (f1 - f0);
    Trace out = t;
    for (std::size_t i = 0; i < n; ++i) {
        const double line = v0 + slope * (t.freq_GHz[i] - f0);
        if (!(line > 0.0))
            throw DegenerateBackgroundError("remove_slope: fitted background line of S_" + t.out + t.in +
                                            " reaches zero inside the band");
        out.values[i] = t.values[i] / line;
    }
    out.slope_window = window;
    return out;
}

/// sqrt((C |S|)^2 + 1): signal and noise powers add, noise floor normalized
/// to one.
inline double noise_floor_model(double model_mag, double scale) {
    if (!(model_mag >= 0.0)) throw InvalidArgument("noise_floor_model: magnitude must be >= 0");
    if (!(scale > 0.0)) throw InvalidArgument("noise_floor_model: scale factor must be positive");
    return std::hypot(scale * model_mag, 1.0);
}

}  // namespace synthlat
