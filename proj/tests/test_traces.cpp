#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "reference_lattices.hpp"
#include "synthlat/model.hpp"
#include "synthlat/trace_io.hpp"
#include "synthlat/traces.hpp"

using namespace synthlat;

namespace {

Trace make_trace(std::string out, std::string in, std::vector<double> values, Units units = Units::linear) {
    Trace t;
    t.out = std::move(out);
    t.in = std::move(in);
    t.units = units;
    t.values = std::move(values);
    for (std::size_t i = 0; i < t.values.size(); ++i) t.freq_GHz.push_back(5.0 + 1e-3 * static_cast<double>(i));
    return t;
}

bool same_traces(const TraceSet& a, const TraceSet& b) {
    if (a.size() != b.size() || a.provenance != b.provenance) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto &x = a.traces[i], &y = b.traces[i];
        if (x.out != y.out || x.in != y.in || x.loop_phase != y.loop_phase || x.units != y.units ||
            x.freq_GHz != y.freq_GHz || x.values != y.values || x.slope_window != y.slope_window)
            return false;
    }
    return true;
}

std::string expect_parse_error(const std::string& text, std::size_t line) {
    std::istringstream is(text);
    try {
        read_traces(is);
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), line) << e.what();
        return e.what();
    }
    ADD_FAILURE() << "no parse error for:\n" << text;
    return {};
}

}  // namespace

TEST(TraceModel, KindFollowsElement) {
    EXPECT_EQ(make_trace("a", "a", {1.0}).kind(), TraceKind::reflection);
    EXPECT_EQ(make_trace("a", "b", {1.0}).kind(), TraceKind::transmission);
}

TEST(TraceModel, ValidationRejectsBadGrids) {
    auto t = make_trace("a", "b", {1.0, 2.0});
    t.freq_GHz = {5.0, 5.0};
    EXPECT_THROW(t.validate(), InvalidArgument);
    t = make_trace("a", "b", {1.0, NAN});
    EXPECT_THROW(t.validate(), InvalidArgument);
    TraceSet ts{{make_trace("a", "b", {1.0}), make_trace("a", "b", {2.0})}, ""};
    EXPECT_THROW(ts.validate(), InvalidArgument);
    ts.traces[1].loop_phase = 1.0;
    EXPECT_NO_THROW(ts.validate());
    ts.traces[1] = make_trace("a", "b", {1.0, 2.0});
    ts.traces[1].loop_phase = 1.0;
    EXPECT_THROW(ts.validate(), InvalidArgument);
}

TEST(DbToLinear, Examples) {
    const auto t = db_to_linear(make_trace("a", "a", {0.0, -20.0, 6.0206}, Units::dB));
    EXPECT_EQ(t.units, Units::linear);
    EXPECT_DOUBLE_EQ(t.values[0], 1.0);
    EXPECT_NEAR(t.values[1], 0.1, 1e-15);
    EXPECT_NEAR(t.values[2], 2.0, 1e-4);
    EXPECT_THROW(db_to_linear(t), InvalidState);
}

TEST(DbToLinear, RoundTrip) {
    const auto t = make_trace("a", "b", {0.3, 1.0, 7.5});
    const auto back = db_to_linear(linear_to_db(t));
    for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(back.values[i], t.values[i], 1e-14);
    EXPECT_THROW(linear_to_db(make_trace("a", "b", {0.0})), InvalidArgument);
}

TEST(NormalizeBackground, Examples) {
    const auto t = make_trace("a", "b", {0.2, 0.7, 1.3});
    const auto ones = make_trace("a", "b", {1.0, 1.0, 1.0});
    EXPECT_EQ(normalize_background(t, ones).values, t.values);
    for (double v : normalize_background(t, t).values) EXPECT_DOUBLE_EQ(v, 1.0);
    EXPECT_NEAR(normalize_background(make_trace("a", "b", {0.2}), make_trace("a", "b", {0.1})).values[0], 2.0, 1e-15);
}

TEST(NormalizeBackground, Errors) {
    const auto t = make_trace("a", "b", {0.2, 0.7});
    EXPECT_THROW(normalize_background(t, make_trace("a", "b", {1.0, 1.0, 1.0})), InvalidArgument);
    EXPECT_THROW(normalize_background(t, make_trace("a", "b", {1.0, 0.0})), InvalidArgument);
    EXPECT_THROW(normalize_background(make_trace("a", "b", {0.2, 0.7}, Units::dB), t), InvalidState);
}

TEST(RemoveSlope, FlatTraceUnchanged) {
    const auto t = make_trace("a", "a", std::vector<double>(40, 0.8));
    const auto r = remove_slope(t);
    for (double v : r.values) EXPECT_NEAR(v, 1.0, 1e-12);
    const auto unit = make_trace("a", "a", std::vector<double>(40, 1.0));
    const auto u = remove_slope(normalize_background(unit, unit));
    for (double v : u.values) EXPECT_NEAR(v, 1.0, 1e-12);
    EXPECT_EQ(r.slope_window, kSlopeWindow);
}

TEST(RemoveSlope, LinearTraceBecomesOnes) {
    std::vector<double> v(21);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 + static_cast<double>(i) / 20.0;
    for (double x : remove_slope(make_trace("a", "a", v), 1).values) EXPECT_NEAR(x, 1.0, 1e-10);
}

TEST(RemoveSlope, DipOnSlopeHasUnitEndpoints) {
    std::vector<double> v(101);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = static_cast<double>(i) - 50.0;
        v[i] = (1.0 + 0.004 * static_cast<double>(i)) * (1.0 - 0.9 / (1.0 + x * x / 4.0));
    }
    const auto r = remove_slope(make_trace("b", "b", v), 1);
    EXPECT_NEAR(r.values.front(), 1.0, 1e-10);
    EXPECT_NEAR(r.values.back(), 1.0, 1e-10);
    EXPECT_LT(r.values[50], 0.2);
}

TEST(RemoveSlope, Errors) {
    EXPECT_THROW(remove_slope(make_trace("a", "b", std::vector<double>(20, 1.0))), InvalidArgument);
    EXPECT_THROW(remove_slope(make_trace("a", "a", std::vector<double>(9, 1.0))), InvalidArgument);
    std::vector<double> v(20);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 - 0.2 * static_cast<double>(i);
    v.front() = 1.0;
    EXPECT_THROW(remove_slope(make_trace("a", "a", v), 1), DegenerateBackgroundError);
}

TEST(NoiseFloorModel, Examples) {
    EXPECT_DOUBLE_EQ(noise_floor_model(0.0, 20.0), 1.0);
    EXPECT_NEAR(noise_floor_model(std::sqrt(3.0), 1.0), 2.0, 1e-15);
    EXPECT_NEAR(noise_floor_model(std::sqrt(3.0) / 19.1, 19.1), 2.0, 1e-14);
    EXPECT_THROW(noise_floor_model(-1.0, 1.0), InvalidArgument);
    EXPECT_THROW(noise_floor_model(1.0, 0.0), InvalidArgument);
}

TEST(NoiseFloorModel, MonotoneAndAtLeastOne) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(0.0, 5.0);
    for (int i = 0; i < 1000; ++i) {
        const double m = U(rng), c = 0.01 + U(rng);
        EXPECT_GE(noise_floor_model(m, c), 1.0);
        EXPECT_GE(noise_floor_model(m + 0.01, c), noise_floor_model(m, c));
    }
}

TEST(Synthesis, UncoupledLosslessModesReflectFully) {
    LatticeSpec spec;
    spec.modes = {{"a", 5.0, 1.0, 1.0}, {"b", 6.0, 2.0, 1.0}};
    const FitParams fp = FitParams::from_lattice(spec);
    const auto ts = synthesize_traces(fp, {linspace(-3.0, 3.0, 61), {0.0}, 0.0, 1});
    ASSERT_EQ(ts.size(), 4u);
    for (const auto& t : ts.traces) {
        if (t.kind() == TraceKind::reflection) {
            for (double v : t.values) EXPECT_NEAR(v, 1.0, 1e-12);
        } else {
            for (double v : t.values) EXPECT_NEAR(v, 1.0, 1e-12);  // pure noise floor
        }
    }
}

TEST(Synthesis, DeviceSetHas64TracesAndIsDeterministic) {
    const auto fp = reference::device_params(0.45);
    const SynthesisOptions opt{reference::standard_grid(41), reference::canonical_phases(), 0.02, 11};
    const auto a = synthesize_traces(fp, opt);
    const auto b = synthesize_traces(fp, opt);
    ASSERT_EQ(a.size(), 64u);
    EXPECT_TRUE(same_traces(a, b));
    auto other = opt;
    other.seed = 12;
    EXPECT_FALSE(same_traces(a, synthesize_traces(fp, other)));
    std::set<std::tuple<std::string, std::string, double>> keys;
    for (const auto& t : a.traces) keys.insert({t.out, t.in, t.loop_phase});
    EXPECT_EQ(keys.size(), 64u);
}

TEST(Synthesis, NoiselessTracesMatchModel) {
    const auto fp = reference::device_params(0.45);
    const auto ts = synthesize_traces(fp, {reference::standard_grid(41), reference::canonical_phases(), 0.0, 0});
    EXPECT_LE(assemble_residuals(fp, ts).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TraceIO, RoundTripIsExact) {
    auto ts = synthesize_traces(reference::device_params(0.45),
                                {reference::standard_grid(21), reference::canonical_phases(), 0.02, 5});
    ts.traces[0] = remove_slope(ts.traces[0]);
    std::stringstream ss;
    write_traces(ts, ss, "2026-01-01T00:00:00Z");
    const auto back = read_traces(ss);
    EXPECT_TRUE(same_traces(ts, back));
    ASSERT_EQ(back.size(), 64u);
    std::set<std::pair<std::string, std::string>> elements;
    std::set<double> phases;
    for (const auto& t : back.traces) {
        elements.insert({t.out, t.in});
        phases.insert(t.loop_phase);
    }
    EXPECT_EQ(elements.size(), 16u);
    EXPECT_EQ(phases.size(), 4u);
}

TEST(TraceIO, MultiCharacterLabelsRoundTrip) {
    TraceSet ts{{make_trace("m1", "m2", {1.5, 2.5}, Units::dB)}, "lab"};
    std::stringstream ss;
    write_traces(ts, ss);
    EXPECT_NE(ss.str().find("# element=S_m1,m2"), std::string::npos);
    EXPECT_TRUE(same_traces(ts, read_traces(ss)));
}

TEST(TraceIO, ParsesDocumentedFormat) {
    std::istringstream is("# element=S_ab\n# phi_rad=0.7853981633974483\n# units=dB\nfreq_GHz,value\n"
                          "4.1489,-3.5\n4.1490,-3.25\n");
    const auto ts = read_traces(is);
    ASSERT_EQ(ts.size(), 1u);
    EXPECT_EQ(ts.traces[0].out, "a");
    EXPECT_EQ(ts.traces[0].in, "b");
    EXPECT_EQ(ts.traces[0].units, Units::dB);
    EXPECT_DOUBLE_EQ(ts.traces[0].loop_phase, 0.7853981633974483);
    EXPECT_EQ(ts.traces[0].values, (std::vector<double>{-3.5, -3.25}));
}

TEST(TraceIO, ParseErrorsCarryLineNumbers) {
    const std::string head = "# element=S_ab\n# phi_rad=0\n";
    EXPECT_NE(expect_parse_error(head + "freq_GHz,value\n1,2\n", 3).find("units"), std::string::npos);
    expect_parse_error(head + "# units=volts\nfreq_GHz,value\n", 3);
    expect_parse_error(head + "# units=linear\nfreq_GHz,value\n1,2\n1,3\n", 6);
    expect_parse_error(head + "# units=linear\nfreq,value\n1,2\n", 4);
    expect_parse_error(head + "# units=linear\nfreq_GHz,value\n1,x\n", 5);
    expect_parse_error("# element=Sab\n", 1);
    expect_parse_error("1,2\n", 1);
    expect_parse_error(head + "# units=linear\n# colour=red\n", 4);
    expect_parse_error(head + "# units=linear\nfreq_GHz,value\n", 1);
    expect_parse_error("# element=S_ab\n# units=linear\nfreq_GHz,value\n1,2\n", 3);
}

TEST(TraceIO, DuplicateKeysRejected) {
    const std::string block = "# element=S_ab\n# phi_rad=0\n# units=linear\nfreq_GHz,value\n1,2\n";
    std::istringstream is(block + block);
    EXPECT_THROW(read_traces(is), ParseError);
}
