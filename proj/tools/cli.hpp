#pragma once

// Command-line front end. run() is the whole program minus process exit, so
// tests can drive it in-process.
//
// Exit codes: 0 success, 1 usage error, 2 data/parse error, 3 fit failure.

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "synthlat.hpp"

namespace synthlat::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kFitFailure = 3 };

namespace detail {

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

class OutputFile {
public:
    OutputFile(const std::string& path, bool timestamp) : os_(path) {
        if (!os_) throw Error("cannot open '" + path + "' for writing");
        if (timestamp) os_ << "# generated=" << utc_timestamp() << '\n';
    }
    std::ostream& stream() { return os_; }
    void close(const std::string& path) {
        os_.close();
        if (!os_) throw Error("failed writing '" + path + "'");
    }

private:
    std::ofstream os_;
};

inline creutz::PlaquetteState parse_state(const std::string& name) {
    using creutz::Node;
    using creutz::PlaquetteState;
    if (name == "chi") return PlaquetteState::chi();
    if (name == "a1") return PlaquetteState::basis(Node::a1);
    if (name == "b1") return PlaquetteState::basis(Node::b1);
    if (name == "a2") return PlaquetteState::basis(Node::a2);
    if (name == "b2") return PlaquetteState::basis(Node::b2);
    if (name == "L") return PlaquetteState::zero_mode_left();
    if (name == "R") return PlaquetteState::zero_mode_right();
    if (name == "plus") return PlaquetteState::wannier_plus();
    if (name == "minus") return PlaquetteState::wannier_minus();
    throw InvalidArgument("unknown state '" + name + "'");
}

}  // namespace detail

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Synthetic-lattice scattering simulation, trace fitting and Creutz-ladder analysis", "synthlat"};
    app.require_subcommand(1);
    bool no_timestamp = false;
    app.add_flag("--no-timestamp", no_timestamp, "Omit the '# generated=' header line from output files");

    // simulate / synth share grid options
    std::string config, out_path, traces_path, background_path, units = "linear", state = "chi";
    std::vector<double> phases{0.0};
    double span_mhz = 10.0, noise = 0.0, td = 1.0, tv = 0.0, th = 1.0, phi = creutz::pi, tmax = creutz::pi, beta = 1.0;
    std::optional<double> phi_off, phi_off_init;
    std::size_t points = 401, k_points = 1001, steps = 1000;
    std::uint64_t seed = 0;
    bool remove_slopes = false, keep_scales = false;

    auto add_grid = [&](CLI::App* sub) {
        sub->add_option("--config", config, "Lattice configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--phases", phases, "Loop phases in radians, comma separated")->delimiter(',');
        sub->add_option("--span-mhz", span_mhz, "Scan detuning half-width in MHz")->check(CLI::PositiveNumber);
        sub->add_option("--points", points, "Detuning points per trace")->check(CLI::Range(2, 1000000));
        sub->add_option("--phi-off", phi_off, "Override the phase offset of the configuration (rad)");
        sub->add_option("--out", out_path, "Output file")->required();
    };

    auto* simulate = app.add_subcommand("simulate", "Complex scattering matrix over a detuning/phase grid (CSV)");
    add_grid(simulate);

    auto* synth = app.add_subcommand("synth", "Synthetic magnitude traces for every element and phase");
    add_grid(synth);
    synth->add_option("--noise", noise, "Gaussian magnitude noise sigma")->check(CLI::NonNegativeNumber);
    synth->add_option("--seed", seed, "Noise seed");
    synth->add_option("--units", units, "Output units")->check(CLI::IsMember({"linear", "dB"}));

    auto* fit = app.add_subcommand("fit", "Two-stage global fit of a trace file (JSON report)");
    fit->add_option("--config", config, "Initial parameters (JSON)")->required()->check(CLI::ExistingFile);
    fit->add_option("--traces", traces_path, "Trace file")->required()->check(CLI::ExistingFile);
    fit->add_option("--out", out_path, "Report file")->required();
    fit->add_option("--phi-off-init", phi_off_init, "Initial phase offset (rad)");
    fit->add_option("--background", background_path, "Pumps-off background traces to divide out")
        ->check(CLI::ExistingFile);
    fit->add_flag("--remove-slope", remove_slopes, "Divide reflection traces by their endpoint baseline");
    fit->add_flag("--keep-scales", keep_scales, "Start from the configured scale factors instead of estimating them");

    auto add_creutz = [&](CLI::App* sub) {
        sub->add_option("--td", td, "Diagonal hopping");
        sub->add_option("--tv", tv, "Rung hopping");
        sub->add_option("--th", th, "Horizontal hopping");
        sub->add_option("--phi", phi, "Loop phase per plaquette (rad)");
        sub->add_option("--k", k_points, "Number of k points on [-pi, pi]")->check(CLI::Range(2, 10000000));
        sub->add_option("--out", out_path, "Output CSV")->required();
    };
    auto* bands = app.add_subcommand("bands", "Bloch bands of the Creutz ladder (CSV k_rad,value1,value2)");
    add_creutz(bands);
    auto* symmetry = app.add_subcommand("symmetry", "Per-k symmetry violations (CSV k_rad,tr,c,s)");
    add_creutz(symmetry);

    auto* evolve = app.add_subcommand("evolve", "Plaquette dynamics: <m(t)> and its running time average");
    evolve->add_option("--state", state, "Initial state")
        ->check(CLI::IsMember({"chi", "a1", "b1", "a2", "b2", "L", "R", "plus", "minus"}));
    evolve->add_option("--tmax", tmax, "Final time (units of 1/hopping)")->check(CLI::NonNegativeNumber);
    evolve->add_option("--steps", steps, "Time steps")->check(CLI::Range(1, 100000000));
    evolve->add_option("--out", out_path, "Output CSV")->required();

    auto* plaquette = app.add_subcommand("plaquette", "Eigenmodes of the strong-coupling plaquette S matrix (CSV)");
    plaquette->add_option("--beta", beta, "Normalized coupling")->check(CLI::NonNegativeNumber);
    plaquette->add_option("--out", out_path, "Output CSV")->required();

    std::vector<const char*> argv{"synthlat"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kUsage;
    }

    const bool stamp = !no_timestamp;
    try {
        if (simulate->parsed() || synth->parsed()) {
            FitParams fp = read_config(config);
            if (phi_off) fp.phi_off = *phi_off;
            const auto grid = linspace(-span_mhz, span_mhz, points);
            if (simulate->parsed()) {
                const auto sweep = scattering_sweep(fp.lattice, grid, phases, fp.phi_off);
                detail::OutputFile f(out_path, stamp);
                write_sweep_csv(sweep, f.stream());
                f.close(out_path);
            } else {
                TraceSet ts = synthesize_traces(fp, {grid, phases, noise, seed});
                if (units == "dB")
                    for (auto& t : ts.traces) t = linear_to_db(t);
                std::optional<std::string> generated;
                if (stamp) generated = detail::utc_timestamp();
                write_traces(ts, out_path, generated);
            }
        } else if (fit->parsed()) {
            FitParams init = read_config(config);
            if (phi_off_init) init.phi_off = *phi_off_init;
            TraceSet ts = read_traces(traces_path);
            for (auto& t : ts.traces)
                if (t.units == Units::dB) t = db_to_linear(t);
            if (!background_path.empty()) {
                TraceSet bg = read_traces(background_path);
                std::map<std::pair<std::string, std::string>, Trace> by_element;
                for (auto& t : bg.traces) by_element[{t.out, t.in}] = t.units == Units::dB ? db_to_linear(t) : t;
                for (auto& t : ts.traces) {
                    auto it = by_element.find({t.out, t.in});
                    if (it == by_element.end())
                        throw InvalidArgument("no background trace for " + element_label(t));
                    t = normalize_background(t, it->second);
                }
            }
            if (remove_slopes)
                for (auto& t : ts.traces)
                    if (t.kind() == TraceKind::reflection) t = remove_slope(t);
            if (!keep_scales) init = estimate_scale_factors(init, ts);
            const GlobalFitResult g = fit_global(ts, init);
            nlohmann::json report = fit_report(g);
            report["points"] = ts.total_points();
            report["traces"] = ts.size();
            report["fitted_config"] = to_json(g.stage2.params);
            detail::OutputFile f(out_path, false);
            f.stream() << report.dump(2) << '\n';
            f.close(out_path);
        } else if (bands->parsed() || symmetry->parsed()) {
            const creutz::CreutzParams p{td, tv, th, phi};
            p.validate();
            const auto k = linspace(-creutz::pi, creutz::pi, k_points);
            detail::OutputFile f(out_path, stamp);
            auto& os = f.stream();
            if (bands->parsed()) {
                const auto b = creutz::band_structure(p, k);
                os << "k_rad,value1,value2\n";
                for (std::size_t i = 0; i < k.size(); ++i)
                    os << format_double(k[i]) << ',' << format_double(b.lower[i]) << ',' << format_double(b.upper[i])
                       << '\n';
            } else {
                os << "k_rad,tr,c,s\n";
                for (double q : k) {
                    const double pair[] = {q, -q};
                    os << format_double(q);
                    for (auto s : {creutz::Symmetry::TimeReversal, creutz::Symmetry::ChargeConjugation,
                                   creutz::Symmetry::Chiral})
                        os << ',' << format_double(creutz::check_symmetry(p, s, pair));
                    os << '\n';
                }
            }
            f.close(out_path);
        } else if (evolve->parsed()) {
            const auto s0 = detail::parse_state(state);
            detail::OutputFile f(out_path, stamp);
            auto& os = f.stream();
            os << "t,m,m_avg\n";
            for (std::size_t i = 0; i <= steps; ++i) {
                const double t = tmax * static_cast<double>(i) / static_cast<double>(steps);
                os << format_double(t) << ',' << format_double(creutz::position_expectation(creutz::evolve_state(s0, t)))
                   << ',' << format_double(creutz::running_average_position(s0, t)) << '\n';
            }
            f.close(out_path);
        } else if (plaquette->parsed()) {
            const auto modes = s_eigenmodes(analytic_plaquette_S(beta));
            const char* nodes[] = {"a", "b", "c", "d"};
            detail::OutputFile f(out_path, stamp);
            auto& os = f.stream();
            os << "mode,lambda_re,lambda_im,abs_lambda_minus_1";
            for (const char* n : nodes) os << ",v_" << n << "_re,v_" << n << "_im";
            os << '\n';
            for (Eigen::Index j = 0; j < modes.values.size(); ++j) {
                os << j << ',' << format_double(modes.values(j).real()) << ',' << format_double(modes.values(j).imag())
                   << ',' << format_double(std::abs(modes.values(j) - 1.0));
                for (Eigen::Index i = 0; i < modes.vectors.rows(); ++i)
                    os << ',' << format_double(modes.vectors(i, j).real()) << ','
                       << format_double(modes.vectors(i, j).imag());
                os << '\n';
            }
            f.close(out_path);
        }
    } catch (const FitError& e) {
        err << "fit failed: " << e.what() << '\n';
        return kFitFailure;
    } catch (const RankDeficiencyError& e) {
        err << "fit failed: " << e.what() << '\n';
        return kFitFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    }
    return kOk;
}

}  // namespace synthlat::cli
