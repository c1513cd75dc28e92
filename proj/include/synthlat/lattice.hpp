#pragma once

// Lattice data model for parametrically coupled cavity modes and the complex
// coupling matrix M of the steady-state equations of motion.
//
// Units: mode frequencies in GHz, linewidths in MHz, couplings normalized to
// the geometric mean of the two linewidths (dimensionless).

#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "synthlat/errors.hpp"

namespace synthlat {

using cplx = std::complex<double>;

inline constexpr double kMHzPerGHz = 1000.0;
/// Allowed mismatch between a pump tone and the difference of its two mode
/// frequencies.
inline constexpr double kPumpToleranceMHz = 1.0;

struct ModeParams {
    std::string label;
    double nu_GHz = 0.0;     // resonance frequency
    double kappa_MHz = 0.0;  // total linewidth
    double eta = 1.0;        // external / total linewidth

    double kappa_ext_MHz() const { return eta * kappa_MHz; }
    double kappa_int_MHz() const { return (1.0 - eta) * kappa_MHz; }

    void validate() const {
        if (!(std::isfinite(nu_GHz) && nu_GHz > 0.0))
            throw InvalidArgument("mode '" + label + "': resonance frequency must be positive");
        if (!(std::isfinite(kappa_MHz) && kappa_MHz > 0.0))
            throw InvalidArgument("mode '" + label + "': linewidth must be positive");
        if (!(eta >= 0.0 && eta <= 1.0))
            throw InvalidArgument("mode '" + label + "': coupling efficiency must lie in [0, 1]");
    }
};

struct CouplingSpec {
    std::string from;
    std::string to;
    double beta = 0.0;       // |beta_nm|
    double phase_rad = 0.0;  // static link phase
    std::optional<double> pump_nu_GHz;
    bool carries_loop_phase = false;
};

struct LatticeSpec {
    std::vector<ModeParams> modes;
    std::vector<CouplingSpec> couplings;

    std::size_t size() const { return modes.size(); }

    std::size_t index_of(const std::string& label) const {
        for (std::size_t i = 0; i < modes.size(); ++i)
            if (modes[i].label == label) return i;
        throw InvalidArgument("unknown mode label '" + label + "'");
    }

    /// Index of the link that carries the swept loop phase, if any.
    std::optional<std::size_t> loop_link() const {
        for (std::size_t i = 0; i < couplings.size(); ++i)
            if (couplings[i].carries_loop_phase) return i;
        return std::nullopt;
    }

    void validate() const {
        if (modes.empty()) throw InvalidArgument("lattice has no modes");
        for (std::size_t i = 0; i < modes.size(); ++i) {
            modes[i].validate();
            if (modes[i].label.empty()) throw InvalidArgument("mode label must not be empty");
            for (std::size_t j = 0; j < i; ++j)
                if (modes[j].label == modes[i].label)
                    throw InvalidArgument("duplicate mode label '" + modes[i].label + "'");
        }
        int loop_links = 0;
        for (std::size_t c = 0; c < couplings.size(); ++c) {
            const auto& link = couplings[c];
            const std::size_t n = index_of(link.from);
            const std::size_t m = index_of(link.to);
            if (n == m) throw InvalidArgument("coupling '" + link.from + "-" + link.to + "' joins a mode to itself");
            if (!(std::isfinite(link.beta) && link.beta >= 0.0))
                throw InvalidArgument("coupling '" + link.from + "-" + link.to + "': beta must be >= 0");
            if (!std::isfinite(link.phase_rad))
                throw InvalidArgument("coupling '" + link.from + "-" + link.to + "': phase must be finite");
            for (std::size_t d = 0; d < c; ++d) {
                const auto& other = couplings[d];
                if ((other.from == link.from && other.to == link.to) ||
                    (other.from == link.to && other.to == link.from))
                    throw InvalidArgument("duplicate coupling '" + link.from + "-" + link.to + "'");
            }
            if (link.pump_nu_GHz) {
                const double expected = std::abs(modes[m].nu_GHz - modes[n].nu_GHz);
                const double mismatch_MHz = std::abs(*link.pump_nu_GHz - expected) * kMHzPerGHz;
                if (!(mismatch_MHz <= kPumpToleranceMHz))
                    throw InvalidArgument("coupling '" + link.from + "-" + link.to + "': pump frequency is " +
                                          std::to_string(mismatch_MHz) + " MHz away from the mode difference");
            }
            loop_links += link.carries_loop_phase ? 1 : 0;
        }
        if (loop_links > 1) throw InvalidArgument("more than one coupling carries the loop phase");
    }
};

/// Complex matrix of the steady-state equations of motion. The diagonal holds
/// the normalized detunings, the off-diagonal block is Hermitian.
struct CouplingMatrix {
    Eigen::MatrixXcd entries;

    Eigen::Index dim() const { return entries.rows(); }
};

/// (probe - resonance) / linewidth + i/2, with the probe given in GHz.
inline cplx normalized_detuning(const ModeParams& mode, double probe_nu_GHz) {
    if (!std::isfinite(probe_nu_GHz) || !std::isfinite(mode.nu_GHz) || !std::isfinite(mode.kappa_MHz))
        throw InvalidArgument("normalized_detuning: non-finite input");
    if (!(mode.kappa_MHz > 0.0)) throw InvalidArgument("normalized_detuning: linewidth must be positive");
    return {(probe_nu_GHz - mode.nu_GHz) * kMHzPerGHz / mode.kappa_MHz, 0.5};
}

/// beta = g / (2 sqrt(kappa_n kappa_m)); all rates in the same unit.
inline double beta_from_g(double g_mag, double kappa_n, double kappa_m) {
    if (!(kappa_n > 0.0) || !(kappa_m > 0.0)) throw InvalidArgument("beta_from_g: linewidths must be positive");
    if (!(g_mag >= 0.0)) throw InvalidArgument("beta_from_g: coupling magnitude must be >= 0");
    return g_mag / (2.0 * std::sqrt(kappa_n * kappa_m));
}

inline double g_from_beta(double beta, double kappa_n, double kappa_m) {
    return 2.0 * beta * std::sqrt(kappa_n * kappa_m);
}

namespace detail {

inline void fill_links(const LatticeSpec& spec, double loop_phase, double phi_offset, Eigen::MatrixXcd& M) {
    const auto n = static_cast<Eigen::Index>(spec.size());
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> used = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, n, false);
    for (const auto& link : spec.couplings) {
        const auto a = static_cast<Eigen::Index>(spec.index_of(link.from));
        const auto b = static_cast<Eigen::Index>(spec.index_of(link.to));
        if (a == b) throw InvalidArgument("coupling '" + link.from + "-" + link.to + "' joins a mode to itself");
        if (used(a, b)) throw InvalidArgument("duplicate coupling '" + link.from + "-" + link.to + "'");
        used(a, b) = used(b, a) = true;
        const double phase = link.phase_rad + (link.carries_loop_phase ? loop_phase + phi_offset : 0.0);
        const cplx value = std::polar(link.beta, phase);
        M(a, b) = value;
        M(b, a) = std::conj(value);
    }
}

}  // namespace detail

/// Builds M for the given per-mode probe frequencies. The swept loop phase and
/// the phase offset are added to the single link flagged carries_loop_phase.
inline CouplingMatrix build_coupling_matrix(const LatticeSpec& spec, std::span<const double> probe_nu_GHz,
                                            double loop_phase, double phi_offset) {
    const std::size_t n = spec.size();
    if (probe_nu_GHz.size() != n)
        throw InvalidArgument("build_coupling_matrix: expected " + std::to_string(n) + " probe frequencies, got " +
                              std::to_string(probe_nu_GHz.size()));
    CouplingMatrix M{Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))};
    for (std::size_t i = 0; i < n; ++i) M.entries(i, i) = normalized_detuning(spec.modes[i], probe_nu_GHz[i]);
    detail::fill_links(spec, loop_phase, phi_offset, M.entries);
    return M;
}

/// Same as build_coupling_matrix with every mode probed at its resonance plus
/// a shared offset delta. Avoids the GHz round trip, so the diagonal is
/// exactly delta / kappa_n + i/2.
inline CouplingMatrix build_coupling_matrix_at(const LatticeSpec& spec, double delta_MHz, double loop_phase,
                                               double phi_offset) {
    if (!std::isfinite(delta_MHz)) throw InvalidArgument("build_coupling_matrix_at: non-finite detuning");
    const auto n = static_cast<Eigen::Index>(spec.size());
    CouplingMatrix M{Eigen::MatrixXcd::Zero(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const double kappa = spec.modes[static_cast<std::size_t>(i)].kappa_MHz;
        if (!(kappa > 0.0)) throw InvalidArgument("build_coupling_matrix_at: linewidth must be positive");
        M.entries(i, i) = cplx{delta_MHz / kappa, 0.5};
    }
    detail::fill_links(spec, loop_phase, phi_offset, M.entries);
    return M;
}

/// Probe frequencies for a frequency-converting sweep: every mode is probed at
/// its own resonance plus the shared scan offset.
inline std::vector<double> probe_frequencies(const LatticeSpec& spec, double delta_MHz) {
    std::vector<double> out;
    out.reserve(spec.size());
    for (const auto& m : spec.modes) out.push_back(m.nu_GHz + delta_MHz / kMHzPerGHz);
    return out;
}

inline std::vector<double> coupling_efficiencies(const LatticeSpec& spec) {
    std::vector<double> eta;
    eta.reserve(spec.size());
    for (const auto& m : spec.modes) eta.push_back(m.eta);
    return eta;
}

}  // namespace synthlat
