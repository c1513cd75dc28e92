#pragma once

// Steady-state scattering matrices S = i H M^-1 H - 1 with H = diag(sqrt(eta)),
// the closed-form strong-coupling plaquette, sweeps over (detuning, loop phase)
// and eigenmode analysis of S.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "synthlat/errors.hpp"
#include "synthlat/format.hpp"
#include "synthlat/lattice.hpp"
#include "synthlat/parallel.hpp"

namespace synthlat {

/// M with a condition estimate above this is rejected as singular.
inline constexpr double kMaxConditionNumber = 1e12;

struct ScatteringMatrix {
    Eigen::MatrixXcd entries;
    double delta_MHz = std::numeric_limits<double>::quiet_NaN();
    double loop_phase = std::numeric_limits<double>::quiet_NaN();

    Eigen::Index dim() const { return entries.rows(); }
};

/// Where a scattering matrix is evaluated; used to label results and errors.
struct GridPoint {
    double delta_MHz = std::numeric_limits<double>::quiet_NaN();
    double loop_phase = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline Eigen::VectorXd sqrt_eta(const Eigen::Index n, std::span<const double> eta) {
    if (static_cast<Eigen::Index>(eta.size()) != n)
        throw InvalidArgument("scattering: expected " + std::to_string(n) + " coupling efficiencies, got " +
                              std::to_string(eta.size()));
    Eigen::VectorXd h(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double e = eta[static_cast<std::size_t>(i)];
        if (!(e >= 0.0 && e <= 1.0)) throw InvalidArgument("scattering: coupling efficiency outside [0, 1]");
        h(i) = std::sqrt(e);
    }
    return h;
}

template <typename Matrix>
Eigen::PartialPivLU<Matrix> checked_lu(const Matrix& M, const GridPoint& at) {
    Eigen::PartialPivLU<Matrix> lu(M);
    const double rcond = lu.rcond();
    if (!(rcond * kMaxConditionNumber >= 1.0)) {
        const double cond = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
        throw SingularMatrixError(at.delta_MHz, at.loop_phase, cond);
    }
    return lu;
}

}  // namespace detail

inline ScatteringMatrix scattering_at(const CouplingMatrix& M, std::span<const double> eta, GridPoint at = {}) {
    const Eigen::Index n = M.dim();
    if (M.entries.cols() != n) throw InvalidArgument("scattering_at: coupling matrix must be square");
    const Eigen::VectorXd h = detail::sqrt_eta(n, eta);
    const auto lu = detail::checked_lu(M.entries, at);
    const Eigen::MatrixXcd Minv_h = lu.solve(Eigen::MatrixXcd(h.cast<cplx>().asDiagonal()));
    ScatteringMatrix S;
    S.entries = cplx{0.0, 1.0} * (h.cast<cplx>().asDiagonal() * Minv_h);
    S.entries.diagonal().array() -= 1.0;
    S.delta_MHz = at.delta_MHz;
    S.loop_phase = at.loop_phase;
    return S;
}

/// Closed-form S of the strong-coupling plaquette (equal linewidths, no
/// internal loss, probed on resonance, equal beta on the four cross links).
/// Nodes are ordered (a, b, c, d) with rungs {a, b} and {c, d}.
inline ScatteringMatrix analytic_plaquette_S(double beta) {
    if (!(beta >= 0.0)) throw InvalidArgument("analytic_plaquette_S: beta must be >= 0");
    const double d = 1.0 + 16.0 * beta * beta;
    const cplx diag = 1.0 / d;
    const cplx rung = -1.0 + 1.0 / d;
    const cplx cross = cplx{0.0, 4.0 * beta / d};
    ScatteringMatrix S;
    S.entries = Eigen::MatrixXcd::Constant(4, 4, cross);
    S.entries.block(0, 0, 2, 2).setConstant(rung);
    S.entries.block(2, 2, 2, 2).setConstant(rung);
    S.entries.diagonal().setConstant(diag);
    S.delta_MHz = 0.0;
    S.loop_phase = 0.0;
    return S;
}

/// Lattice realizing analytic_plaquette_S: four lossless modes of unit
/// linewidth, links a-c, a-d, b-c, b-d of strength beta, loop phase on a-c.
inline LatticeSpec strong_coupling_plaquette(double beta) {
    LatticeSpec spec;
    const char* labels[] = {"a", "b", "c", "d"};
    for (int i = 0; i < 4; ++i) spec.modes.push_back({labels[i], 4.0 + 1.5 * i, 1.0, 1.0});
    spec.couplings = {{"a", "c", beta, 0.0, std::nullopt, true},
                      {"a", "d", beta, 0.0, std::nullopt, false},
                      {"b", "c", beta, 0.0, std::nullopt, false},
                      {"b", "d", beta, 0.0, std::nullopt, false}};
    return spec;
}

/// max over n < m of |S_nm - S_mn|.
inline double reciprocity_defect(const ScatteringMatrix& S) {
    double worst = 0.0;
    for (Eigen::Index n = 0; n < S.dim(); ++n)
        for (Eigen::Index m = n + 1; m < S.dim(); ++m) worst = std::max(worst, std::abs(S.entries(n, m) - S.entries(m, n)));
    return worst;
}

struct SweepPoint {
    double delta_MHz;
    double loop_phase;
    ScatteringMatrix S;
};

/// Phase-major: all detunings for phases[0], then phases[1], ...
struct SweepResult {
    std::vector<std::string> labels;
    std::vector<double> delta_grid;
    std::vector<double> phases;
    std::vector<SweepPoint> points;

    const SweepPoint& at(std::size_t phase_index, std::size_t delta_index) const {
        return points.at(phase_index * delta_grid.size() + delta_index);
    }
};

inline SweepResult scattering_sweep(const LatticeSpec& spec, std::span<const double> delta_grid_MHz,
                                    std::span<const double> phases, double phi_offset) {
    spec.validate();
    if (delta_grid_MHz.empty() || phases.empty()) throw InvalidArgument("scattering_sweep: grids must be nonempty");
    for (std::size_t i = 1; i < delta_grid_MHz.size(); ++i)
        if (!(delta_grid_MHz[i] > delta_grid_MHz[i - 1]))
            throw InvalidArgument("scattering_sweep: detuning grid must be strictly increasing");
    for (std::size_t i = 0; i < phases.size(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (phases[i] == phases[j]) throw InvalidArgument("scattering_sweep: duplicate loop phase");

    SweepResult out;
    for (const auto& m : spec.modes) out.labels.push_back(m.label);
    out.delta_grid.assign(delta_grid_MHz.begin(), delta_grid_MHz.end());
    out.phases.assign(phases.begin(), phases.end());
    const auto eta = coupling_efficiencies(spec);
    const std::size_t nd = delta_grid_MHz.size();
    std::vector<SweepPoint> points(nd * phases.size());
    parallel_for(points.size(), [&](std::size_t idx) {
        const double phase = phases[idx / nd];
        const double delta = delta_grid_MHz[idx % nd];
        const auto M = build_coupling_matrix_at(spec, delta, phase, phi_offset);
        points[idx] = {delta, phase, scattering_at(M, eta, {delta, phase})};
    });
    out.points = std::move(points);
    return out;
}

/// "S_ab": output a, input b.
inline std::string element_name(const std::string& out_label, const std::string& in_label) {
    if (out_label.size() == 1 && in_label.size() == 1) return "S_" + out_label + in_label;
    return "S_" + out_label + "," + in_label;
}

inline void write_sweep_csv(const SweepResult& sweep, std::ostream& os) {
    os << "delta_MHz,phi_rad,element,re,im,mag,mag_dB\n";
    for (const auto& p : sweep.points) {
        for (Eigen::Index n = 0; n < p.S.dim(); ++n) {
            for (Eigen::Index m = 0; m < p.S.dim(); ++m) {
                const cplx s = p.S.entries(n, m);
                const double mag = std::abs(s);
                os << format_double(p.delta_MHz) << ',' << format_double(p.loop_phase) << ','
                   << element_name(sweep.labels[static_cast<std::size_t>(n)], sweep.labels[static_cast<std::size_t>(m)])
                   << ',' << format_double(s.real()) << ',' << format_double(s.imag()) << ',' << format_double(mag)
                   << ',' << format_double(20.0 * std::log10(mag)) << '\n';
            }
        }
    }
}

struct EigenModes {
    Eigen::VectorXcd values;   // sorted by |lambda - 1| ascending
    Eigen::MatrixXcd vectors;  // column j belongs to values(j), unit norm
};

/// Eigendecomposition of S. Clusters of (numerically) equal eigenvalues are
/// resolved into the basis that diagonalizes the node-index operator within
/// the cluster, so degenerate modes come out localized along the lattice.
inline EigenModes s_eigenmodes(const ScatteringMatrix& S, double degeneracy_tol = 1e-8) {
    const Eigen::Index n = S.dim();
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(S.entries, true);
    if (solver.info() != Eigen::Success) throw NumericError("s_eigenmodes: eigensolver did not converge");

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const auto& vals = solver.eigenvalues();
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return std::abs(vals(a) - 1.0) < std::abs(vals(b) - 1.0);
    });

    EigenModes out{Eigen::VectorXcd(n), Eigen::MatrixXcd(n, n)};
    for (Eigen::Index j = 0; j < n; ++j) {
        out.values(j) = vals(order[static_cast<std::size_t>(j)]);
        out.vectors.col(j) = solver.eigenvectors().col(order[static_cast<std::size_t>(j)]).normalized();
    }

    Eigen::VectorXd position(n);
    for (Eigen::Index i = 0; i < n; ++i) position(i) = static_cast<double>(i);

    std::vector<bool> done(static_cast<std::size_t>(n), false);
    for (Eigen::Index j = 0; j < n; ++j) {
        if (done[static_cast<std::size_t>(j)]) continue;
        std::vector<Eigen::Index> cluster{j};
        for (Eigen::Index k = j + 1; k < n; ++k)
            if (!done[static_cast<std::size_t>(k)] && std::abs(out.values(k) - out.values(j)) < degeneracy_tol)
                cluster.push_back(k);
        for (auto k : cluster) done[static_cast<std::size_t>(k)] = true;
        if (cluster.size() < 2) continue;

        const auto c = static_cast<Eigen::Index>(cluster.size());
        Eigen::MatrixXcd block(n, c);
        for (Eigen::Index k = 0; k < c; ++k) block.col(k) = out.vectors.col(cluster[static_cast<std::size_t>(k)]);
        Eigen::HouseholderQR<Eigen::MatrixXcd> qr(block);
        const Eigen::MatrixXcd Q = qr.householderQ() * Eigen::MatrixXcd::Identity(n, c);
        const Eigen::MatrixXcd projected = Q.adjoint() * position.cast<cplx>().asDiagonal() * Q;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> local(projected);
        const Eigen::MatrixXcd localized = Q * local.eigenvectors();
        for (Eigen::Index k = 0; k < c; ++k) out.vectors.col(cluster[static_cast<std::size_t>(k)]) = localized.col(k);
    }

    // Fix the global phase of each vector: largest component real positive.
    for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::Index big = 0;
        out.vectors.col(j).cwiseAbs().maxCoeff(&big);
        const cplx ref = out.vectors(big, j);
        if (std::abs(ref) > 0.0) out.vectors.col(j) *= std::conj(ref) / std::abs(ref);
    }
    return out;
}

}  // namespace synthlat
