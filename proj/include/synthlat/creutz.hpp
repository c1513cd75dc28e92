#pragma once

// Creutz ladder: Bloch Hamiltonian, bands, discrete symmetries, Wannier
// centers, Zak phase, and single-plaquette dynamics.
//
// Real-space basis is ordered (a_1, b_1, a_2, b_2, ...) everywhere; cell
// indices start at 1 so the position operator is diag(1, 1, 2, 2, ...).

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "synthlat/errors.hpp"

namespace synthlat::creutz {

using cplx = std::complex<double>;
using std::numbers::pi;

struct CreutzParams {
    double t_d = 1.0;  // diagonal hopping
    double t_v = 0.0;  // vertical (rung) hopping
    double t_h = 1.0;  // horizontal hopping
    double phi = pi;   // loop phase per plaquette

    void validate() const {
        if (!(t_d >= 0.0 && t_v >= 0.0 && t_h >= 0.0)) throw InvalidArgument("Creutz hoppings must be >= 0");
        if (!std::isfinite(phi)) throw InvalidArgument("Creutz loop phase must be finite");
    }
};

/// t_v = 0, t_d = t_h = 1, phi = pi: flat bands at -2 and +2.
inline CreutzParams strong_coupling_point() { return {1.0, 0.0, 1.0, pi}; }

struct BlochHamiltonian {
    double k = 0.0;
    Eigen::Matrix2cd h;
};

inline BlochHamiltonian bloch_hamiltonian(const CreutzParams& p, double k) {
    if (!std::isfinite(k)) throw InvalidArgument("bloch_hamiltonian: k must be finite");
    const double off = -(2.0 * p.t_d * std::cos(k) + p.t_v);
    BlochHamiltonian out{k, Eigen::Matrix2cd::Zero()};
    out.h(0, 0) = -2.0 * p.t_h * std::cos(k - 0.5 * p.phi);
    out.h(1, 1) = -2.0 * p.t_h * std::cos(k + 0.5 * p.phi);
    out.h(0, 1) = off;
    out.h(1, 0) = off;
    return out;
}

/// n points k_j = -pi + 2 pi (j + 1) / n covering (-pi, pi]. The set is closed
/// under k -> -k modulo 2 pi.
inline std::vector<double> brillouin_grid(std::size_t n) {
    if (n == 0) throw InvalidArgument("brillouin_grid: need at least one point");
    std::vector<double> k(n);
    for (std::size_t j = 0; j < n; ++j) k[j] = -pi + 2.0 * pi * static_cast<double>(j + 1) / static_cast<double>(n);
    return k;
}

struct Bands {
    std::vector<double> k;
    std::vector<double> lower;
    std::vector<double> upper;
};

inline Bands band_structure(const CreutzParams& p, std::span<const double> k_grid) {
    p.validate();
    if (k_grid.empty()) throw InvalidArgument("band_structure: empty k grid");
    Bands out;
    for (double k : k_grid) {
        if (!(k > -pi - 1e-12 && k <= pi + 1e-12)) throw InvalidArgument("band_structure: k outside (-pi, pi]");
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(bloch_hamiltonian(p, k).h, Eigen::EigenvaluesOnly);
        out.k.push_back(k);
        out.lower.push_back(es.eigenvalues()(0));
        out.upper.push_back(es.eigenvalues()(1));
    }
    return out;
}

enum class Symmetry { TimeReversal, ChargeConjugation, Chiral };

inline std::string to_string(Symmetry s) {
    switch (s) {
        case Symmetry::TimeReversal: return "TR";
        case Symmetry::ChargeConjugation: return "C";
        case Symmetry::Chiral: return "S";
    }
    return "?";
}

inline Eigen::Matrix2cd pauli_x() { return (Eigen::Matrix2cd() << 0, 1, 1, 0).finished(); }
inline Eigen::Matrix2cd pauli_y() { return (Eigen::Matrix2cd() << 0, cplx(0, -1), cplx(0, 1), 0).finished(); }
inline Eigen::Matrix2cd pauli_z() { return (Eigen::Matrix2cd() << 1, 0, 0, -1).finished(); }

namespace detail {

inline double wrap_phase(double k) {
    double w = std::remainder(k, 2.0 * pi);
    if (w <= -pi) w += 2.0 * pi;
    return w;
}

inline bool contains_mod_2pi(std::span<const double> grid, double k, double tol) {
    for (double q : grid) {
        const double d = std::abs(wrap_phase(q - k));
        if (d <= tol) return true;
    }
    return false;
}

}  // namespace detail

/// Spectral-norm violation of one of
///   TR: sx h(k) sx = h(-k),  C: sz h(k) sz = -h(-k),  S: sy h(k) sy = -h(k),
/// maximized over the grid. The grid must be closed under k -> -k (mod 2 pi).
inline double check_symmetry(const CreutzParams& p, Symmetry kind, std::span<const double> k_grid) {
    if (k_grid.empty()) throw InvalidArgument("check_symmetry: empty k grid");
    for (double k : k_grid)
        if (!detail::contains_mod_2pi(k_grid, -k, 1e-9))
            throw InvalidArgument("check_symmetry: k grid is not symmetric under k -> -k");
    double worst = 0.0;
    for (double k : k_grid) {
        const Eigen::Matrix2cd hk = bloch_hamiltonian(p, k).h;
        const Eigen::Matrix2cd hmk = bloch_hamiltonian(p, -k).h;
        Eigen::Matrix2cd diff;
        switch (kind) {
            case Symmetry::TimeReversal: diff = pauli_x() * hk * pauli_x() - hmk; break;
            case Symmetry::ChargeConjugation: diff = pauli_z() * hk * pauli_z() + hmk; break;
            case Symmetry::Chiral: diff = pauli_y() * hk * pauli_y() + hk; break;
        }
        Eigen::JacobiSVD<Eigen::Matrix2cd> svd(diff);
        worst = std::max(worst, svd.singularValues()(0));
    }
    return worst;
}

enum class Boundary { Open, Periodic };

/// Single-particle matrix of the N-cell ladder, built term by term from the
/// real-space Hamiltonian (no Fourier transform involved).
inline Eigen::MatrixXcd ladder_hamiltonian(const CreutzParams& p, int cells, Boundary boundary) {
    if (cells < 2) throw InvalidArgument("ladder_hamiltonian: need at least two cells");
    const int dim = 2 * cells;
    Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(dim, dim);
    auto a = [cells](int n) { return 2 * (((n % cells) + cells) % cells); };
    auto b = [cells](int n) { return 2 * (((n % cells) + cells) % cells) + 1; };
    // Adds c * x_i^dag x_j + h.c.
    auto hop = [&H](int i, int j, cplx c) {
        H(i, j) += c;
        H(j, i) += std::conj(c);
    };
    const cplx horizontal = std::polar(p.t_h, 0.5 * p.phi);
    for (int n = 0; n < cells; ++n) {
        hop(b(n), a(n), -0.5 * p.t_v);
        hop(a(n), b(n), -0.5 * p.t_v);
        if (boundary == Boundary::Open && n == cells - 1) continue;
        hop(b(n), a(n + 1), -p.t_d);
        hop(a(n), b(n + 1), -p.t_d);
        hop(a(n + 1), a(n), -horizontal);
        hop(b(n), b(n + 1), -horizontal);
    }
    return H;
}

/// diag(1, 1, 2, 2, ..., N, N).
inline Eigen::VectorXd position_operator(int cells) {
    Eigen::VectorXd m(2 * cells);
    for (int n = 0; n < cells; ++n) m(2 * n) = m(2 * n + 1) = n + 1;
    return m;
}

enum class Band { Lower, Upper };

/// Maximally localized flat-band state between cells n and n+1 of an open
/// ladder at the strong-coupling point (lower band: energy -2).
inline Eigen::VectorXcd wannier_state(int cells, int n, Band band) {
    if (cells < 2 || n < 1 || n > cells - 1)
        throw InvalidArgument("wannier_state: need 1 <= n <= N-1, got n=" + std::to_string(n) +
                              ", N=" + std::to_string(cells));
    const cplx w = std::polar(1.0, pi / 4.0);
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(2 * cells);
    const int an = 2 * (n - 1), bn = an + 1, an1 = an + 2, bn1 = an + 3;
    if (band == Band::Lower) {
        v(an1) = -0.5 * w;
        v(bn) = -0.5 * w;
        v(an) = -0.5 * std::conj(w);
        v(bn1) = -0.5 * std::conj(w);
    } else {
        v(an1) = 0.5 * std::conj(w);
        v(bn) = -0.5 * std::conj(w);
        v(an) = 0.5 * w;
        v(bn1) = -0.5 * w;
    }
    return v;
}

inline double wannier_center(int cells, int n) {
    const Eigen::VectorXcd v = wannier_state(cells, n, Band::Lower);
    return (v.cwiseAbs2().array() * position_operator(cells).array()).sum() / v.squaredNorm();
}

/// Berry phase of one band across the Brillouin zone from a discrete Wilson
/// loop (periodic gauge, both orbitals at the same intracell position).
/// Returns a value in (-pi, pi].
inline double zak_phase(const CreutzParams& p, Band band, std::size_t k_points, double min_gap = 1e-8) {
    p.validate();
    if (k_points < 100) throw InvalidArgument("zak_phase: need at least 100 k points");
    std::vector<Eigen::Vector2cd> states;
    states.reserve(k_points);
    for (std::size_t j = 0; j < k_points; ++j) {
        const double k = -pi + 2.0 * pi * static_cast<double>(j) / static_cast<double>(k_points);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(bloch_hamiltonian(p, k).h);
        const double gap = es.eigenvalues()(1) - es.eigenvalues()(0);
        if (gap < min_gap) throw DegenerateBandError(k, gap);
        states.push_back(es.eigenvectors().col(band == Band::Lower ? 0 : 1));
    }
    cplx loop{1.0, 0.0};
    for (std::size_t j = 0; j < k_points; ++j) {
        const cplx overlap = states[j].dot(states[(j + 1) % k_points]);
        loop *= overlap / std::abs(overlap);
    }
    double phase = -std::arg(loop);
    if (phase <= -pi) phase += 2.0 * pi;
    return phase;
}

// ---------------------------------------------------------------------------
// Single plaquette at the strong-coupling point, basis (a1, b1, a2, b2).

enum class Node { a1 = 0, b1 = 1, a2 = 2, b2 = 3 };

inline Eigen::Matrix4cd plaquette_hamiltonian() {
    Eigen::Matrix4cd H = Eigen::Matrix4cd::Zero();
    auto hop = [&H](Node i, Node j, cplx c) {
        H(static_cast<int>(i), static_cast<int>(j)) += c;
        H(static_cast<int>(j), static_cast<int>(i)) += std::conj(c);
    };
    hop(Node::b1, Node::a2, -1.0);
    hop(Node::a1, Node::b2, -1.0);
    hop(Node::a1, Node::a2, cplx(0.0, -1.0));
    hop(Node::b2, Node::b1, cplx(0.0, -1.0));
    return H;
}

class PlaquetteState {
public:
    /// Normalizes the given amplitudes; rejects the zero vector.
    explicit PlaquetteState(const Eigen::Vector4cd& amplitudes) : amps_(amplitudes) {
        const double norm = amps_.norm();
        if (!(norm > 0.0) || !std::isfinite(norm)) throw InvalidArgument("PlaquetteState: zero or non-finite state");
        amps_ /= norm;
    }

    static PlaquetteState basis(Node node) {
        Eigen::Vector4cd v = Eigen::Vector4cd::Zero();
        v(static_cast<int>(node)) = 1.0;
        return PlaquetteState(v);
    }

    /// Left-rung state orthogonal to the left zero mode.
    static PlaquetteState chi() { return PlaquetteState(Eigen::Vector4cd(1.0, cplx(0.0, -1.0), 0.0, 0.0)); }

    static PlaquetteState zero_mode_left() {
        const cplx w = std::polar(1.0, pi / 4.0);
        return PlaquetteState(Eigen::Vector4cd(std::conj(w), w, 0.0, 0.0));
    }

    static PlaquetteState zero_mode_right() {
        const cplx w = std::polar(1.0, pi / 4.0);
        return PlaquetteState(Eigen::Vector4cd(0.0, 0.0, w, std::conj(w)));
    }

    /// Flat-band eigenstates at energy +2 (plus) and -2 (minus).
    static PlaquetteState wannier_plus() {
        const cplx w = std::polar(1.0, pi / 4.0);
        return PlaquetteState(Eigen::Vector4cd(std::conj(w), -w, w, -std::conj(w)));
    }

    static PlaquetteState wannier_minus() {
        const cplx w = std::polar(1.0, pi / 4.0);
        return PlaquetteState(Eigen::Vector4cd(w, std::conj(w), std::conj(w), w));
    }

    const Eigen::Vector4cd& amplitudes() const { return amps_; }
    cplx amplitude(Node node) const { return amps_(static_cast<int>(node)); }
    double probability(Node node) const { return std::norm(amplitude(node)); }

private:
    Eigen::Vector4cd amps_;
};

/// exp(-i H t) applied through the eigendecomposition of the Hermitian H.
inline PlaquetteState evolve_state(const PlaquetteState& s, double t) {
    static const Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es(plaquette_hamiltonian());
    const Eigen::Matrix4cd& V = es.eigenvectors();
    Eigen::Vector4cd phases;
    for (int i = 0; i < 4; ++i) phases(i) = std::polar(1.0, -es.eigenvalues()(i) * t);
    const Eigen::Vector4cd coeffs = V.adjoint() * s.amplitudes();
    return PlaquetteState(V * phases.cwiseProduct(coeffs));
}

/// <m> with m = diag(1, 1, 2, 2).
inline double position_expectation(const PlaquetteState& s) {
    const Eigen::Vector4d m(1.0, 1.0, 2.0, 2.0);
    return (s.amplitudes().cwiseAbs2().array() * m.array()).sum();
}

/// Time average of <m(t)> over [0, window] by the closed trapezoidal rule.
/// Exact for the plaquette's trigonometric observables when window is a
/// period (pi/2 for the cos 4t terms) and intervals exceeds their degree.
inline double time_averaged_position(const PlaquetteState& s, double window = pi / 2.0, int intervals = 64) {
    if (!(window > 0.0) || intervals < 1) throw InvalidArgument("time_averaged_position: bad window");
    const double h = window / intervals;
    double sum = 0.0;
    for (int i = 0; i <= intervals; ++i) {
        const double w = (i == 0 || i == intervals) ? 0.5 : 1.0;
        sum += w * position_expectation(evolve_state(s, i * h));
    }
    return sum * h / window;
}

/// (1/T) * integral_0^T <m(t)> dt, evaluated in the energy basis so it is
/// exact for any T. T = 0 returns <m(0)>.
inline double running_average_position(const PlaquetteState& s, double T) {
    if (!(T >= 0.0) || !std::isfinite(T)) throw InvalidArgument("running_average_position: T must be >= 0");
    if (T == 0.0) return position_expectation(s);
    static const Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es(plaquette_hamiltonian());
    const Eigen::Matrix4cd& V = es.eigenvectors();
    const Eigen::Vector4cd c = V.adjoint() * s.amplitudes();
    const Eigen::Matrix4cd A = V.adjoint() * Eigen::Vector4cd(1.0, 1.0, 2.0, 2.0).asDiagonal() * V;
    cplx total = 0.0;
    for (int j = 0; j < 4; ++j)
        for (int k = 0; k < 4; ++k) {
            const double w = es.eigenvalues()(j) - es.eigenvalues()(k);
            // (1/T) * integral of exp(i w t), with the w -> 0 limit taken analytically
            const cplx avg = std::abs(w * T) < 1e-8 ? cplx(1.0, 0.5 * w * T)
                                                     : (std::polar(1.0, w * T) - 1.0) / cplx(0.0, w * T);
            total += std::conj(c(j)) * c(k) * A(j, k) * avg;
        }
    return total.real();
}

/// max over t of the probability found on the target nodes.
inline double max_transfer_probability(const PlaquetteState& start, std::span<const Node> targets,
                                       std::span<const double> t_grid) {
    double best = 0.0;
    for (double t : t_grid) {
        const PlaquetteState s = evolve_state(start, t);
        double p = 0.0;
        for (Node n : targets) p += s.probability(n);
        best = std::max(best, p);
    }
    return best;
}

inline double caging_check(Node start, Node target, std::span<const double> t_grid) {
    if (start == target) throw InvalidArgument("caging_check: start and target must differ");
    const Node targets[] = {target};
    return max_transfer_probability(PlaquetteState::basis(start), targets, t_grid);
}

}  // namespace synthlat::creutz
