#pragma once

// Fit parameters and the magnitude model shared by the trace generator and
// the global fit. One function produces both, so noiseless synthetic data is
// reproduced exactly by the model.
//
// Parameter vector layout for n modes and L links:
//   nu[n] (GHz), kappa[n] (MHz), eta[n], beta[L], phi_off, C[n(n-1)]
// with C listed row-major over off-diagonal (out, in) pairs. Four modes and
// four links give 29 parameters.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "synthlat/errors.hpp"
#include "synthlat/format.hpp"
#include "synthlat/lattice.hpp"
#include "synthlat/parallel.hpp"
#include "synthlat/scattering.hpp"
#include "synthlat/traces.hpp"

namespace synthlat {

enum class ParamGroup { nu, kappa, eta, beta, phi_off, scale };

struct FitParams {
    LatticeSpec lattice;         // nu, kappa, eta, beta live here
    double phi_off = 0.0;        // offset added to the swept loop phase
    Eigen::MatrixXd scale;       // C_nm; diagonal fixed at 1

    static FitParams from_lattice(LatticeSpec spec, double phi_off = 0.0) {
        FitParams fp;
        const auto n = static_cast<Eigen::Index>(spec.size());
        fp.lattice = std::move(spec);
        fp.phi_off = phi_off;
        fp.scale = Eigen::MatrixXd::Ones(n, n);
        return fp;
    }

    std::size_t modes() const { return lattice.size(); }
    std::size_t links() const { return lattice.couplings.size(); }
    std::size_t size() const { return 3 * modes() + links() + 1 + modes() * (modes() - 1); }

    double& C(std::size_t out, std::size_t in) {
        return scale(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    }
    double C(std::size_t out, std::size_t in) const {
        return scale(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    }

    std::size_t index_nu(std::size_t i) const { return i; }
    std::size_t index_kappa(std::size_t i) const { return modes() + i; }
    std::size_t index_eta(std::size_t i) const { return 2 * modes() + i; }
    std::size_t index_beta(std::size_t l) const { return 3 * modes() + l; }
    std::size_t index_phi_off() const { return 3 * modes() + links(); }
    std::size_t index_scale(std::size_t out, std::size_t in) const {
        if (out == in) throw InvalidArgument("diagonal scale factors are not parameters");
        return index_phi_off() + 1 + out * (modes() - 1) + (in < out ? in : in - 1);
    }

    ParamGroup group(std::size_t p) const {
        const std::size_t n = modes();
        if (p < n) return ParamGroup::nu;
        if (p < 2 * n) return ParamGroup::kappa;
        if (p < 3 * n) return ParamGroup::eta;
        if (p < 3 * n + links()) return ParamGroup::beta;
        if (p == index_phi_off()) return ParamGroup::phi_off;
        return ParamGroup::scale;
    }

    /// Off-diagonal (out, in) pair of scale parameter p.
    std::pair<std::size_t, std::size_t> scale_pair(std::size_t p) const {
        const std::size_t k = p - index_phi_off() - 1;
        const std::size_t out = k / (modes() - 1);
        std::size_t in = k % (modes() - 1);
        if (in >= out) ++in;
        return {out, in};
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(size());
        const auto& m = lattice.modes;
        for (const auto& mode : m) out.push_back("nu_" + mode.label);
        for (const auto& mode : m) out.push_back("kappa_" + mode.label);
        for (const auto& mode : m) out.push_back("eta_" + mode.label);
        for (const auto& c : lattice.couplings) out.push_back("beta_" + c.from + c.to);
        out.push_back("phi_off");
        for (std::size_t i = 0; i < m.size(); ++i)
            for (std::size_t j = 0; j < m.size(); ++j)
                if (i != j) out.push_back("C_" + m[i].label + m[j].label);
        return out;
    }

    Eigen::VectorXd values() const {
        Eigen::VectorXd v(static_cast<Eigen::Index>(size()));
        const std::size_t n = modes();
        for (std::size_t i = 0; i < n; ++i) {
            v(index_nu(i)) = lattice.modes[i].nu_GHz;
            v(index_kappa(i)) = lattice.modes[i].kappa_MHz;
            v(index_eta(i)) = lattice.modes[i].eta;
        }
        for (std::size_t l = 0; l < links(); ++l) v(index_beta(l)) = lattice.couplings[l].beta;
        v(index_phi_off()) = phi_off;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) v(index_scale(i, j)) = C(i, j);
        return v;
    }

    void set_values(const Eigen::VectorXd& v) {
        if (static_cast<std::size_t>(v.size()) != size()) throw InvalidArgument("FitParams::set_values: wrong length");
        const std::size_t n = modes();
        for (std::size_t i = 0; i < n; ++i) {
            lattice.modes[i].nu_GHz = v(index_nu(i));
            lattice.modes[i].kappa_MHz = v(index_kappa(i));
            lattice.modes[i].eta = v(index_eta(i));
        }
        for (std::size_t l = 0; l < links(); ++l) lattice.couplings[l].beta = v(index_beta(l));
        phi_off = v(index_phi_off());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) C(i, j) = (i == j) ? 1.0 : v(index_scale(i, j));
    }

    void validate() const {
        lattice.validate();
        const auto n = static_cast<Eigen::Index>(modes());
        if (scale.rows() != n || scale.cols() != n) throw InvalidArgument("FitParams: scale matrix has wrong shape");
        for (Eigen::Index i = 0; i < n; ++i) {
            if (scale(i, i) != 1.0) throw InvalidArgument("FitParams: diagonal scale factors must equal 1");
            for (Eigen::Index j = 0; j < n; ++j)
                if (!(scale(i, j) > 0.0) || !std::isfinite(scale(i, j)))
                    throw InvalidArgument("FitParams: scale factors must be positive");
        }
        if (!std::isfinite(phi_off)) throw InvalidArgument("FitParams: phi_off must be finite");
    }
};

/// true = held at its initial value.
struct FreezeMask {
    std::vector<bool> frozen;

    static FreezeMask none(const FitParams& fp) { return {std::vector<bool>(fp.size(), false)}; }

    /// Mode parameters (nu, kappa, eta) held; links, phase offset and scale
    /// factors free.
    static FreezeMask mode_parameters(const FitParams& fp) {
        FreezeMask m = none(fp);
        for (std::size_t p = 0; p < 3 * fp.modes(); ++p) m.frozen[p] = true;
        return m;
    }

    std::size_t free_count() const {
        std::size_t n = 0;
        for (bool f : frozen) n += f ? 0 : 1;
        return n;
    }

    void validate(const FitParams& fp) const {
        if (frozen.size() != fp.size()) throw InvalidArgument("FreezeMask: length does not match parameter count");
        if (free_count() == 0) throw InvalidArgument("FreezeMask: at least one parameter must be free");
    }
};

/// Evaluates the magnitude model on every point of a trace set. Points are
/// grouped by (loop phase, input node, frequency grid) so one linear solve
/// serves all output nodes of a group.
class ModelEvaluator {
public:
    /// Detunings are taken relative to `reference`'s mode frequencies. Later
    /// evaluations may pass per-mode frequency shifts (MHz) on top of that.
    ModelEvaluator(const FitParams& reference, const TraceSet& ts) : labels_() {
        for (const auto& m : reference.lattice.modes) labels_.push_back(m.label);
        TraceSet sorted = ts;
        sorted.sort(labels_);
        std::size_t offset = 0;
        for (const auto& t : sorted.traces) {
            if (t.units != Units::linear)
                throw InvalidState("model: trace " + std::string("S_") + t.out + t.in + " is not in linear units");
            TraceRef ref{reference.lattice.index_of(t.out), reference.lattice.index_of(t.in), offset, t.size()};
            offset += t.size();
            std::size_t g = 0;
            for (; g < groups_.size(); ++g)
                if (groups_[g].in == ref.in && groups_[g].loop_phase == t.loop_phase && groups_[g].freq_GHz == t.freq_GHz)
                    break;
            if (g == groups_.size()) {
                Group grp;
                grp.in = ref.in;
                grp.loop_phase = t.loop_phase;
                grp.freq_GHz = t.freq_GHz;
                const double nu_in = reference.lattice.modes[ref.in].nu_GHz;
                for (double f : t.freq_GHz) grp.base_delta_MHz.push_back((f - nu_in) * kMHzPerGHz);
                groups_.push_back(std::move(grp));
            }
            groups_[g].traces.push_back(ref);
            data_.insert(data_.end(), t.values.begin(), t.values.end());
        }
        total_ = offset;
    }

    std::size_t size() const { return total_; }
    const std::vector<double>& data() const { return data_; }

    /// Model values in deterministic trace order (row-major element, then
    /// phase ascending).
    Eigen::VectorXd evaluate(const FitParams& fp, std::span<const double> nu_shift_MHz = {}) const {
        const std::size_t n = fp.modes();
        if (!nu_shift_MHz.empty() && nu_shift_MHz.size() != n)
            throw InvalidArgument("model: frequency shift vector has wrong length");
        Eigen::VectorXd out(static_cast<Eigen::Index>(total_));

        // Precompute everything that does not depend on the detuning.
        const auto N = static_cast<Eigen::Index>(n);
        Eigen::VectorXd inv_kappa(N), h(N);
        for (std::size_t i = 0; i < n; ++i) {
            inv_kappa(static_cast<Eigen::Index>(i)) = 1.0 / fp.lattice.modes[i].kappa_MHz;
            h(static_cast<Eigen::Index>(i)) = std::sqrt(fp.lattice.modes[i].eta);
        }
        struct Link {
            Eigen::Index a, b;
            double beta, phase;
            bool loop;
        };
        std::vector<Link> links;
        for (const auto& c : fp.lattice.couplings)
            links.push_back({static_cast<Eigen::Index>(fp.lattice.index_of(c.from)),
                             static_cast<Eigen::Index>(fp.lattice.index_of(c.to)), c.beta, c.phase_rad,
                             c.carries_loop_phase});

        parallel_for(groups_.size(), [&](std::size_t gi) {
            const Group& g = groups_[gi];
            Eigen::MatrixXcd offdiag = Eigen::MatrixXcd::Zero(N, N);
            for (const auto& l : links) {
                const cplx v = std::polar(l.beta, l.phase + (l.loop ? g.loop_phase + fp.phi_off : 0.0));
                offdiag(l.a, l.b) = v;
                offdiag(l.b, l.a) = std::conj(v);
            }
            const double shift = nu_shift_MHz.empty() ? 0.0 : nu_shift_MHz[g.in];
            const auto in = static_cast<Eigen::Index>(g.in);
            Eigen::MatrixXcd M(N, N);
            Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(N);
            rhs(in) = h(in);
            Eigen::PartialPivLU<Eigen::MatrixXcd> lu(N);
            for (std::size_t k = 0; k < g.base_delta_MHz.size(); ++k) {
                const double delta = g.base_delta_MHz[k] - shift;
                M = offdiag;
                for (Eigen::Index i = 0; i < N; ++i) M(i, i) = cplx{delta * inv_kappa(i), 0.5};
                lu.compute(M);
                if (!(lu.rcond() * kMaxConditionNumber >= 1.0))
                    throw SingularMatrixError(delta, g.loop_phase, 1.0 / lu.rcond());
                const Eigen::VectorXcd x = lu.solve(rhs);
                for (const auto& t : g.traces) {
                    const auto o = static_cast<Eigen::Index>(t.out);
                    cplx s = cplx{0.0, 1.0} * h(o) * x(o);
                    if (t.out == t.in) s -= 1.0;
                    const double mag = std::abs(s);
                    out(static_cast<Eigen::Index>(t.offset + k)) =
                        t.out == t.in ? mag : std::hypot(fp.C(t.out, t.in) * mag, 1.0);
                }
            }
        });
        return out;
    }

    /// Start offset and length of each trace in evaluation order.
    struct TraceRef {
        std::size_t out, in, offset, length;
    };

    std::vector<TraceRef> trace_refs() const {
        std::vector<TraceRef> refs;
        for (const auto& g : groups_) refs.insert(refs.end(), g.traces.begin(), g.traces.end());
        std::sort(refs.begin(), refs.end(), [](const TraceRef& a, const TraceRef& b) { return a.offset < b.offset; });
        return refs;
    }

private:
    struct Group {
        std::size_t in = 0;
        double loop_phase = 0.0;
        std::vector<double> freq_GHz;
        std::vector<double> base_delta_MHz;
        std::vector<TraceRef> traces;
    };

    std::vector<std::string> labels_;
    std::vector<Group> groups_;
    std::vector<double> data_;
    std::size_t total_ = 0;
};

/// Model magnitude of element (out, in) at scan detuning delta: |S_nn| for
/// reflection, sqrt((C_nm |S_nm|)^2 + 1) for transmission.
inline double model_magnitude(const FitParams& fp, std::size_t out, std::size_t in, double delta_MHz,
                              double loop_phase) {
    const std::size_t n = fp.modes();
    if (out >= n || in >= n) throw InvalidArgument("model_magnitude: element index out of range");
    const auto M = build_coupling_matrix_at(fp.lattice, delta_MHz, loop_phase, fp.phi_off);
    const auto S = scattering_at(M, coupling_efficiencies(fp.lattice), {delta_MHz, loop_phase});
    const double mag = std::abs(S.entries(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)));
    if (out == in) return mag;
    return noise_floor_model(mag, fp.C(out, in));
}

/// model - data over every point, in deterministic trace order.
inline Eigen::VectorXd assemble_residuals(const FitParams& fp, const TraceSet& ts) {
    const ModelEvaluator eval(fp, ts);
    const Eigen::VectorXd model = eval.evaluate(fp);
    return model - Eigen::Map<const Eigen::VectorXd>(eval.data().data(), static_cast<Eigen::Index>(eval.size()));
}

struct SynthesisOptions {
    std::vector<double> delta_grid_MHz;
    std::vector<double> phases;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

inline std::vector<double> linspace(double lo, double hi, std::size_t count) {
    if (count < 2) throw InvalidArgument("linspace: need at least two points");
    std::vector<double> v(count);
    for (std::size_t i = 0; i < count; ++i)
        v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    return v;
}

/// Synthetic traces for every element (out, in) at every phase: model
/// magnitudes plus independent zero-mean Gaussian noise. The probe grid of
/// element (out, in) is nu_in + delta. Deterministic under the seed.
inline TraceSet synthesize_traces(const FitParams& fp, const SynthesisOptions& opt) {
    fp.validate();
    if (opt.delta_grid_MHz.empty() || opt.phases.empty()) throw InvalidArgument("synthesize_traces: empty grid");
    if (!(opt.noise_sigma >= 0.0)) throw InvalidArgument("synthesize_traces: noise_sigma must be >= 0");
    TraceSet ts;
    ts.provenance = "synthetic seed=" + std::to_string(opt.seed) + " noise_sigma=" + format_double(opt.noise_sigma);
    std::vector<double> phases = opt.phases;
    std::sort(phases.begin(), phases.end());
    for (const auto& out : fp.lattice.modes) {
        for (const auto& in : fp.lattice.modes) {
            for (double phase : phases) {
                Trace t;
                t.out = out.label;
                t.in = in.label;
                t.loop_phase = phase;
                t.units = Units::linear;
                for (double d : opt.delta_grid_MHz) t.freq_GHz.push_back(in.nu_GHz + d / kMHzPerGHz);
                t.values.assign(t.freq_GHz.size(), 0.0);
                ts.traces.push_back(std::move(t));
            }
        }
    }
    ts.validate();

    const ModelEvaluator eval(fp, ts);
    const Eigen::VectorXd model = eval.evaluate(fp);
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    // ts is already in evaluation order (row-major elements, phases ascending).
    std::size_t k = 0;
    for (auto& t : ts.traces)
        for (double& v : t.values) {
            v = model(static_cast<Eigen::Index>(k++));
            if (opt.noise_sigma > 0.0) v += opt.noise_sigma * noise(rng);
        }
    return ts;
}

/// Closed-form least-squares scale factors given all other parameters:
/// C^2 = sum (d^2 - 1) |S|^2 / sum |S|^4 per transmission element, clamped
/// to a small positive floor.
inline FitParams estimate_scale_factors(const FitParams& fp, const TraceSet& ts) {
    FitParams out = fp;
    FitParams unit = fp;
    unit.scale.setOnes();
    const ModelEvaluator eval(unit, ts);
    const Eigen::VectorXd model = eval.evaluate(unit);
    const auto& data = eval.data();
    const std::size_t n = fp.modes();
    Eigen::MatrixXd num = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    Eigen::MatrixXd den = num;
    for (const auto& ref : eval.trace_refs()) {
        if (ref.out == ref.in) continue;
        for (std::size_t k = 0; k < ref.length; ++k) {
            const auto i = static_cast<Eigen::Index>(ref.offset + k);
            const double s2 = model(i) * model(i) - 1.0;  // |S|^2 with C = 1
            const double d2 = data[ref.offset + k] * data[ref.offset + k] - 1.0;
            num(static_cast<Eigen::Index>(ref.out), static_cast<Eigen::Index>(ref.in)) += d2 * s2;
            den(static_cast<Eigen::Index>(ref.out), static_cast<Eigen::Index>(ref.in)) += s2 * s2;
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(j);
            if (den(a, b) > 0.0) out.C(i, j) = std::sqrt(std::max(num(a, b) / den(a, b), 1e-6));
        }
    return out;
}

}  // namespace synthlat
