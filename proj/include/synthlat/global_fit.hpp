#pragma once

// Two-stage global fit of all magnitude traces, the pairwise (one pump on)
// initial-guess fit, and the JSON fit report.
//
// The optimizer works in internal coordinates that keep every parameter in
// its valid range:
//   nu      -> shift from the starting value in MHz
//   kappa   -> log
//   eta     -> logit
//   beta    -> log (starting value floored at 1e-6)
//   phi_off -> unchanged
//   C       -> log
// Frozen parameters are copied from the starting point, never round-tripped.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "synthlat/errors.hpp"
#include "synthlat/lattice.hpp"
#include "synthlat/least_squares.hpp"
#include "synthlat/model.hpp"
#include "synthlat/traces.hpp"

namespace synthlat {

inline constexpr double kBetaFloor = 1e-6;
inline constexpr double kEtaClamp = 1e-6;

/// Wraps a phase into (-pi, pi].
inline double wrap_to_pi(double phi) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double w = std::remainder(phi, two_pi);
    if (w <= -std::numbers::pi) w += two_pi;
    return w;
}

struct FitResult {
    FitParams params;
    std::vector<std::optional<double>> sigma;  // natural units; set only for free parameters
    std::vector<std::string> names;
    std::vector<bool> frozen;
    std::optional<Eigen::MatrixXd> covariance;  // natural units, free parameters in index order
    std::vector<std::string> null_space;
    double residual_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string stop_reason;
};

struct FitOptions {
    LMOptions lm;
};

namespace detail {

class InternalCoordinates {
public:
    explicit InternalCoordinates(const FitParams& start) : start_(start), natural_(start.values()) {}

    Eigen::VectorXd initial() const {
        Eigen::VectorXd x = natural_;
        for (std::size_t p = 0; p < start_.size(); ++p) {
            const double v = natural_(static_cast<Eigen::Index>(p));
            double& xi = x(static_cast<Eigen::Index>(p));
            switch (start_.group(p)) {
                case ParamGroup::nu: xi = 0.0; break;
                case ParamGroup::kappa: xi = std::log(v); break;
                case ParamGroup::eta: {
                    const double e = std::clamp(v, kEtaClamp, 1.0 - kEtaClamp);
                    xi = std::log(e / (1.0 - e));
                    break;
                }
                case ParamGroup::beta: xi = std::log(std::max(v, kBetaFloor)); break;
                case ParamGroup::phi_off: xi = v; break;
                case ParamGroup::scale: xi = std::log(v); break;
            }
        }
        return x;
    }

    /// Natural parameters for internal vector x; frozen entries come from
    /// the starting point verbatim.
    FitParams to_params(const Eigen::VectorXd& x, const std::vector<bool>& frozen) const {
        Eigen::VectorXd v = natural_;
        for (std::size_t p = 0; p < start_.size(); ++p) {
            if (frozen[p]) continue;
            const auto i = static_cast<Eigen::Index>(p);
            switch (start_.group(p)) {
                case ParamGroup::nu: v(i) = natural_(i) + x(i) / kMHzPerGHz; break;
                case ParamGroup::kappa: v(i) = std::exp(x(i)); break;
                case ParamGroup::eta: v(i) = 1.0 / (1.0 + std::exp(-x(i))); break;
                case ParamGroup::beta: v(i) = std::exp(x(i)); break;
                case ParamGroup::phi_off: v(i) = x(i); break;
                case ParamGroup::scale: v(i) = std::exp(x(i)); break;
            }
        }
        FitParams fp = start_;
        fp.set_values(v);
        return fp;
    }

    /// Frequency shifts (MHz) relative to the starting point, per mode.
    std::vector<double> nu_shifts(const Eigen::VectorXd& x, const std::vector<bool>& frozen) const {
        std::vector<double> s(start_.modes(), 0.0);
        for (std::size_t i = 0; i < s.size(); ++i)
            if (!frozen[start_.index_nu(i)]) s[i] = x(static_cast<Eigen::Index>(start_.index_nu(i)));
        return s;
    }

    /// d(natural)/d(internal) at x.
    Eigen::VectorXd derivative(const FitParams& fp) const {
        const Eigen::VectorXd v = fp.values();
        Eigen::VectorXd d(v.size());
        for (std::size_t p = 0; p < start_.size(); ++p) {
            const auto i = static_cast<Eigen::Index>(p);
            switch (start_.group(p)) {
                case ParamGroup::nu: d(i) = 1.0 / kMHzPerGHz; break;
                case ParamGroup::kappa: d(i) = v(i); break;
                case ParamGroup::eta: d(i) = v(i) * (1.0 - v(i)); break;
                case ParamGroup::beta: d(i) = v(i); break;
                case ParamGroup::phi_off: d(i) = 1.0; break;
                case ParamGroup::scale: d(i) = v(i); break;
            }
        }
        return d;
    }

private:
    FitParams start_;
    Eigen::VectorXd natural_;
};

}  // namespace detail

/// One damped least-squares run from `start` with the given mask.
inline FitResult fit_stage(const TraceSet& ts, const FitParams& start, const FreezeMask& mask,
                           const FitOptions& options = {}) {
    start.validate();
    mask.validate(start);
    const ModelEvaluator eval(start, ts);
    const Eigen::Map<const Eigen::VectorXd> data(eval.data().data(), static_cast<Eigen::Index>(eval.size()));
    const detail::InternalCoordinates coords(start);

    const ResidualFn residual = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        const FitParams fp = coords.to_params(x, mask.frozen);
        const auto shifts = coords.nu_shifts(x, mask.frozen);
        return eval.evaluate(fp, shifts) - data;
    };

    FitResult out;
    out.names = start.names();
    out.frozen = mask.frozen;
    const LMResult lm = damped_least_squares(residual, coords.initial(), mask.frozen, options.lm, out.names);

    out.params = coords.to_params(lm.x, mask.frozen);
    out.params.phi_off = wrap_to_pi(out.params.phi_off);
    out.residual_norm = lm.residual_norm;
    out.iterations = lm.iterations;
    out.converged = lm.converged;
    out.stop_reason = lm.stop_reason;
    out.null_space = lm.null_space;
    out.sigma.assign(start.size(), std::nullopt);
    if (lm.covariance) {
        const Eigen::VectorXd d = coords.derivative(out.params);
        Eigen::VectorXd df(static_cast<Eigen::Index>(lm.free_indices.size()));
        for (std::size_t c = 0; c < lm.free_indices.size(); ++c)
            df(static_cast<Eigen::Index>(c)) = d(lm.free_indices[c]);
        Eigen::MatrixXd cov = df.asDiagonal() * (*lm.covariance) * df.asDiagonal();
        for (std::size_t c = 0; c < lm.free_indices.size(); ++c) {
            const auto ci = static_cast<Eigen::Index>(c);
            out.sigma[static_cast<std::size_t>(lm.free_indices[c])] = std::sqrt(std::max(cov(ci, ci), 0.0));
        }
        out.covariance = std::move(cov);
    }
    return out;
}

struct GlobalFitResult {
    FitResult stage1;
    FitResult stage2;
    FitOptions options;
};

/// Stage 1 holds nu, kappa, eta at `init` and fits couplings, phase offset
/// and scale factors; stage 2 frees everything, starting from stage 1.
inline GlobalFitResult fit_global(const TraceSet& ts, const FitParams& init, const FitOptions& options = {}) {
    FitParams start = init;
    start.phi_off = wrap_to_pi(start.phi_off);
    GlobalFitResult g;
    g.options = options;
    g.stage1 = fit_stage(ts, start, FreezeMask::mode_parameters(start), options);
    if (!g.stage1.converged)
        throw FitError("stage 1", g.stage1.iterations, g.stage1.residual_norm, g.stage1.stop_reason);
    g.stage2 = fit_stage(ts, g.stage1.params, FreezeMask::none(start), options);
    if (!g.stage2.converged)
        throw FitError("stage 2", g.stage2.iterations, g.stage2.residual_norm, g.stage2.stop_reason);
    return g;
}

/// Two-mode lattice holding the endpoints of link `link` and that link only.
inline LatticeSpec restrict_to_link(const LatticeSpec& spec, std::size_t link) {
    if (link >= spec.couplings.size()) throw InvalidArgument("restrict_to_link: link index out of range");
    CouplingSpec c = spec.couplings[link];
    c.carries_loop_phase = false;
    LatticeSpec out;
    out.modes = {spec.modes[spec.index_of(c.from)], spec.modes[spec.index_of(c.to)]};
    out.couplings = {c};
    out.validate();
    return out;
}

/// Traces whose input and output nodes are both in `labels`.
inline TraceSet restrict_traces(const TraceSet& ts, const std::vector<std::string>& labels) {
    auto has = [&](const std::string& l) { return std::find(labels.begin(), labels.end(), l) != labels.end(); };
    TraceSet out;
    out.provenance = ts.provenance;
    for (const auto& t : ts.traces)
        if (has(t.out) && has(t.in)) out.traces.push_back(t);
    if (out.traces.empty()) throw InvalidArgument("restrict_traces: no traces for the requested modes");
    return out;
}

struct PairwiseResult {
    LatticeSpec lattice;  // two modes, one link
    FitResult fit;
};

/// Fits nu, kappa, eta of both modes, beta of the single link and the two
/// transmission scale factors to data taken with one pump on. Covariance is
/// reported when the data constrain it (not for an uncoupled pair).
inline PairwiseResult pairwise_fit(const TraceSet& ts, const LatticeSpec& pair_init, FitOptions options = {}) {
    if (pair_init.size() != 2 || pair_init.couplings.size() != 1)
        throw InvalidArgument("pairwise_fit: expected two modes and one link");
    FitParams start = FitParams::from_lattice(pair_init);
    start = estimate_scale_factors(start, ts);
    FreezeMask mask = FreezeMask::none(start);
    mask.frozen[start.index_phi_off()] = true;
    options.lm.require_covariance = false;
    PairwiseResult r;
    r.fit = fit_stage(ts, start, mask, options);
    if (!r.fit.converged)
        throw FitError("pairwise", r.fit.iterations, r.fit.residual_norm, r.fit.stop_reason);
    r.lattice = r.fit.params.lattice;
    return r;
}

inline nlohmann::json to_json(const LMOptions& o) {
    return {{"max_iterations", o.max_iterations},
            {"ftol", o.ftol},
            {"gtol", o.gtol},
            {"initial_lambda", o.initial_lambda},
            {"relative_step", o.relative_step},
            {"min_step", o.min_step},
            {"max_lambda", o.max_lambda},
            {"rank_tolerance", o.rank_tolerance}};
}

inline nlohmann::json to_json(const FitResult& r) {
    nlohmann::json params = nlohmann::json::array();
    const Eigen::VectorXd v = r.params.values();
    for (std::size_t p = 0; p < r.names.size(); ++p) {
        nlohmann::json e{{"name", r.names[p]}, {"value", v(static_cast<Eigen::Index>(p))}, {"frozen", bool(r.frozen[p])}};
        e["sigma"] = r.sigma[p] ? nlohmann::json(*r.sigma[p]) : nlohmann::json(nullptr);
        params.push_back(std::move(e));
    }
    nlohmann::json j{{"parameters", std::move(params)},
                     {"residual_norm", r.residual_norm},
                     {"iterations", r.iterations},
                     {"converged", r.converged},
                     {"stop_reason", r.stop_reason}};
    if (!r.null_space.empty()) j["null_space"] = r.null_space;
    return j;
}

inline nlohmann::json fit_report(const GlobalFitResult& g) {
    nlohmann::json j{{"stage1", to_json(g.stage1)}, {"stage2", to_json(g.stage2)}};
    j["frozen_mask"] = {{"stage1", g.stage1.frozen}, {"stage2", g.stage2.frozen}};
    j["optimizer"] = to_json(g.options.lm);
    j["transforms"] = {{"nu", "shift_MHz"},    {"kappa", "log"},        {"eta", "logit"},
                       {"beta", "log_floor_1e-6"}, {"phi_off", "identity"}, {"C", "log"}};
    return j;
}

}  // namespace synthlat
