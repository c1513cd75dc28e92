#pragma once

// Levenberg-Marquardt on the free coordinates of a parameter vector, with a
// forward-difference Jacobian and a covariance estimate at the solution.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "synthlat/errors.hpp"
#include "synthlat/format.hpp"
#include "synthlat/parallel.hpp"

namespace synthlat {

struct LMOptions {
    int max_iterations = 200;
    double ftol = 1e-10;            // relative change of the residual norm
    double gtol = 1e-10;            // max-norm of J^T r
    double initial_lambda = 1e-6;    // relative to diag(J^T J)
    double relative_step = 1e-6;    // finite-difference step = max(rel * |x|, min_step)
    double min_step = 1e-8;
    double max_lambda = 1e16;
    double rank_tolerance = 1e-13;  // eigenvalue ratio of the scaled normal matrix
    bool require_covariance = true;
};

struct LMResult {
    Eigen::VectorXd x;
    std::vector<int> free_indices;
    std::optional<Eigen::MatrixXd> covariance;  // over free coordinates
    std::vector<std::string> null_space;        // filled when covariance is unavailable
    double residual_norm = 0.0;
    double residual_variance = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string stop_reason;
    std::vector<double> norm_history;           // after each accepted step
};

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

namespace detail {

inline Eigen::MatrixXd forward_jacobian(const ResidualFn& f, const Eigen::VectorXd& x, const Eigen::VectorXd& r0,
                                        const std::vector<int>& free, const LMOptions& opt) {
    Eigen::MatrixXd J(r0.size(), static_cast<Eigen::Index>(free.size()));
    parallel_for(free.size(), [&](std::size_t c) {
        const int p = free[c];
        const double h = std::max(opt.relative_step * std::abs(x(p)), opt.min_step);
        Eigen::VectorXd xp = x;
        xp(p) += h;
        const double step = xp(p) - x(p);
        J.col(static_cast<Eigen::Index>(c)) = (f(xp) - r0) / step;
    });
    return J;
}

inline std::string describe_combination(const Eigen::VectorXd& v, const std::vector<int>& free,
                                        const std::vector<std::string>& names) {
    std::ostringstream os;
    bool first = true;
    const double biggest = v.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(v(i)) < 1e-3 * biggest) continue;
        const int p = free[static_cast<std::size_t>(i)];
        const std::string name =
            static_cast<std::size_t>(p) < names.size() ? names[static_cast<std::size_t>(p)] : "x" + std::to_string(p);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%+.3f", v(i));
        os << (first ? "" : " ") << buf << "*" << name;
        first = false;
    }
    return os.str();
}

}  // namespace detail

/// Covariance sigma^2 (J^T J)^-1 with sigma^2 = |r|^2 / (N - p). Columns are
/// scaled to unit norm before the rank test. On rank deficiency returns
/// nullopt and fills `null_space`.
inline std::optional<Eigen::MatrixXd> covariance_from_jacobian(const Eigen::MatrixXd& J, double residual_sq,
                                                               const std::vector<int>& free,
                                                               const std::vector<std::string>& names,
                                                               double rank_tolerance,
                                                               std::vector<std::string>& null_space,
                                                               double& residual_variance) {
    const Eigen::Index p = J.cols();
    const Eigen::Index dof = std::max<Eigen::Index>(J.rows() - p, 1);
    residual_variance = residual_sq / static_cast<double>(dof);
    Eigen::VectorXd norms = J.colwise().norm().transpose();
    null_space.clear();
    for (Eigen::Index c = 0; c < p; ++c)
        if (!(norms(c) > 0.0)) {
            Eigen::VectorXd e = Eigen::VectorXd::Zero(p);
            e(c) = 1.0;
            null_space.push_back(detail::describe_combination(e, free, names));
        }
    if (!null_space.empty()) return std::nullopt;

    const Eigen::MatrixXd Js = J * norms.cwiseInverse().asDiagonal();
    const Eigen::MatrixXd A = Js.transpose() * Js;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    const double top = es.eigenvalues().maxCoeff();
    for (Eigen::Index i = 0; i < p; ++i) {
        if (es.eigenvalues()(i) <= rank_tolerance * top) {
            Eigen::VectorXd v = norms.cwiseInverse().asDiagonal() * es.eigenvectors().col(i);
            null_space.push_back(detail::describe_combination(v / v.norm(), free, names));
        }
    }
    if (!null_space.empty()) return std::nullopt;
    const Eigen::MatrixXd inv_scaled =
        es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    return residual_variance * norms.cwiseInverse().asDiagonal() * inv_scaled * norms.cwiseInverse().asDiagonal();
}

/// Minimizes |f(x)|^2 over coordinates with frozen[i] == false. Frozen
/// coordinates are returned bit-identical to x0.
///
/// Stops when an accepted step changes |r| by less than ftol relative, when
/// |J^T r|_inf < gtol, when no damping yields a decrease (stalled at a
/// minimum), or after max_iterations (not converged).
inline LMResult damped_least_squares(const ResidualFn& f, const Eigen::VectorXd& x0, const std::vector<bool>& frozen,
                                     const LMOptions& opt = {}, const std::vector<std::string>& names = {}) {
    if (frozen.size() != static_cast<std::size_t>(x0.size()))
        throw InvalidArgument("damped_least_squares: mask length does not match parameter count");
    LMResult res;
    for (std::size_t i = 0; i < frozen.size(); ++i)
        if (!frozen[i]) res.free_indices.push_back(static_cast<int>(i));
    if (res.free_indices.empty()) throw InvalidArgument("damped_least_squares: no free parameters");
    const auto& free = res.free_indices;

    Eigen::VectorXd x = x0;
    Eigen::VectorXd r = f(x);
    if (!r.allFinite()) throw NumericError("damped_least_squares: non-finite residual at the initial point");
    double cost = r.squaredNorm();
    double lambda = opt.initial_lambda;
    res.norm_history.push_back(std::sqrt(cost));

    Eigen::MatrixXd J;
    bool done = false;
    while (!done && res.iterations < opt.max_iterations) {
        J = detail::forward_jacobian(f, x, r, free, opt);
        const Eigen::VectorXd g = J.transpose() * r;
        if (g.cwiseAbs().maxCoeff() < opt.gtol) {
            res.converged = true;
            res.stop_reason = "gradient below tolerance";
            break;
        }
        ++res.iterations;
        const Eigen::MatrixXd A = J.transpose() * J;
        Eigen::VectorXd damping = A.diagonal();
        const double floor = std::max(damping.maxCoeff(), 1.0) * 1e-12;
        for (Eigen::Index i = 0; i < damping.size(); ++i) damping(i) = std::max(damping(i), floor);

        for (;;) {
            Eigen::MatrixXd Ad = A;
            Ad.diagonal() += lambda * damping;
            const Eigen::VectorXd dx = Ad.ldlt().solve(-g);
            Eigen::VectorXd trial = x;
            for (std::size_t c = 0; c < free.size(); ++c) trial(free[c]) += dx(static_cast<Eigen::Index>(c));
            // A trial point where the model cannot be evaluated is a rejected step.
            Eigen::VectorXd r_trial;
            try {
                r_trial = f(trial);
            } catch (const SingularMatrixError&) {
            } catch (const NumericError&) {
            }
            const double cost_trial = r_trial.size() == r.size() && r_trial.allFinite()
                                          ? r_trial.squaredNorm()
                                          : std::numeric_limits<double>::infinity();
            if (cost_trial < cost) {
                const double old_norm = std::sqrt(cost);
                x = std::move(trial);
                r = std::move(r_trial);
                cost = cost_trial;
                lambda = std::max(lambda / 10.0, 1e-12);
                const double new_norm = std::sqrt(cost);
                res.norm_history.push_back(new_norm);
                if ((old_norm - new_norm) <= opt.ftol * old_norm) {
                    res.converged = true;
                    res.stop_reason = "relative residual change below tolerance";
                    done = true;
                }
                break;
            }
            lambda *= 10.0;
            if (lambda > opt.max_lambda) {
                res.converged = true;
                res.stop_reason = "no decrease possible (stalled at minimum)";
                done = true;
                break;
            }
        }
    }
    if (!res.converged) res.stop_reason = "maximum iterations reached";

    res.x = x;
    res.residual_norm = std::sqrt(cost);
    if (J.size() == 0 || done) J = detail::forward_jacobian(f, x, r, free, opt);
    res.covariance = covariance_from_jacobian(J, cost, free, names, opt.rank_tolerance, res.null_space,
                                              res.residual_variance);
    if (!res.covariance && opt.require_covariance) throw RankDeficiencyError(res.null_space);
    return res;
}

}  // namespace synthlat
