#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace synthlat {

/// Base class for every error raised by the library that is not a plain
/// argument violation.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Operation applied to a value in the wrong state (e.g. converting a trace
/// that is already linear).
class InvalidState : public Error {
public:
    using Error::Error;
};

class SingularMatrixError : public Error {
public:
    SingularMatrixError(double delta_MHz, double loop_phase, double condition)
        : Error("coupling matrix is singular at delta=" + std::to_string(delta_MHz) +
                " MHz, phi=" + std::to_string(loop_phase) +
                " rad (condition estimate " + std::to_string(condition) + ")"),
          delta_MHz_(delta_MHz), loop_phase_(loop_phase), condition_(condition) {}

    double delta_MHz() const noexcept { return delta_MHz_; }
    double loop_phase() const noexcept { return loop_phase_; }
    double condition() const noexcept { return condition_; }

private:
    double delta_MHz_;
    double loop_phase_;
    double condition_;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class DegenerateBandError : public Error {
public:
    DegenerateBandError(double k, double gap)
        : Error("band gap closes at k=" + std::to_string(k) + " (gap " + std::to_string(gap) + ")"),
          k_(k), gap_(gap) {}
    double k() const noexcept { return k_; }
    double gap() const noexcept { return gap_; }

private:
    double k_;
    double gap_;
};

class DegenerateBackgroundError : public Error {
public:
    using Error::Error;
};

/// Malformed input. line is 1-based; 0 when the format has no line notion.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Normal equations are singular; `null_space` holds human-readable linear
/// combinations of parameters that the data cannot constrain.
class RankDeficiencyError : public Error {
public:
    explicit RankDeficiencyError(std::vector<std::string> null_space)
        : Error(describe(null_space)), null_space_(std::move(null_space)) {}
    const std::vector<std::string>& null_space() const noexcept { return null_space_; }

private:
    static std::string describe(const std::vector<std::string>& combos) {
        std::string s = "normal equations are rank deficient; unconstrained combinations:";
        for (const auto& c : combos) s += "\n  " + c;
        return s;
    }
    std::vector<std::string> null_space_;
};

class FitError : public Error {
public:
    FitError(std::string stage, int iterations, double residual_norm, const std::string& reason)
        : Error("fit did not converge in " + stage + " after " + std::to_string(iterations) +
                " iterations (residual norm " + std::to_string(residual_norm) + "): " + reason),
          stage_(std::move(stage)), iterations_(iterations), residual_norm_(residual_norm) {}
    const std::string& stage() const noexcept { return stage_; }
    int iterations() const noexcept { return iterations_; }
    double residual_norm() const noexcept { return residual_norm_; }

private:
    std::string stage_;
    int iterations_;
    double residual_norm_;
};

}  // namespace synthlat
