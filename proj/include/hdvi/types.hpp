#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace hdvi {

using Vector = std::vector<double>;

/// Dense row-major matrix. All solver-facing operators (stiffness, strain
/// map, metrics, relaxation samples) live in this representation; sizes are
/// desk-scale so no sparse storage is provided.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    bool square() const { return rows == cols; }
};

/// Uniform grid on [0, t_end] with `steps` intervals (steps+1 nodes).
struct TimeGrid {
    double t_end = 1.0;
    std::size_t steps = 1;

    double dt() const { return t_end / static_cast<double>(steps); }
    double node(std::size_t i) const { return t_end * static_cast<double>(i) / static_cast<double>(steps); }
    std::size_t node_count() const { return steps + 1; }
};

enum class ErrorKind {
    dimension_mismatch,
    not_spd,
    empty_history,
    max_iterations,
    non_finite_iterate,
    step_contraction,
    inconsistent_multiplier,
    max_sweeps,
    degenerate_denominator,
    bound_violated,
    line_search_failed,
    parse,
    validation,
};

/// Uniform error type; `kind()` drives the CLI exit-code mapping.
class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

  private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

inline const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::dimension_mismatch: return "DimensionMismatch";
        case ErrorKind::not_spd: return "NotSPD";
        case ErrorKind::empty_history: return "EmptyHistory";
        case ErrorKind::max_iterations: return "MaxIterations";
        case ErrorKind::non_finite_iterate: return "NonFiniteIterate";
        case ErrorKind::step_contraction: return "StepContractionViolated";
        case ErrorKind::inconsistent_multiplier: return "InconsistentMultiplier";
        case ErrorKind::max_sweeps: return "MaxSweeps";
        case ErrorKind::degenerate_denominator: return "DegenerateDenominator";
        case ErrorKind::bound_violated: return "BoundViolated";
        case ErrorKind::line_search_failed: return "LineSearchFailed";
        case ErrorKind::parse: return "ParseError";
        case ErrorKind::validation: return "ValidationError";
    }
    return "Unknown";
}

inline bool all_finite(const Vector& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace hdvi
