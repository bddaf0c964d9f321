#pragma once

#include "hdvi/model.hpp"
#include "hdvi/types.hpp"

namespace hdvi {

enum class ConeTag { free, nonpositive, zero };

const char* cone_tag_name(ConeTag tag);

/// Per-constrained-DOF classification of the critical cone at (z, zeta):
/// free (constraint inactive), nonpositive (active, multiplier numerically
/// zero: direction bounded above by 0), zero (active with strictly positive
/// multiplier: direction pinned). Unconstrained DOFs are always free.
struct CriticalCone {
    std::vector<ConeTag> tags;  // aligned with constraints.upper_bounds

    bool all_free() const;
};

struct EviResult {
    Vector solution;
    double residual = 0.0;
    std::size_t iterations = 0;
    Vector multiplier;  // omega - (W + P)(z), assembled
};

struct EviOptions {
    double tolerance = 1e-10;
    std::size_t max_iterations = 1'000'000;
};

inline constexpr double kActiveToleranceScale = 1e-10;
inline constexpr double kMultiplierToleranceScale = 1e-8;

/// Solves z in U, <(W+P)z - omega, v - z> >= 0 for all v in U by the
/// projected fixed-point iteration z <- proj(z - rho ((W+P)z - omega)) with
/// the problem's precomputed step size. The starting point is projected
/// before iterating; the result's residual is the fixed-point residual below.
EviResult solve_evi(const HdviProblem& p, const Vector& omega, const Vector& z0, double tol,
                    std::size_t max_iterations = EviOptions{}.max_iterations);

/// |z - proj(z - rho ((W+P)z - omega))|_2 / rho; zero exactly at solutions.
double vi_residual(const HdviProblem& p, const Vector& z, const Vector& omega);

/// Classifies constrained DOFs. act_scale and mult_scale are relative
/// tolerances, applied as act_scale*(1+|g_i|) and mult_scale*(1+|zeta|_inf).
/// A multiplier below -tolerance at an active DOF contradicts optimality and
/// raises InconsistentMultiplier.
CriticalCone critical_cone(const HdviProblem& p, const Vector& z, const Vector& zeta,
                           double act_scale = kActiveToleranceScale,
                           double mult_scale = kMultiplierToleranceScale);

/// Solves the derivative inequality over the critical cone:
/// dz in C, <W dz + P'(base; dz) - domega, v - dz> >= 0 for all v in C,
/// with the same projected iteration (nonpositive tags clamp above at 0,
/// zero tags pin to 0 exactly). An optional starting point (projected into
/// the cone first) warms up marching loops.
EviResult solve_evi_derivative(const HdviProblem& p, const CriticalCone& cone, const Vector& base_z,
                               const Vector& delta_omega, double tol, const Vector* start = nullptr,
                               std::size_t max_iterations = EviOptions{}.max_iterations);

/// Fixed-point residual of the derivative inequality at dz.
double derivative_residual(const HdviProblem& p, const CriticalCone& cone, const Vector& base_z,
                           const Vector& dz, const Vector& delta_omega);

/// Projects the V-representative G^{-1} f of an assembled functional f onto
/// the cone {d : d_i <= 0 at each listed DOF} in the V metric; returns the
/// projected direction. Used by the minimal-slack diagnostics.
Vector metric_cone_projection(const HdviProblem& p, const std::vector<std::size_t>& active_dofs,
                              const Vector& functional, double tol);

}  // namespace hdvi
