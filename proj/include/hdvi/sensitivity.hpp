#pragma once

#include "hdvi/forward.hpp"

namespace hdvi {

/// Directional state response at each node, plus the node's cone
/// classification. Pinned components are exactly zero; nonpositive ones are
/// clamped above at zero. Values live node-by-node only: the response need
/// not be continuous in time, so no inter-node interpolation is ever applied.
struct DerivativeTrajectory {
    TimeGrid grid;
    std::vector<Vector> values;
    std::vector<CriticalCone> cones;
    std::vector<NodeMeta> meta;
};

struct SensitivityOptions {
    double tolerance = 1e-10;
    QuadratureRule rule = QuadratureRule::trapezoid;
    double act_scale = kActiveToleranceScale;
    double mult_scale = kMultiplierToleranceScale;
    std::size_t max_inner_iterations = 100;
};

/// Critical cones of a trajectory, one per node, classified from the frozen
/// base multipliers.
std::vector<CriticalCone> trajectory_cones(const HdviProblem& p, const Trajectory& base,
                                           const SensitivityOptions& opt = {});

/// Marches the derivative equation along a converged base trajectory: per
/// node the multiplier and critical cone are frozen from the base state, the
/// direction's own memory term is accumulated, and the cone-constrained
/// solver produces the response. The trapezoid self-term is resolved by the
/// same inner loop as the forward march.
DerivativeTrajectory solve_derivative(const HdviProblem& p, const Trajectory& base, const LoadSampler& direction,
                                      const SensitivityOptions& opt = {});

/// Same march with cones already classified (they depend only on the base).
DerivativeTrajectory solve_derivative(const HdviProblem& p, const Trajectory& base, const LoadSampler& direction,
                                      std::vector<CriticalCone> cones, const SensitivityOptions& opt);

/// Time-quadrature L^p norm of per-node V norms, left-constant rule on nodes 0..M-1.
double lp_time_norm(const std::vector<double>& node_norms, const TimeGrid& grid, double exponent);

struct FdReport {
    std::vector<double> taus;
    std::vector<double> errors;  // L^p(0,T;V) distance of the difference quotient to the response
};

/// Difference-quotient validation: solves the perturbed problem at each tau
/// and measures the quotient's distance to the marching response. The taus
/// must be strictly decreasing and positive. Per-tau solves run in parallel.
FdReport fd_validate(const HdviProblem& p, const LoadSampler& direction, const std::vector<double>& taus,
                     double exponent, const SensitivityOptions& opt = {});

/// Diagonal probe: pairs tau_k with a perturbed direction z_k -> direction
/// and measures the same quotient error along the diagonal.
FdReport hadamard_probe(const HdviProblem& p, const LoadSampler& direction,
                        const std::vector<LoadSampler>& perturbed, const std::vector<double>& taus,
                        double exponent, const SensitivityOptions& opt = {});

}  // namespace hdvi
