#pragma once

#include <optional>

#include "hdvi/forward.hpp"

namespace hdvi {

struct MemberDiagnostic {
    bool feasible = false;
    std::optional<double> p_residual;  // minimal inequality slack; empty when infeasible
    double q_residual = 0.0;           // sup-node distance to one fixed-point map application
    double v_distance = 0.0;           // sup-node V distance to the reference solution
};

struct SequenceDiagnostic {
    std::vector<MemberDiagnostic> members;
    double p_bound_constant = 0.0;  // (1/m) exp(rate T), identical to the derived Lipschitz constant
    double q_bound_constant = 0.0;  // factorial-tail constant of the fixed-point map powers
};

struct WellposedOptions {
    double tolerance = 1e-10;
    QuadratureRule rule = QuadratureRule::trapezoid;
    double act_scale = kActiveToleranceScale;
    double slack = 1e-8;  // additive slack on the verified bounds
};

/// sup over nodes of |u(t) - map(u)(t)|_V: how far the trajectory is from
/// satisfying the fixed-point equation.
double q_residual(const HdviProblem& p, const Trajectory& u, double tol,
                  QuadratureRule rule = QuadratureRule::trapezoid);

/// Minimal uniform slack with which the trajectory satisfies the perturbed
/// inequality: per node, the V norm of the residual functional's
/// representative projected onto the feasible-direction cone at u(t); the
/// maximum over nodes is returned. Infeasible trajectories (a bounded DOF
/// above its bound by more than the activity tolerance) yield an empty value.
std::optional<double> p_residual(const HdviProblem& p, const Trajectory& u, double tol,
                                 QuadratureRule rule = QuadratureRule::trapezoid,
                                 double act_scale = kActiveToleranceScale);

/// Runs both residuals and the distance to the reference solution for every
/// member, then enforces the convergence bounds: feasible members must obey
/// v_distance <= p_bound_constant * p_residual + slack, all members
/// v_distance <= q_bound_constant * q_residual + slack. A violation raises
/// BoundViolated naming the member. Members are processed in parallel.
SequenceDiagnostic verify_t4_bound(const HdviProblem& p, const std::vector<Trajectory>& members,
                                   const WellposedOptions& opt = {});

}  // namespace hdvi
