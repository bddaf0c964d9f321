#pragma once

#include "hdvi/evi.hpp"
#include "hdvi/model.hpp"

namespace hdvi {

struct NodeMeta {
    double vi_residual = 0.0;
    std::size_t evi_iterations = 0;
    std::size_t inner_iterations = 0;
};

/// Time-indexed displacement states, one per grid node.
struct Trajectory {
    TimeGrid grid;
    std::vector<Vector> values;
    std::vector<NodeMeta> meta;

    static Trajectory zero(const TimeGrid& grid, std::size_t n_dof);
};

struct ForwardOptions {
    double tolerance = 1e-10;
    QuadratureRule rule = QuadratureRule::trapezoid;
    /// Ratio of the elliptic solve tolerance to the trajectory tolerance.
    double evi_tol_factor = 0.5;
    /// Change tolerance of the self-term fixed-point loop, relative to tolerance.
    double inner_tol_factor = 1e-2;
    std::size_t max_inner_iterations = 100;
};

/// Marches the constrained evolution: at each node the memory term is formed
/// from the strain history and the elliptic solver produces the state. With
/// the trapezoid rule the current node enters its own memory term, resolved
/// by an inner fixed-point loop; that loop contracts only when
/// (dt/2) |R(0)| / m < 1, which is checked up front.
Trajectory solve_forward(const HdviProblem& p, const ForwardOptions& opt = {});

/// One application of the trajectory fixed-point map: every node is mapped
/// through the memory of the *given* history (no inner loop). Nodes are
/// independent and evaluated in parallel.
Trajectory apply_fixed_point_map(const HdviProblem& p, const Trajectory& u, double tol,
                                 QuadratureRule rule = QuadratureRule::trapezoid);

struct PicardResult {
    Trajectory trajectory;
    std::vector<double> sweep_changes;  // sup-node V-norm change per application
    std::size_t applications = 0;
    /// Number of sweeps after which the iterate was a certified fixed point:
    /// the first k with |u_k - map(u_k)| <= tol.
    std::size_t converged_after = 0;
};

PicardResult solve_picard(const HdviProblem& p, const Trajectory& u0, double tol, std::size_t max_sweeps,
                          QuadratureRule rule = QuadratureRule::trapezoid);

struct EquivalenceReport {
    double max_vi_residual = 0.0;
    double max_fixed_point_residual = 0.0;
};

/// Per node: the inequality residual at omega built from the trajectory's own
/// memory, and the V-distance to one fixed-point map application.
EquivalenceReport equivalence_check(const HdviProblem& p, const Trajectory& u, double tol,
                                    QuadratureRule rule = QuadratureRule::trapezoid);

struct LipschitzReport {
    double ratio = 0.0;
    double bound = 0.0;               // (1/m) exp(rate T) from the derived constants
    double solution_distance = 0.0;   // sup-node V distance
    double load_distance = 0.0;       // sup-node dual-norm distance
};

/// Solves the problem under both loads and compares the solution distance
/// against the continuity bound of the solution operator.
LipschitzReport lipschitz_probe(const HdviProblem& p, const LoadSampler& other_load, double tol,
                                QuadratureRule rule = QuadratureRule::trapezoid);

/// max over nodes of the V-norm distance between trajectories.
double trajectory_distance(const DiscreteSpace& space, const Trajectory& a, const Trajectory& b);

}  // namespace hdvi
