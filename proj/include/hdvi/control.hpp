#pragma once

#include <optional>

#include "hdvi/sensitivity.hpp"

namespace hdvi {

/// Control samples at the grid nodes, each a vector in the discrete control
/// space (traction and/or body-force DOFs).
struct Control {
    std::vector<Vector> samples;

    static Control constant(const TimeGrid& grid, Vector value);
    std::size_t dim() const { return samples.empty() ? 0 : samples.front().size(); }
};

/// Optional per-DOF box for the admissible control set.
struct ControlBounds {
    Vector lower;
    Vector upper;

    void project(Control& g) const;
    bool feasible(const Control& g, double tol = 0.0) const;
};

/// Linear control-to-load assembly: load(t) = fixed(t) + A g(t), sampled at
/// the grid nodes and linearly interpolated in between. The Z inner product
/// is diagonal with the given weights.
struct ControlMap {
    DenseMatrix assembly;  // n_dof x n_control
    LoadSampler fixed_load;
    Vector z_weights;
};

/// Body-force + traction map for the rod: lumped nodal masses for the body
/// columns and a point traction at the free end.
ControlMap rod_control_map(const HdviProblem& rod, bool body_columns, bool traction_column,
                           LoadSampler fixed_load);

LoadSampler control_to_load(const ControlMap& map, const Control& g, const TimeGrid& grid);

struct CostReport {
    double tracking = 0.0;
    double regularization = 0.0;
    double total = 0.0;
};

struct CostOptions {
    double alpha = 1.0;  // tracking weight
    double beta = 1e-6;  // regularization weight (must be positive)
    Vector target;       // desired end state
    double tolerance = 1e-10;
    QuadratureRule rule = QuadratureRule::trapezoid;
};

/// alpha |u(T) - target|_V^2 + beta |g|^2 with the discrete H1-in-time
/// control norm: trapezoid weights on values, forward differences on rates.
CostReport evaluate_cost(const HdviProblem& p, const ControlMap& map, const Control& g, const CostOptions& opt);

double control_h1_norm_sq(const Control& g, const Vector& z_weights, const TimeGrid& grid);

struct MinimizeOptions {
    CostOptions cost;
    std::optional<ControlBounds> bounds;
    double stationarity_tol = 1e-7;  // stop when no probe slope is below -tol
    std::size_t max_iterations = 50;
    std::size_t max_halvings = 60;
    double armijo_slope_fraction = 1e-4;
};

struct MinimizeResult {
    Control control;
    std::vector<CostReport> history;       // accepted iterates, including the start
    std::vector<double> step_lengths;      // per accepted step
    bool converged = false;                // probe slopes all above -stationarity_tol
    double worst_probe_slope = 0.0;
};

/// Projected descent on the cost. The descent direction is assembled from
/// exact directional derivatives of the tracking term along the canonical
/// control basis (one derivative march per coordinate, run in parallel), fed
/// into a Gauss-Newton model together with the exact regularizer curvature.
/// Armijo backtracking with factor 0.5 and the given slope fraction;
/// iterates are projected onto the bounds after every trial step.
MinimizeResult minimize(const HdviProblem& p, const ControlMap& map, Control g0, const MinimizeOptions& opt);

/// Exact directional derivative of the cost at g along dg (unit scaling is
/// the caller's business): chain rule through the linear control-to-load map
/// and the derivative march of the tracking term, exact for the regularizer.
double cost_directional_derivative(const HdviProblem& p, const ControlMap& map, const Control& g,
                                   const Control& dg, const CostOptions& opt);

}  // namespace hdvi
