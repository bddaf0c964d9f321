#pragma once

#include <functional>
#include <limits>
#include <optional>

#include "hdvi/algebra.hpp"
#include "hdvi/types.hpp"

namespace hdvi {

/// Galerkin data: strain map D, quadrature weights defining the Q inner
/// product, and the induced V metric G = D^T diag(w) D (must be SPD, which
/// encodes the kinematic boundary conditions already being eliminated).
struct DiscreteSpace {
    std::size_t n_dof = 0;
    DenseMatrix strain_map;
    Vector q_weights;
    DenseMatrix v_metric;
    CholeskyFactor v_metric_factor;
    double v_metric_min_eig = 0.0;
    double v_metric_max_eig = 0.0;

    std::size_t strain_dim() const { return strain_map.rows; }

    Vector strain(const Vector& u) const;
    /// Assembled dual vector of a strain field: D^T diag(w) eps.
    Vector strain_adjoint(const Vector& eps) const;

    double q_inner(const Vector& a, const Vector& b) const;
    double v_inner(const Vector& a, const Vector& b) const;
    double v_norm(const Vector& u) const;
    /// Dual norm sqrt(f^T G^{-1} f) of an assembled functional.
    double dual_norm(const Vector& f) const;
};

DiscreteSpace make_space(DenseMatrix strain_map, Vector q_weights);

struct Constraint {
    std::size_t dof;
    double upper_bound;
};

/// Admissible set: per-DOF upper bounds (box type). Projection is the exact
/// Euclidean one, componentwise clamping.
struct ConstraintSet {
    std::vector<Constraint> upper_bounds;

    bool empty() const { return upper_bounds.empty(); }
    bool zero_feasible() const;
    bool feasible(const Vector& v, double tol = 0.0) const;
};

Vector project(const ConstraintSet& set, Vector v);

/// Normal-compliance traction on contact DOFs with the clamp law
/// p(r) = stiffness * max(r, 0), lumped boundary weight per DOF.
struct ComplianceContact {
    std::size_t dof;
    double weight;
};

struct ComplianceLaw {
    std::vector<ComplianceContact> contacts;
    double stiffness = 0.0;

    bool empty() const { return contacts.empty() || stiffness == 0.0; }
    double lipschitz() const { return stiffness; }
    double max_weight() const;

    double value(double r) const { return r > 0.0 ? stiffness * r : 0.0; }
    /// One-sided directional derivative of the clamp law.
    double derivative(double r, double dir) const {
        if (r > 0.0) return stiffness * dir;
        if (r == 0.0) return dir > 0.0 ? stiffness * dir : 0.0;
        return 0.0;
    }

    /// out += weight_i * p(u_i) at each contact DOF.
    void add_traction(const Vector& u, Vector& out) const;
    /// out += weight_i * p'(base_i; du_i) at each contact DOF.
    void add_traction_derivative(const Vector& base, const Vector& du, Vector& out) const;
};

struct RelaxationKernel {
    MatrixKernel op;
    double sup_norm = 0.0;      // max sampled weighted operator norm, times safety factor
    double norm_at_zero = 0.0;  // weighted operator norm of R(0)
};

RelaxationKernel make_relaxation_kernel(MatrixKernel op, const Vector& q_weights, const TimeGrid& grid,
                                        double safety_factor = 1.0);

class LoadSampler {
  public:
    LoadSampler() = default;
    static LoadSampler constant(Vector f);
    /// Samples at strictly increasing times, linear interpolation between
    /// nodes, clamped outside the sampled range.
    static LoadSampler table(std::vector<double> times, std::vector<Vector> values);
    static LoadSampler function(std::size_t dim, std::function<Vector(double)> eval);

    Vector at(double t) const;
    std::size_t dim() const { return dim_; }

  private:
    std::size_t dim_ = 0;
    std::function<Vector(double)> eval_;
};

/// a + s * b, evaluated pointwise in time.
LoadSampler combine_loads(const LoadSampler& a, double s, const LoadSampler& b);

/// Full problem instance. Everything an operation needs is precomputed here:
/// the assembled operator W = D^T diag(w) B D, the coercivity constant in the
/// V metric, and the projected fixed-point step sizes.
struct HdviProblem {
    DiscreteSpace space;
    DenseMatrix stiffness;  // B, acting on strain vectors
    RelaxationKernel kernel;
    ComplianceLaw compliance;
    ConstraintSet constraints;
    LoadSampler load;
    TimeGrid grid;

    DenseMatrix w_operator;      // assembled W
    double coercivity = 0.0;     // smallest eigenvalue of sym(W) in the V metric
    double euclid_min_eig = 0.0; // smallest eigenvalue of sym(W), Euclidean
    double step_size = 0.0;      // rho for the projected fixed-point iteration
    double metric_step_size = 0.0;  // rho for projections in the V metric (operator G)

    /// W u + P(u), assembled.
    Vector apply_operator(const Vector& u) const;
    Vector load_at(double t) const { return load.at(t); }
};

HdviProblem make_problem(DiscreteSpace space, DenseMatrix stiffness, MatrixKernel kernel_op,
                         ComplianceLaw compliance, ConstraintSet constraints, LoadSampler load, TimeGrid grid,
                         double kernel_norm_safety = 1.0);

/// 1D rod on (0,1): piecewise-linear elements, left end fixed, unit upper
/// bound on the displacement of the right end, unit stiffness, constant unit
/// relaxation, unit end load. Closed-form solution x * exp(-t) used across
/// the regression suite.
HdviProblem build_rod_example(std::size_t n_elements, const TimeGrid& grid);

/// Nodal values of the rod example's exact solution at time t.
Vector rod_exact_solution(std::size_t n_elements, double t);

struct DerivedConstants {
    double memory_rate = 0.0;         // |R| / m_B
    double solution_lipschitz = 0.0;  // (1 / m_B) * exp(memory_rate * T)
    double contraction_window = std::numeric_limits<double>::infinity();  // m_B / (2 |R|)
    bool window_unbounded = false;
};

DerivedConstants derived_constants(const HdviProblem& p);

}  // namespace hdvi
