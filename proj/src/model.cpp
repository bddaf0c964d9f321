#include "hdvi/model.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "hdvi/kernels.hpp"

namespace hdvi {

Vector DiscreteSpace::strain(const Vector& u) const {
    Vector eps(strain_dim());
    kernels::matvec(strain_map, u, eps);
    return eps;
}

Vector DiscreteSpace::strain_adjoint(const Vector& eps) const {
    Vector weighted(eps.size());
    for (std::size_t q = 0; q < eps.size(); ++q) weighted[q] = q_weights[q] * eps[q];
    Vector out(n_dof);
    kernels::matvec_transposed(strain_map, weighted, out);
    return out;
}

double DiscreteSpace::q_inner(const Vector& a, const Vector& b) const {
    double acc = 0.0;
    for (std::size_t q = 0; q < a.size(); ++q) acc += q_weights[q] * a[q] * b[q];
    return acc;
}

double DiscreteSpace::v_inner(const Vector& a, const Vector& b) const {
    Vector gb(n_dof);
    kernels::matvec(v_metric, b, gb);
    return dot(a, gb);
}

double DiscreteSpace::v_norm(const Vector& u) const { return std::sqrt(std::max(v_inner(u, u), 0.0)); }

double DiscreteSpace::dual_norm(const Vector& f) const {
    Vector rep = v_metric_factor.solve(f);
    return std::sqrt(std::max(dot(f, rep), 0.0));
}

DiscreteSpace make_space(DenseMatrix strain_map, Vector q_weights) {
    if (strain_map.rows != q_weights.size())
        fail(ErrorKind::validation, "space: q_weights length must equal strain rows");
    for (double w : q_weights)
        if (!(w > 0.0)) fail(ErrorKind::validation, "space: q_weights must be strictly positive");

    DiscreteSpace s;
    s.n_dof = strain_map.cols;
    s.strain_map = std::move(strain_map);
    s.q_weights = std::move(q_weights);

    // G = D^T diag(w) D
    DenseMatrix wd = s.strain_map;
    for (std::size_t q = 0; q < wd.rows; ++q)
        for (std::size_t j = 0; j < wd.cols; ++j) wd(q, j) *= s.q_weights[q];
    kernels::matmul(transpose(s.strain_map), wd, s.v_metric);

    try {
        s.v_metric_factor = cholesky(s.v_metric);
    } catch (const Error&) {
        fail(ErrorKind::validation, "space: V metric is not positive definite (strain map has a kernel)");
    }
    const auto eigs = symmetric_eigenvalues(s.v_metric);
    s.v_metric_min_eig = eigs.front();
    s.v_metric_max_eig = eigs.back();
    return s;
}

bool ConstraintSet::zero_feasible() const {
    for (const auto& c : upper_bounds)
        if (c.upper_bound < 0.0) return false;
    return true;
}

bool ConstraintSet::feasible(const Vector& v, double tol) const {
    for (const auto& c : upper_bounds)
        if (v[c.dof] > c.upper_bound + tol) return false;
    return true;
}

Vector project(const ConstraintSet& set, Vector v) {
    for (const auto& c : set.upper_bounds) v[c.dof] = std::min(v[c.dof], c.upper_bound);
    return v;
}

double ComplianceLaw::max_weight() const {
    double m = 0.0;
    for (const auto& c : contacts) m = std::max(m, std::abs(c.weight));
    return m;
}

void ComplianceLaw::add_traction(const Vector& u, Vector& out) const {
    for (const auto& c : contacts) out[c.dof] += c.weight * value(u[c.dof]);
}

void ComplianceLaw::add_traction_derivative(const Vector& base, const Vector& du, Vector& out) const {
    for (const auto& c : contacts) out[c.dof] += c.weight * derivative(base[c.dof], du[c.dof]);
}

RelaxationKernel make_relaxation_kernel(MatrixKernel op, const Vector& q_weights, const TimeGrid& grid,
                                        double safety_factor) {
    RelaxationKernel k;
    k.norm_at_zero = op.is_zero() ? 0.0 : weighted_operator_norm(op.at(0.0), q_weights);
    double sup = 0.0;
    if (!op.is_zero()) {
        for (double t : op.norm_sample_times(grid)) sup = std::max(sup, weighted_operator_norm(op.at(t), q_weights));
    }
    k.sup_norm = safety_factor * sup;
    k.op = std::move(op);
    return k;
}

LoadSampler LoadSampler::constant(Vector f) {
    LoadSampler s;
    s.dim_ = f.size();
    s.eval_ = [f = std::move(f)](double) { return f; };
    return s;
}

LoadSampler LoadSampler::table(std::vector<double> times, std::vector<Vector> values) {
    if (times.empty() || times.size() != values.size())
        fail(ErrorKind::validation, "load: table needs matching, nonempty times and values");
    for (std::size_t i = 0; i + 1 < times.size(); ++i)
        if (!(times[i] < times[i + 1])) fail(ErrorKind::validation, "load: table times must be strictly increasing");
    const std::size_t dim = values.front().size();
    for (const auto& v : values) {
        if (v.size() != dim) fail(ErrorKind::validation, "load: table values must share one dimension");
        if (!all_finite(v)) fail(ErrorKind::validation, "load: table values must be finite");
    }
    LoadSampler s;
    s.dim_ = dim;
    s.eval_ = [times = std::move(times), values = std::move(values)](double t) {
        if (t <= times.front()) return values.front();
        if (t >= times.back()) return values.back();
        const auto it = std::upper_bound(times.begin(), times.end(), t);
        const std::size_t hi = static_cast<std::size_t>(it - times.begin());
        const std::size_t lo = hi - 1;
        const double theta = (t - times[lo]) / (times[hi] - times[lo]);
        Vector out(values[lo].size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - theta) * values[lo][i] + theta * values[hi][i];
        return out;
    };
    return s;
}

LoadSampler LoadSampler::function(std::size_t dim, std::function<Vector(double)> eval) {
    LoadSampler s;
    s.dim_ = dim;
    s.eval_ = std::move(eval);
    return s;
}

Vector LoadSampler::at(double t) const {
    if (!eval_) fail(ErrorKind::validation, "load: sampler is empty");
    return eval_(t);
}

LoadSampler combine_loads(const LoadSampler& a, double s, const LoadSampler& b) {
    if (a.dim() != b.dim()) fail(ErrorKind::dimension_mismatch, "combine_loads: dimensions do not match");
    return LoadSampler::function(a.dim(), [a, s, b](double t) {
        Vector out = a.at(t);
        const Vector bv = b.at(t);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += s * bv[i];
        return out;
    });
}

Vector HdviProblem::apply_operator(const Vector& u) const {
    Vector out(space.n_dof);
    kernels::matvec(w_operator, u, out);
    compliance.add_traction(u, out);
    return out;
}

HdviProblem make_problem(DiscreteSpace space, DenseMatrix stiffness, MatrixKernel kernel_op,
                         ComplianceLaw compliance, ConstraintSet constraints, LoadSampler load, TimeGrid grid,
                         double kernel_norm_safety) {
    const std::size_t m = space.strain_dim();
    const std::size_t n = space.n_dof;
    if (!stiffness.square() || stiffness.rows != m)
        fail(ErrorKind::validation, "problem: stiffness must be square with the strain dimension");
    if (kernel_op.dim() != m) fail(ErrorKind::validation, "problem: kernel dimension must match the strain dimension");
    if (load.dim() != n) fail(ErrorKind::validation, "problem: load dimension must match n_dof");
    for (const auto& c : constraints.upper_bounds) {
        if (c.dof >= n) fail(ErrorKind::validation, "problem: constraint dof out of range");
        if (!std::isfinite(c.upper_bound)) fail(ErrorKind::validation, "problem: constraint bound must be finite");
    }
    {
        std::vector<std::size_t> seen;
        for (const auto& c : constraints.upper_bounds) seen.push_back(c.dof);
        std::sort(seen.begin(), seen.end());
        if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
            fail(ErrorKind::validation, "problem: constraint dofs must be distinct");
    }
    for (const auto& c : compliance.contacts)
        if (c.dof >= n) fail(ErrorKind::validation, "problem: contact dof out of range");
    if (!(grid.t_end > 0.0) || grid.steps == 0) fail(ErrorKind::validation, "problem: grid needs t_end > 0 and steps >= 1");

    HdviProblem p;
    p.kernel = make_relaxation_kernel(std::move(kernel_op), space.q_weights, grid, kernel_norm_safety);
    p.compliance = std::move(compliance);
    p.constraints = std::move(constraints);
    p.load = std::move(load);
    p.grid = grid;

    // W = D^T diag(w) B D
    DenseMatrix bd;
    kernels::matmul(stiffness, space.strain_map, bd);
    for (std::size_t q = 0; q < bd.rows; ++q)
        for (std::size_t j = 0; j < bd.cols; ++j) bd(q, j) *= space.q_weights[q];
    kernels::matmul(transpose(space.strain_map), bd, p.w_operator);

    const DenseMatrix sym_w = symmetric_part(p.w_operator);
    p.coercivity = generalized_min_eigenvalue(sym_w, space.v_metric_factor);
    if (!(p.coercivity > 0.0)) fail(ErrorKind::validation, "problem: operator is not coercive in the V metric");

    const auto sym_eigs = symmetric_eigenvalues(sym_w);
    p.euclid_min_eig = sym_eigs.front();
    const double compliance_lip = p.compliance.empty() ? 0.0 : p.compliance.lipschitz() * p.compliance.max_weight();

    if (is_symmetric(p.w_operator)) {
        // Symmetric operator plus diagonal monotone compliance: the step
        // 2 / (lambda_min + lambda_max + L_c) contracts with factor
        // (L - m) / (L + m).
        p.step_size = 2.0 / (sym_eigs.front() + sym_eigs.back() + compliance_lip);
    } else {
        const double lip = spectral_norm(p.w_operator) + compliance_lip;
        p.step_size = p.euclid_min_eig / (lip * lip);
    }
    p.metric_step_size = 2.0 / (space.v_metric_min_eig + space.v_metric_max_eig);

    p.stiffness = std::move(stiffness);
    p.space = std::move(space);
    return p;
}

HdviProblem build_rod_example(std::size_t n_elements, const TimeGrid& grid) {
    if (n_elements < 1) fail(ErrorKind::validation, "rod: n_elements must be at least 1");
    const std::size_t n = n_elements;
    const double h = 1.0 / static_cast<double>(n);

    // Piecewise-linear elements; the DOF at x = 0 is eliminated, so element j
    // spans DOFs j-1 and j and the strain is the divided difference.
    DenseMatrix d(n, n);
    d(0, 0) = 1.0 / h;
    for (std::size_t j = 1; j < n; ++j) {
        d(j, j) = 1.0 / h;
        d(j, j - 1) = -1.0 / h;
    }
    Vector w(n, h);

    DiscreteSpace space = make_space(std::move(d), std::move(w));

    // Unit end load: integrating a unit strain source telescopes to the value
    // at the free end.
    Vector f(n, 0.0);
    f[n - 1] = 1.0;

    ConstraintSet constraints;
    constraints.upper_bounds.push_back({n - 1, 1.0});

    return make_problem(std::move(space), DenseMatrix::identity(n), MatrixKernel::constant(DenseMatrix::identity(n)),
                        ComplianceLaw{}, std::move(constraints), LoadSampler::constant(std::move(f)), grid);
}

Vector rod_exact_solution(std::size_t n_elements, double t) {
    Vector u(n_elements);
    const double decay = std::exp(-t);
    for (std::size_t i = 0; i < n_elements; ++i)
        u[i] = (static_cast<double>(i + 1) / static_cast<double>(n_elements)) * decay;
    return u;
}

DerivedConstants derived_constants(const HdviProblem& p) {
    DerivedConstants d;
    d.memory_rate = p.kernel.sup_norm / p.coercivity;
    d.solution_lipschitz = std::exp(d.memory_rate * p.grid.t_end) / p.coercivity;
    if (p.kernel.sup_norm > 0.0) {
        d.contraction_window = p.coercivity / (2.0 * p.kernel.sup_norm);
        d.window_unbounded = false;
    } else {
        d.contraction_window = std::numeric_limits<double>::infinity();
        d.window_unbounded = true;
    }
    return d;
}

}  // namespace hdvi
