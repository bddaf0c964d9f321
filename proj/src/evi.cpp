#include "hdvi/evi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hdvi/kernels.hpp"

namespace hdvi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Sparse box bounds over a few DOFs; everything else is unconstrained.
struct BoxBounds {
    std::vector<std::size_t> dofs;
    std::vector<double> lower;
    std::vector<double> upper;

    void add(std::size_t dof, double lo, double hi) {
        dofs.push_back(dof);
        lower.push_back(lo);
        upper.push_back(hi);
    }

    void project(Vector& v) const {
        for (std::size_t k = 0; k < dofs.size(); ++k)
            v[dofs[k]] = std::clamp(v[dofs[k]], lower[k], upper[k]);
    }
};

BoxBounds bounds_from_constraints(const ConstraintSet& set) {
    BoxBounds b;
    for (const auto& c : set.upper_bounds) b.add(c.dof, -kInf, c.upper_bound);
    return b;
}

BoxBounds bounds_from_cone(const ConstraintSet& set, const CriticalCone& cone) {
    if (cone.tags.size() != set.upper_bounds.size())
        fail(ErrorKind::dimension_mismatch, "cone tags do not match the constraint list");
    BoxBounds b;
    for (std::size_t k = 0; k < cone.tags.size(); ++k) {
        switch (cone.tags[k]) {
            case ConeTag::free: break;
            case ConeTag::nonpositive: b.add(set.upper_bounds[k].dof, -kInf, 0.0); break;
            case ConeTag::zero: b.add(set.upper_bounds[k].dof, 0.0, 0.0); break;
        }
    }
    return b;
}

// One projected fixed-point sweep to convergence. `pointwise` adds the
// nonlinear (compliance-type) part of the operator into the residual buffer.
template <typename Pointwise>
EviResult projected_iteration(const DenseMatrix& op, Pointwise&& pointwise, const Vector& omega,
                              const BoxBounds& bounds, Vector z, double rho, double tol,
                              std::size_t max_iterations) {
    const std::size_t n = z.size();
    bounds.project(z);
    Vector r(n), next(n);

    // A contraction sets a new best residual every few iterations; a long
    // stretch without one means the iteration hit its floating-point floor.
    constexpr std::size_t kStallWindow = 2000;
    double best_residual = std::numeric_limits<double>::infinity();
    std::size_t best_iter = 0;

    for (std::size_t iter = 1; iter <= max_iterations; ++iter) {
        kernels::matvec(op, z, r);
        pointwise(z, r);
        kernels::step_update(next, z, r, omega, rho);
        bounds.project(next);

        double dist2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = next[i] - z[i];
            dist2 += d * d;
        }
        const double residual = std::sqrt(dist2) / rho;
        if (!std::isfinite(residual)) fail(ErrorKind::non_finite_iterate, "projected iteration produced a non-finite iterate");
        z.swap(next);
        if (residual <= tol) return EviResult{std::move(z), residual, iter, {}};
        if (residual < best_residual) {
            best_residual = residual;
            best_iter = iter;
        } else if (iter - best_iter > kStallWindow) {
            fail(ErrorKind::max_iterations, "projected iteration stalled at residual " + std::to_string(best_residual) +
                                                " above the requested tolerance");
        }
    }
    fail(ErrorKind::max_iterations, "projected iteration did not reach tolerance within the iteration cap");
}

}  // namespace

const char* cone_tag_name(ConeTag tag) {
    switch (tag) {
        case ConeTag::free: return "free";
        case ConeTag::nonpositive: return "nonpositive";
        case ConeTag::zero: return "zero";
    }
    return "?";
}

bool CriticalCone::all_free() const {
    return std::all_of(tags.begin(), tags.end(), [](ConeTag t) { return t == ConeTag::free; });
}

EviResult solve_evi(const HdviProblem& p, const Vector& omega, const Vector& z0, double tol,
                    std::size_t max_iterations) {
    if (omega.size() != p.space.n_dof || z0.size() != p.space.n_dof)
        fail(ErrorKind::dimension_mismatch, "solve_evi: vector sizes do not match n_dof");
    if (!all_finite(omega)) fail(ErrorKind::validation, "solve_evi: omega must be finite");

    EviResult res = projected_iteration(
        p.w_operator, [&](const Vector& z, Vector& r) { p.compliance.add_traction(z, r); }, omega,
        bounds_from_constraints(p.constraints), z0, p.step_size, tol, max_iterations);

    res.multiplier = p.apply_operator(res.solution);
    for (std::size_t i = 0; i < res.multiplier.size(); ++i) res.multiplier[i] = omega[i] - res.multiplier[i];
    return res;
}

double vi_residual(const HdviProblem& p, const Vector& z, const Vector& omega) {
    const double rho = p.step_size;
    Vector r = p.apply_operator(z);
    Vector stepped(z.size());
    kernels::step_update(stepped, z, r, omega, rho);
    stepped = project(p.constraints, std::move(stepped));
    double dist2 = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double d = stepped[i] - z[i];
        dist2 += d * d;
    }
    return std::sqrt(dist2) / rho;
}

CriticalCone critical_cone(const HdviProblem& p, const Vector& z, const Vector& zeta, double act_scale,
                           double mult_scale) {
    const double zeta_scale = 1.0 + max_abs(zeta);
    CriticalCone cone;
    cone.tags.reserve(p.constraints.upper_bounds.size());
    for (const auto& c : p.constraints.upper_bounds) {
        const double slack = c.upper_bound - z[c.dof];
        const double act_tol = act_scale * (1.0 + std::abs(c.upper_bound));
        const double mult_tol = mult_scale * zeta_scale;
        if (slack > act_tol) {
            cone.tags.push_back(ConeTag::free);
        } else if (zeta[c.dof] < -mult_tol) {
            fail(ErrorKind::inconsistent_multiplier,
                 "critical_cone: negative multiplier " + std::to_string(zeta[c.dof]) + " at active dof " +
                     std::to_string(c.dof));
        } else if (zeta[c.dof] <= mult_tol) {
            cone.tags.push_back(ConeTag::nonpositive);
        } else {
            cone.tags.push_back(ConeTag::zero);
        }
    }
    return cone;
}

EviResult solve_evi_derivative(const HdviProblem& p, const CriticalCone& cone, const Vector& base_z,
                               const Vector& delta_omega, double tol, const Vector* start,
                               std::size_t max_iterations) {
    if (delta_omega.size() != p.space.n_dof)
        fail(ErrorKind::dimension_mismatch, "solve_evi_derivative: vector sizes do not match n_dof");
    Vector z0 = start ? *start : Vector(p.space.n_dof, 0.0);
    return projected_iteration(
        p.w_operator, [&](const Vector& dz, Vector& r) { p.compliance.add_traction_derivative(base_z, dz, r); },
        delta_omega, bounds_from_cone(p.constraints, cone), std::move(z0), p.step_size, tol, max_iterations);
}

double derivative_residual(const HdviProblem& p, const CriticalCone& cone, const Vector& base_z,
                           const Vector& dz, const Vector& delta_omega) {
    const double rho = p.step_size;
    Vector r(dz.size());
    kernels::matvec(p.w_operator, dz, r);
    p.compliance.add_traction_derivative(base_z, dz, r);
    Vector stepped(dz.size());
    kernels::step_update(stepped, dz, r, delta_omega, rho);
    bounds_from_cone(p.constraints, cone).project(stepped);
    double dist2 = 0.0;
    for (std::size_t i = 0; i < dz.size(); ++i) {
        const double d = stepped[i] - dz[i];
        dist2 += d * d;
    }
    return std::sqrt(dist2) / rho;
}

Vector metric_cone_projection(const HdviProblem& p, const std::vector<std::size_t>& active_dofs,
                              const Vector& functional, double tol) {
    // min |d - G^{-1} f|_G over {d_i <= 0, i active} is the VI with operator
    // G and right-hand side f, the assembled functional itself.
    BoxBounds bounds;
    for (std::size_t dof : active_dofs) bounds.add(dof, -kInf, 0.0);
    Vector start(p.space.n_dof, 0.0);
    EviResult res = projected_iteration(
        p.space.v_metric, [](const Vector&, Vector&) {}, functional, bounds, std::move(start),
        p.metric_step_size, tol, EviOptions{}.max_iterations);
    return std::move(res.solution);
}

}  // namespace hdvi
