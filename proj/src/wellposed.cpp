#include "hdvi/wellposed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "hdvi/threading.hpp"

namespace hdvi {

double q_residual(const HdviProblem& p, const Trajectory& u, double tol, QuadratureRule rule) {
    const Trajectory mapped = apply_fixed_point_map(p, u, tol, rule);
    return trajectory_distance(p.space, u, mapped);
}

std::optional<double> p_residual(const HdviProblem& p, const Trajectory& u, double tol, QuadratureRule rule,
                                 double act_scale) {
    const std::size_t n_nodes = p.grid.node_count();
    if (u.values.size() != n_nodes) fail(ErrorKind::dimension_mismatch, "p_residual: trajectory does not match the grid");

    for (const auto& v : u.values)
        for (const auto& c : p.constraints.upper_bounds)
            if (v[c.dof] > c.upper_bound + act_scale * (1.0 + std::abs(c.upper_bound))) return std::nullopt;

    std::vector<Vector> strains(n_nodes);
    for (std::size_t n = 0; n < n_nodes; ++n) strains[n] = p.space.strain(u.values[n]);

    std::vector<double> slack(n_nodes, 0.0);
    const int nt = max_threads();
    ExceptionCollector errors;
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(dynamic)
    for (std::int64_t ni = 0; ni < static_cast<std::int64_t>(n_nodes); ++ni) {
        errors.run([&, ni] {
            const std::size_t n = static_cast<std::size_t>(ni);
            // residual functional f - (W+P)u - memory, assembled
            Vector r = p.apply_operator(u.values[n]);
            const Vector f_n = p.load_at(p.grid.node(n));
            for (std::size_t i = 0; i < r.size(); ++i) r[i] = f_n[i] - r[i];
            if (n > 0 && !p.kernel.op.is_zero()) {
                const Vector mem = memory_integral(p.kernel.op, strains, p.grid, n, rule);
                const Vector dual = p.space.strain_adjoint(mem);
                for (std::size_t i = 0; i < r.size(); ++i) r[i] -= dual[i];
            }

            // cone of feasible directions at u(t): bounded DOFs at their bound
            std::vector<std::size_t> active;
            for (const auto& c : p.constraints.upper_bounds)
                if (c.upper_bound - u.values[n][c.dof] <= act_scale * (1.0 + std::abs(c.upper_bound)))
                    active.push_back(c.dof);

            const Vector projected = metric_cone_projection(p, active, r, tol);
            slack[n] = p.space.v_norm(projected);
        });
    }
    errors.rethrow_if_any();
    return *std::max_element(slack.begin(), slack.end());
}

SequenceDiagnostic verify_t4_bound(const HdviProblem& p, const std::vector<Trajectory>& members,
                                   const WellposedOptions& opt) {
    const DerivedConstants constants = derived_constants(p);

    SequenceDiagnostic diag;
    diag.p_bound_constant = constants.solution_lipschitz;

    // Factorial tail of the fixed-point map powers: the first power p with
    // (cT)^p / p! <= 1/2 makes the map a contraction, giving the computable
    // stability constant (sum of the earlier power constants) / (1 - tail).
    // The discrete trapezoid map carries a dt/2 self-term, absorbed by a
    // first-order inflation of the rate.
    {
        const double rate = constants.memory_rate * (1.0 + 0.5 * constants.memory_rate * p.grid.dt());
        const double ct = rate * p.grid.t_end;
        double power_term = 1.0;  // (cT)^k / k! at k = 0
        double partial = 0.0;
        for (int k = 0; k < 1000; ++k) {
            if (power_term <= 0.5) break;
            partial += power_term;
            power_term *= ct / static_cast<double>(k + 1);
        }
        if (!(power_term <= 0.5))
            fail(ErrorKind::validation, "verify_t4_bound: memory rate too large for the fixed-point tail constant");
        diag.q_bound_constant = partial == 0.0 ? 1.0 : partial / (1.0 - power_term);
        if (diag.q_bound_constant < 1.0) diag.q_bound_constant = 1.0;
    }

    ForwardOptions fopt;
    fopt.tolerance = opt.tolerance;
    fopt.rule = opt.rule;
    const Trajectory reference = solve_forward(p, fopt);

    diag.members.assign(members.size(), MemberDiagnostic{});
    const int nt = max_threads();
    ExceptionCollector errors;
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(dynamic)
    for (std::int64_t mi = 0; mi < static_cast<std::int64_t>(members.size()); ++mi) {
        errors.run([&, mi] {
            const std::size_t m = static_cast<std::size_t>(mi);
            MemberDiagnostic& d = diag.members[m];
            d.p_residual = p_residual(p, members[m], opt.tolerance, opt.rule, opt.act_scale);
            d.feasible = d.p_residual.has_value();
            d.q_residual = q_residual(p, members[m], opt.tolerance, opt.rule);
            d.v_distance = trajectory_distance(p.space, members[m], reference);
        });
    }
    errors.rethrow_if_any();

    for (std::size_t m = 0; m < diag.members.size(); ++m) {
        const MemberDiagnostic& d = diag.members[m];
        if (d.feasible && d.v_distance > diag.p_bound_constant * (*d.p_residual) + opt.slack)
            fail(ErrorKind::bound_violated,
                 "member " + std::to_string(m) + ": distance " + std::to_string(d.v_distance) +
                     " exceeds the inequality-slack bound " +
                     std::to_string(diag.p_bound_constant * (*d.p_residual)));
        if (d.v_distance > diag.q_bound_constant * d.q_residual + opt.slack)
            fail(ErrorKind::bound_violated,
                 "member " + std::to_string(m) + ": distance " + std::to_string(d.v_distance) +
                     " exceeds the fixed-point-slack bound " + std::to_string(diag.q_bound_constant * d.q_residual));
    }
    return diag;
}

}  // namespace hdvi
