#include "hdvi/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "hdvi/threading.hpp"

namespace hdvi {

namespace {

Vector memory_dual(const HdviProblem& p, std::span<const Vector> strains, std::size_t n, QuadratureRule rule) {
    Vector out(p.space.n_dof, 0.0);
    if (n == 0 || p.kernel.op.is_zero()) return out;
    const Vector mem = memory_integral(p.kernel.op, strains, p.grid, n, rule);
    return p.space.strain_adjoint(mem);
}

}  // namespace

std::vector<CriticalCone> trajectory_cones(const HdviProblem& p, const Trajectory& base,
                                           const SensitivityOptions& opt) {
    const std::size_t n_nodes = p.grid.node_count();
    if (base.values.size() != n_nodes)
        fail(ErrorKind::dimension_mismatch, "trajectory_cones: base trajectory does not match the grid");

    std::vector<Vector> base_strains(n_nodes);
    for (std::size_t n = 0; n < n_nodes; ++n) base_strains[n] = p.space.strain(base.values[n]);

    std::vector<CriticalCone> cones;
    cones.reserve(n_nodes);
    for (std::size_t n = 0; n < n_nodes; ++n) {
        const Vector mem = memory_dual(p, base_strains, n, opt.rule);
        Vector zeta = p.apply_operator(base.values[n]);
        const Vector f_n = p.load_at(p.grid.node(n));
        for (std::size_t i = 0; i < zeta.size(); ++i) zeta[i] = f_n[i] - mem[i] - zeta[i];
        cones.push_back(critical_cone(p, base.values[n], zeta, opt.act_scale, opt.mult_scale));
    }
    return cones;
}

DerivativeTrajectory solve_derivative(const HdviProblem& p, const Trajectory& base, const LoadSampler& direction,
                                      const SensitivityOptions& opt) {
    return solve_derivative(p, base, direction, trajectory_cones(p, base, opt), opt);
}

DerivativeTrajectory solve_derivative(const HdviProblem& p, const Trajectory& base, const LoadSampler& direction,
                                      std::vector<CriticalCone> cones, const SensitivityOptions& opt) {
    const std::size_t n_nodes = p.grid.node_count();
    if (base.values.size() != n_nodes)
        fail(ErrorKind::dimension_mismatch, "solve_derivative: base trajectory does not match the grid");
    if (direction.dim() != p.space.n_dof)
        fail(ErrorKind::dimension_mismatch, "solve_derivative: direction dimension does not match n_dof");
    if (cones.size() != n_nodes) fail(ErrorKind::dimension_mismatch, "solve_derivative: one cone per node required");
    if (opt.rule == QuadratureRule::trapezoid) {
        const double factor = 0.5 * p.grid.dt() * p.kernel.norm_at_zero / p.coercivity;
        if (factor >= 1.0)
            fail(ErrorKind::step_contraction,
                 "solve_derivative: self-term factor " + std::to_string(factor) + " is not below 1");
    }

    DerivativeTrajectory out;
    out.grid = p.grid;
    out.values.reserve(n_nodes);
    out.cones = std::move(cones);
    out.meta.reserve(n_nodes);

    const double evi_tol = opt.tolerance * 0.5;
    const double inner_evi_tol = opt.tolerance * 0.1;
    const double inner_tol = opt.tolerance * 1e-2;
    const double self_factor = 0.5 * p.grid.dt() * p.kernel.norm_at_zero / p.coercivity;
    const double stall_ratio = std::min(0.95, std::max(0.5, 2.0 * self_factor));

    std::vector<Vector> strains(n_nodes);
    Vector guess(p.space.n_dof, 0.0);

    for (std::size_t n = 0; n < n_nodes; ++n) {
        const Vector df_n = direction.at(p.grid.node(n));
        if (!all_finite(df_n)) fail(ErrorKind::validation, "solve_derivative: direction is not finite at a grid node");
        NodeMeta meta;

        const bool self_coupled = (opt.rule == QuadratureRule::trapezoid) && n > 0 && !p.kernel.op.is_zero();
        if (!self_coupled) {
            Vector dh = df_n;
            const Vector mem = memory_dual(p, {strains.data(), n}, n, opt.rule);
            for (std::size_t i = 0; i < dh.size(); ++i) dh[i] -= mem[i];
            EviResult res = solve_evi_derivative(p, out.cones[n], base.values[n], dh, evi_tol, &guess);
            meta.evi_iterations = res.iterations;
            meta.vi_residual = res.residual;
            meta.inner_iterations = 1;
            guess = std::move(res.solution);
        } else {
            std::size_t inner = 0;
            double prev_change = std::numeric_limits<double>::infinity();
            while (true) {
                ++inner;
                strains[n] = p.space.strain(guess);
                Vector dh = df_n;
                const Vector mem = memory_dual(p, {strains.data(), n + 1}, n, opt.rule);
                for (std::size_t i = 0; i < dh.size(); ++i) dh[i] -= mem[i];
                EviResult res = solve_evi_derivative(p, out.cones[n], base.values[n], dh, inner_evi_tol, &guess);
                meta.evi_iterations += res.iterations;
                meta.vi_residual = res.residual;
                const double change = p.space.v_norm(subtract(res.solution, guess));
                guess = std::move(res.solution);
                if (change <= inner_tol) break;
                if (change > stall_ratio * prev_change && change * self_factor <= 0.2 * opt.tolerance) break;
                prev_change = change;
                if (inner >= opt.max_inner_iterations)
                    fail(ErrorKind::max_iterations, "solve_derivative: self-term loop exceeded its iteration cap");
            }
            meta.inner_iterations = inner;
        }

        strains[n] = p.space.strain(guess);
        out.values.push_back(guess);
        out.meta.push_back(meta);
    }
    return out;
}

double lp_time_norm(const std::vector<double>& node_norms, const TimeGrid& grid, double exponent) {
    if (node_norms.size() != grid.node_count())
        fail(ErrorKind::dimension_mismatch, "lp_time_norm: node count does not match the grid");
    if (!(exponent > 1.0)) fail(ErrorKind::validation, "lp_time_norm: exponent must exceed 1");
    double acc = 0.0;
    for (std::size_t n = 0; n < grid.steps; ++n) acc += grid.dt() * std::pow(node_norms[n], exponent);
    return std::pow(acc, 1.0 / exponent);
}

namespace {

double quotient_error(const HdviProblem& p, const Trajectory& base, const DerivativeTrajectory& response,
                      const LoadSampler& probe_direction, double tau, double exponent,
                      const SensitivityOptions& opt) {
    HdviProblem perturbed = p;
    perturbed.load = combine_loads(p.load, tau, probe_direction);
    ForwardOptions fopt;
    fopt.tolerance = opt.tolerance;
    fopt.rule = opt.rule;
    const Trajectory shifted = solve_forward(perturbed, fopt);

    std::vector<double> node_err(p.grid.node_count());
    for (std::size_t n = 0; n < node_err.size(); ++n) {
        Vector diff(p.space.n_dof);
        for (std::size_t i = 0; i < diff.size(); ++i)
            diff[i] = (shifted.values[n][i] - base.values[n][i]) / tau - response.values[n][i];
        node_err[n] = p.space.v_norm(diff);
    }
    return lp_time_norm(node_err, p.grid, exponent);
}

}  // namespace

FdReport fd_validate(const HdviProblem& p, const LoadSampler& direction, const std::vector<double>& taus,
                     double exponent, const SensitivityOptions& opt) {
    if (taus.empty()) fail(ErrorKind::validation, "fd_validate: taus must be nonempty");
    for (std::size_t k = 0; k < taus.size(); ++k) {
        if (!(taus[k] > 0.0)) fail(ErrorKind::validation, "fd_validate: taus must be positive");
        if (k > 0 && !(taus[k] < taus[k - 1])) fail(ErrorKind::validation, "fd_validate: taus must be strictly decreasing");
    }

    ForwardOptions fopt;
    fopt.tolerance = opt.tolerance;
    fopt.rule = opt.rule;
    const Trajectory base = solve_forward(p, fopt);
    const DerivativeTrajectory response = solve_derivative(p, base, direction, opt);

    FdReport report;
    report.taus = taus;
    report.errors.assign(taus.size(), 0.0);

    const int nt = max_threads();
    ExceptionCollector errors;
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(dynamic)
    for (std::int64_t k = 0; k < static_cast<std::int64_t>(taus.size()); ++k) {
        errors.run([&, k] {
            report.errors[static_cast<std::size_t>(k)] =
                quotient_error(p, base, response, direction, taus[static_cast<std::size_t>(k)], exponent, opt);
        });
    }
    errors.rethrow_if_any();
    return report;
}

FdReport hadamard_probe(const HdviProblem& p, const LoadSampler& direction,
                        const std::vector<LoadSampler>& perturbed, const std::vector<double>& taus,
                        double exponent, const SensitivityOptions& opt) {
    if (perturbed.size() != taus.size())
        fail(ErrorKind::validation, "hadamard_probe: need one perturbed direction per tau");
    for (std::size_t k = 0; k < taus.size(); ++k)
        if (!(taus[k] > 0.0)) fail(ErrorKind::validation, "hadamard_probe: taus must be positive");

    ForwardOptions fopt;
    fopt.tolerance = opt.tolerance;
    fopt.rule = opt.rule;
    const Trajectory base = solve_forward(p, fopt);
    const DerivativeTrajectory response = solve_derivative(p, base, direction, opt);

    FdReport report;
    report.taus = taus;
    report.errors.assign(taus.size(), 0.0);

    const int nt = max_threads();
    ExceptionCollector errors;
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(dynamic)
    for (std::int64_t k = 0; k < static_cast<std::int64_t>(taus.size()); ++k) {
        errors.run([&, k] {
            report.errors[static_cast<std::size_t>(k)] =
                quotient_error(p, base, response, perturbed[static_cast<std::size_t>(k)],
                               taus[static_cast<std::size_t>(k)], exponent, opt);
        });
    }
    errors.rethrow_if_any();
    return report;
}

}  // namespace hdvi
