#include "hdvi/control.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "hdvi/kernels.hpp"
#include "hdvi/threading.hpp"

namespace hdvi {

Control Control::constant(const TimeGrid& grid, Vector value) {
    Control g;
    g.samples.assign(grid.node_count(), std::move(value));
    return g;
}

void ControlBounds::project(Control& g) const {
    for (auto& s : g.samples)
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::clamp(s[i], lower[i], upper[i]);
}

bool ControlBounds::feasible(const Control& g, double tol) const {
    for (const auto& s : g.samples)
        for (std::size_t i = 0; i < s.size(); ++i)
            if (s[i] < lower[i] - tol || s[i] > upper[i] + tol) return false;
    return true;
}

ControlMap rod_control_map(const HdviProblem& rod, bool body_columns, bool traction_column,
                           LoadSampler fixed_load) {
    const std::size_t n = rod.space.n_dof;
    const double h = 1.0 / static_cast<double>(n);
    std::size_t n_ctrl = (body_columns ? n : 0) + (traction_column ? 1 : 0);
    if (n_ctrl == 0) fail(ErrorKind::validation, "rod_control_map: at least one control column required");

    ControlMap map;
    map.assembly = DenseMatrix(n, n_ctrl);
    std::size_t col = 0;
    if (body_columns) {
        // lumped nodal masses, half weight at the free end
        for (std::size_t i = 0; i < n; ++i, ++col) map.assembly(i, col) = (i + 1 < n) ? h : 0.5 * h;
    }
    if (traction_column) {
        map.assembly(n - 1, col) = 1.0;
        ++col;
    }
    map.fixed_load = std::move(fixed_load);
    map.z_weights = Vector(n_ctrl, 1.0);
    return map;
}

LoadSampler control_to_load(const ControlMap& map, const Control& g, const TimeGrid& grid) {
    if (g.samples.size() != grid.node_count())
        fail(ErrorKind::dimension_mismatch, "control_to_load: one control sample per grid node required");
    if (g.dim() != map.assembly.cols)
        fail(ErrorKind::dimension_mismatch, "control_to_load: control dimension does not match the assembly");

    std::vector<double> times(grid.node_count());
    std::vector<Vector> values(grid.node_count());
    for (std::size_t n = 0; n < grid.node_count(); ++n) {
        times[n] = grid.node(n);
        Vector v(map.assembly.rows);
        kernels::matvec(map.assembly, g.samples[n], v);
        const Vector fixed = map.fixed_load.at(times[n]);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += fixed[i];
        values[n] = std::move(v);
    }
    return LoadSampler::table(std::move(times), std::move(values));
}

double control_h1_norm_sq(const Control& g, const Vector& z_weights, const TimeGrid& grid) {
    const double dt = grid.dt();
    const std::size_t m = grid.steps;
    double value = 0.0;
    for (std::size_t n = 0; n <= m; ++n) {
        const double w = (n == 0 || n == m) ? 0.5 * dt : dt;
        double sq = 0.0;
        for (std::size_t i = 0; i < g.samples[n].size(); ++i) sq += z_weights[i] * g.samples[n][i] * g.samples[n][i];
        value += w * sq;
    }
    for (std::size_t n = 0; n < m; ++n) {
        double sq = 0.0;
        for (std::size_t i = 0; i < g.samples[n].size(); ++i) {
            const double rate = (g.samples[n + 1][i] - g.samples[n][i]) / dt;
            sq += z_weights[i] * rate * rate;
        }
        value += dt * sq;
    }
    return value;
}

namespace {

double h1_inner(const Control& a, const Control& b, const Vector& zw, const TimeGrid& grid) {
    const double dt = grid.dt();
    const std::size_t m = grid.steps;
    double value = 0.0;
    for (std::size_t n = 0; n <= m; ++n) {
        const double w = (n == 0 || n == m) ? 0.5 * dt : dt;
        for (std::size_t i = 0; i < a.samples[n].size(); ++i) value += w * zw[i] * a.samples[n][i] * b.samples[n][i];
    }
    for (std::size_t n = 0; n < m; ++n)
        for (std::size_t i = 0; i < a.samples[n].size(); ++i) {
            const double ra = (a.samples[n + 1][i] - a.samples[n][i]) / dt;
            const double rb = (b.samples[n + 1][i] - b.samples[n][i]) / dt;
            value += dt * zw[i] * ra * rb;
        }
    return value;
}

struct CostEvaluation {
    CostReport report;
    Trajectory trajectory;
};

CostEvaluation evaluate_cost_full(const HdviProblem& p, const ControlMap& map, const Control& g,
                                  const CostOptions& opt) {
    if (!(opt.beta > 0.0)) fail(ErrorKind::validation, "cost: beta must be positive");
    if (opt.alpha < 0.0) fail(ErrorKind::validation, "cost: alpha must be nonnegative");
    if (opt.target.size() != p.space.n_dof) fail(ErrorKind::dimension_mismatch, "cost: target dimension mismatch");

    HdviProblem driven = p;
    driven.load = control_to_load(map, g, p.grid);
    ForwardOptions fopt;
    fopt.tolerance = opt.tolerance;
    fopt.rule = opt.rule;

    CostEvaluation ev;
    ev.trajectory = solve_forward(driven, fopt);

    const Vector diff = subtract(ev.trajectory.values.back(), opt.target);
    ev.report.tracking = opt.alpha * p.space.v_inner(diff, diff);
    ev.report.regularization = opt.beta * control_h1_norm_sq(g, map.z_weights, p.grid);
    ev.report.total = ev.report.tracking + ev.report.regularization;
    return ev;
}

LoadSampler control_direction_load(const ControlMap& map, const Control& dg, const TimeGrid& grid) {
    std::vector<double> times(grid.node_count());
    std::vector<Vector> values(grid.node_count());
    for (std::size_t n = 0; n < grid.node_count(); ++n) {
        times[n] = grid.node(n);
        Vector v(map.assembly.rows);
        kernels::matvec(map.assembly, dg.samples[n], v);
        values[n] = std::move(v);
    }
    return LoadSampler::table(std::move(times), std::move(values));
}

// basis index <-> (node, component)
struct Coord {
    std::size_t node;
    std::size_t comp;
};

}  // namespace

CostReport evaluate_cost(const HdviProblem& p, const ControlMap& map, const Control& g, const CostOptions& opt) {
    return evaluate_cost_full(p, map, g, opt).report;
}

double cost_directional_derivative(const HdviProblem& p, const ControlMap& map, const Control& g,
                                   const Control& dg, const CostOptions& opt) {
    const CostEvaluation ev = evaluate_cost_full(p, map, g, opt);
    double slope = 2.0 * opt.beta * h1_inner(g, dg, map.z_weights, p.grid);
    if (opt.alpha > 0.0) {
        SensitivityOptions sopt;
        sopt.tolerance = opt.tolerance;
        sopt.rule = opt.rule;
        HdviProblem driven = p;
        driven.load = control_to_load(map, g, p.grid);
        const auto response = solve_derivative(driven, ev.trajectory, control_direction_load(map, dg, p.grid), sopt);
        const Vector diff = subtract(ev.trajectory.values.back(), opt.target);
        slope += 2.0 * opt.alpha * p.space.v_inner(diff, response.values.back());
    }
    return slope;
}

MinimizeResult minimize(const HdviProblem& p, const ControlMap& map, Control g0, const MinimizeOptions& opt) {
    const std::size_t n_nodes = p.grid.node_count();
    const std::size_t n_ctrl = map.assembly.cols;
    const std::size_t dim = n_nodes * n_ctrl;
    if (g0.samples.size() != n_nodes) fail(ErrorKind::dimension_mismatch, "minimize: g0 does not match the grid");
    if (opt.bounds && !opt.bounds->feasible(g0)) fail(ErrorKind::validation, "minimize: g0 is infeasible");

    std::vector<Coord> coords(dim);
    for (std::size_t n = 0, k = 0; n < n_nodes; ++n)
        for (std::size_t c = 0; c < n_ctrl; ++c, ++k) coords[k] = {n, c};

    auto as_control = [&](const std::vector<double>& flat) {
        Control c;
        c.samples.assign(n_nodes, Vector(n_ctrl, 0.0));
        for (std::size_t k = 0; k < dim; ++k) c.samples[coords[k].node][coords[k].comp] = flat[k];
        return c;
    };

    SensitivityOptions sopt;
    sopt.tolerance = opt.cost.tolerance;
    sopt.rule = opt.cost.rule;

    MinimizeResult result;
    result.control = std::move(g0);
    CostEvaluation ev = evaluate_cost_full(p, map, result.control, opt.cost);
    result.history.push_back(ev.report);

    for (std::size_t iter = 0; iter < opt.max_iterations; ++iter) {
        const Control& g = result.control;

        HdviProblem driven = p;
        driven.load = control_to_load(map, g, p.grid);
        const auto cones = trajectory_cones(driven, ev.trajectory, sopt);
        bool linear = true;
        for (const auto& cone : cones)
            for (const auto tag : cone.tags)
                if (tag == ConeTag::nonpositive) linear = false;

        const Vector end_diff = subtract(ev.trajectory.values.back(), opt.cost.target);

        // Directional derivative of the tracking term along every canonical
        // basis direction; the end-state responses double as Gauss-Newton
        // Jacobian columns. With no weakly active node the response map is
        // linear and the opposite directions come for free.
        std::vector<Vector> jac(dim);            // response end states
        std::vector<double> grad(dim, 0.0);      // full cost gradient entries
        std::vector<double> slope_minus(dim, 0.0);
        const int nt = max_threads();
        if (opt.cost.alpha > 0.0) {
            ExceptionCollector errors;
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(dynamic)
            for (std::int64_t k = 0; k < static_cast<std::int64_t>(dim); ++k) {
                errors.run([&, k] {
                    std::vector<double> flat(dim, 0.0);
                    flat[static_cast<std::size_t>(k)] = 1.0;
                    const Control e = as_control(flat);
                    const auto resp = solve_derivative(driven, ev.trajectory, control_direction_load(map, e, p.grid),
                                                       cones, sopt);
                    jac[static_cast<std::size_t>(k)] = resp.values.back();
                    if (!linear) {
                        flat[static_cast<std::size_t>(k)] = -1.0;
                        const auto respm = solve_derivative(driven, ev.trajectory,
                                                            control_direction_load(map, as_control(flat), p.grid),
                                                            cones, sopt);
                        slope_minus[static_cast<std::size_t>(k)] =
                            2.0 * opt.cost.alpha * p.space.v_inner(end_diff, respm.values.back());
                    }
                });
            }
            errors.rethrow_if_any();
        } else {
            for (auto& col : jac) col = Vector(p.space.n_dof, 0.0);
        }

        for (std::size_t k = 0; k < dim; ++k) {
            std::vector<double> flat(dim, 0.0);
            flat[k] = 1.0;
            const Control e = as_control(flat);
            const double reg_slope = 2.0 * opt.cost.beta * h1_inner(g, e, map.z_weights, p.grid);
            const double track_slope = 2.0 * opt.cost.alpha * p.space.v_inner(end_diff, jac[k]);
            grad[k] = track_slope + reg_slope;
            if (linear) slope_minus[k] = -track_slope;
            slope_minus[k] -= reg_slope;
        }

        // stationarity: the best descent slope over the feasible +/- basis probes
        double worst = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
            const double x = g.samples[coords[k].node][coords[k].comp];
            const bool up_ok = !opt.bounds || x < opt.bounds->upper[coords[k].comp] - 1e-14;
            const bool down_ok = !opt.bounds || x > opt.bounds->lower[coords[k].comp] + 1e-14;
            if (up_ok) worst = std::min(worst, grad[k]);
            if (down_ok) worst = std::min(worst, slope_minus[k]);
        }
        result.worst_probe_slope = worst;
        if (worst >= -opt.stationarity_tol) {
            result.converged = true;
            return result;
        }

        // Gauss-Newton model: 2 alpha J^T G J + 2 beta H1, solved for -grad.
        DenseMatrix h(dim, dim);
        if (opt.cost.alpha > 0.0) {
            std::vector<Vector> gj(dim, Vector(p.space.n_dof));
            for (std::size_t k = 0; k < dim; ++k) kernels::matvec(p.space.v_metric, jac[k], gj[k]);
            for (std::size_t a = 0; a < dim; ++a)
                for (std::size_t b = a; b < dim; ++b) {
                    const double v = 2.0 * opt.cost.alpha * dot(jac[a], gj[b]);
                    h(a, b) += v;
                    if (b != a) h(b, a) += v;
                }
        }
        for (std::size_t a = 0; a < dim; ++a) {
            std::vector<double> ea(dim, 0.0);
            ea[a] = 1.0;
            const Control ca = as_control(ea);
            for (std::size_t b = a; b < dim; ++b) {
                std::vector<double> eb(dim, 0.0);
                eb[b] = 1.0;
                const double v = 2.0 * opt.cost.beta * h1_inner(ca, as_control(eb), map.z_weights, p.grid);
                h(a, b) += v;
                if (b != a) h(b, a) += v;
            }
        }

        Vector neg_grad(dim);
        for (std::size_t k = 0; k < dim; ++k) neg_grad[k] = -grad[k];
        Vector newton = spd_solve(h, neg_grad);

        // Armijo backtracking with projection after each trial step; the
        // Gauss-Newton direction can die against the bounds, in which case
        // the projected steepest-descent arc still makes progress.
        bool accepted = false;
        std::vector<Vector> candidates;
        if (dot(grad, newton) < 0.0) candidates.push_back(std::move(newton));
        candidates.push_back(std::move(neg_grad));
        for (const Vector& direction : candidates) {
            double step = 1.0;
            for (std::size_t halving = 0; halving <= opt.max_halvings; ++halving, step *= 0.5) {
                Control trial = g;
                for (std::size_t k = 0; k < dim; ++k)
                    trial.samples[coords[k].node][coords[k].comp] += step * direction[k];
                if (opt.bounds) opt.bounds->project(trial);

                double predicted = 0.0;
                for (std::size_t k = 0; k < dim; ++k)
                    predicted += grad[k] * (trial.samples[coords[k].node][coords[k].comp] -
                                            g.samples[coords[k].node][coords[k].comp]);
                if (!(predicted < 0.0)) continue;

                CostEvaluation trial_ev = evaluate_cost_full(p, map, trial, opt.cost);
                if (trial_ev.report.total <= ev.report.total + opt.armijo_slope_fraction * predicted) {
                    result.control = std::move(trial);
                    ev = std::move(trial_ev);
                    result.history.push_back(ev.report);
                    result.step_lengths.push_back(step);
                    accepted = true;
                    break;
                }
            }
            if (accepted) break;
        }
        if (!accepted)
            fail(ErrorKind::line_search_failed,
                 "minimize: no Armijo step after " + std::to_string(opt.max_halvings) + " halvings");
    }

    result.converged = false;  // iteration cap; best iterate is returned
    return result;
}

}  // namespace hdvi
