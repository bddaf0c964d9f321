#include "hdvi/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hdvi/control.hpp"
#include "hdvi/kernels.hpp"
#include "hdvi/sensitivity.hpp"
#include "hdvi/threading.hpp"
#include "hdvi/wellposed.hpp"

namespace hdvi {

using nlohmann::json;

std::string format_number(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

namespace {

class CsvWriter {
  public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path, std::ios::binary) {
        if (!out_) fail(ErrorKind::validation, "cannot open output file " + path.string());
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) out_ << ',';
            out_ << header[i];
        }
        out_ << '\n';
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

  private:
    std::ofstream out_;
};

std::vector<std::string> dof_header(const std::string& stem, std::size_t n) {
    std::vector<std::string> h;
    for (std::size_t i = 0; i < n; ++i) h.push_back(stem + std::to_string(i));
    return h;
}

void write_trajectory_csv(const std::filesystem::path& path, const TimeGrid& grid,
                          const std::vector<Vector>& values, const std::string& stem) {
    std::vector<std::string> header{"t"};
    for (const auto& c : dof_header(stem, values.front().size())) header.push_back(c);
    CsvWriter csv(path, header);
    for (std::size_t n = 0; n < values.size(); ++n) {
        std::vector<std::string> cells{format_number(grid.node(n))};
        for (double x : values[n]) cells.push_back(format_number(x));
        csv.row(cells);
    }
}

json trajectory_meta_json(const HdviProblem& p, const Trajectory& u) {
    json meta;
    double max_res = 0.0;
    std::size_t evi = 0, inner = 0;
    for (const auto& m : u.meta) {
        max_res = std::max(max_res, m.vi_residual);
        evi += m.evi_iterations;
        inner += m.inner_iterations;
    }
    meta["max_node_residual"] = max_res;
    meta["total_elliptic_iterations"] = evi;
    meta["total_inner_iterations"] = inner;
    meta["nodes"] = u.values.size();
    meta["derived_constants"] = derived_constants_json(p);
    return meta;
}

LoadSampler sensitivity_direction(const Scenario& scenario, const HdviProblem& p) {
    const json& dir = scenario.doc.at("sensitivity").at("direction");
    const std::string kind = dir.at("kind").get<std::string>();
    if (kind == "scaled_load") {
        const double factor = dir.at("factor").get<double>();
        const LoadSampler base = p.load;
        return LoadSampler::function(p.space.n_dof, [base, factor](double t) {
            Vector f = base.at(t);
            for (auto& x : f) x *= factor;
            return f;
        });
    }
    if (kind == "constant") {
        Vector v = dir.at("vector").get<Vector>();
        if (v.size() != p.space.n_dof) fail(ErrorKind::validation, "sensitivity.direction.vector: wrong length");
        return LoadSampler::constant(std::move(v));
    }
    std::vector<double> times = dir.at("times_seconds").get<std::vector<double>>();
    std::vector<Vector> values;
    for (const auto& v : dir.at("vectors")) values.push_back(v.get<Vector>());
    return LoadSampler::table(std::move(times), std::move(values));
}

void run_forward_mode(const HdviProblem& p, const Scenario& scenario, const std::filesystem::path& out,
                      double tol, QuadratureRule rule, json& manifest) {
    ForwardOptions opt;
    opt.tolerance = tol;
    opt.rule = rule;
    const Trajectory u = solve_forward(p, opt);
    const EquivalenceReport eq = equivalence_check(p, u, tol, rule);

    write_trajectory_csv(out / "trajectory.csv", p.grid, u.values, "dof_");
    json meta = trajectory_meta_json(p, u);
    meta["max_vi_residual"] = eq.max_vi_residual;
    meta["max_fixed_point_residual"] = eq.max_fixed_point_residual;
    std::ofstream(out / "trajectory_meta.json") << meta.dump(2) << "\n";

    manifest["outputs"].push_back("trajectory.csv");
    manifest["outputs"].push_back("trajectory_meta.json");
    manifest["metrics"]["max_vi_residual"] = eq.max_vi_residual;
    manifest["metrics"]["max_fixed_point_residual"] = eq.max_fixed_point_residual;
    manifest["metrics"]["end_state_v_norm"] = p.space.v_norm(u.values.back());

    if (scenario.doc.at("mode").get<std::string>() == "rod_regression") {
        const std::size_t n_el = scenario.doc.at("problem").at("n_elements").get<std::size_t>();
        double sup = 0.0;
        for (std::size_t n = 0; n < u.values.size(); ++n) {
            const Vector exact = rod_exact_solution(n_el, p.grid.node(n));
            for (std::size_t i = 0; i < exact.size(); ++i) sup = std::max(sup, std::abs(u.values[n][i] - exact[i]));
        }
        manifest["metrics"]["sup_error_vs_closed_form"] = sup;
    }
}

void run_picard_mode(const HdviProblem& p, const std::filesystem::path& out, double tol, QuadratureRule rule,
                     json& manifest) {
    const PicardResult res = solve_picard(p, Trajectory::zero(p.grid, p.space.n_dof), tol, 500, rule);

    write_trajectory_csv(out / "trajectory.csv", p.grid, res.trajectory.values, "dof_");
    {
        CsvWriter csv(out / "sweep_history.csv", {"sweep", "change"});
        for (std::size_t k = 0; k < res.sweep_changes.size(); ++k)
            csv.row({std::to_string(k + 1), format_number(res.sweep_changes[k])});
    }
    std::ofstream(out / "trajectory_meta.json") << trajectory_meta_json(p, res.trajectory).dump(2) << "\n";

    manifest["outputs"].push_back("trajectory.csv");
    manifest["outputs"].push_back("sweep_history.csv");
    manifest["outputs"].push_back("trajectory_meta.json");
    manifest["metrics"]["applications"] = res.applications;
    manifest["metrics"]["converged_after"] = res.converged_after;
    manifest["metrics"]["final_change"] = res.sweep_changes.back();
}

void run_sensitivity_mode(const HdviProblem& p, const Scenario& scenario, const std::filesystem::path& out,
                          double tol, QuadratureRule rule, json& manifest) {
    const json& block = scenario.doc.at("sensitivity");
    const std::vector<double> taus = block.at("taus").get<std::vector<double>>();
    const double exponent = block.contains("norm_exponent") ? block.at("norm_exponent").get<double>() : 2.0;

    SensitivityOptions opt;
    opt.tolerance = tol;
    opt.rule = rule;
    opt.act_scale = scenario_active_scale(scenario);
    opt.mult_scale = scenario_multiplier_scale(scenario);

    ForwardOptions fopt;
    fopt.tolerance = tol;
    fopt.rule = rule;
    const Trajectory base = solve_forward(p, fopt);
    const LoadSampler direction = sensitivity_direction(scenario, p);
    const DerivativeTrajectory response = solve_derivative(p, base, direction, opt);
    const FdReport fd = fd_validate(p, direction, taus, exponent, opt);

    // diagonal probe: direction offset decaying cubically in tau
    std::vector<LoadSampler> perturbed;
    double offset_scale = 1.0;
    if (block.contains("probe") && block.at("probe").contains("offset_scale"))
        offset_scale = block.at("probe").at("offset_scale").get<double>();
    Vector offset(p.space.n_dof, 0.0);
    offset[p.space.n_dof / 2] = offset_scale;
    for (double tau : taus)
        perturbed.push_back(combine_loads(direction, tau * tau * tau, LoadSampler::constant(offset)));
    const FdReport diag = hadamard_probe(p, direction, perturbed, taus, exponent, opt);

    {
        std::vector<std::string> header{"t"};
        for (const auto& c : dof_header("du_", p.space.n_dof)) header.push_back(c);
        for (std::size_t k = 0; k < p.constraints.upper_bounds.size(); ++k)
            header.push_back("cone_dof" + std::to_string(p.constraints.upper_bounds[k].dof));
        CsvWriter csv(out / "derivative.csv", header);
        for (std::size_t n = 0; n < response.values.size(); ++n) {
            std::vector<std::string> cells{format_number(p.grid.node(n))};
            for (double x : response.values[n]) cells.push_back(format_number(x));
            for (const auto tag : response.cones[n].tags) cells.push_back(cone_tag_name(tag));
            csv.row(cells);
        }
    }
    {
        CsvWriter csv(out / "fd_errors.csv", {"tau", "quotient_error", "diagonal_error"});
        for (std::size_t k = 0; k < taus.size(); ++k)
            csv.row({format_number(taus[k]), format_number(fd.errors[k]), format_number(diag.errors[k])});
    }

    manifest["outputs"].push_back("derivative.csv");
    manifest["outputs"].push_back("fd_errors.csv");
    manifest["metrics"]["fd_first_error"] = fd.errors.front();
    manifest["metrics"]["fd_final_error"] = fd.errors.back();
    manifest["metrics"]["diagonal_final_error"] = diag.errors.back();
}

void run_control_mode(const HdviProblem& p, const Scenario& scenario, const std::filesystem::path& out,
                      double tol, QuadratureRule rule, json& manifest) {
    const json& block = scenario.doc.at("control");

    const bool body = block.at("map").at("body").get<bool>();
    const bool traction = block.at("map").at("traction").get<bool>();
    ControlMap map = rod_control_map(p, body, traction, LoadSampler::constant(Vector(p.space.n_dof, 0.0)));

    MinimizeOptions opt;
    opt.cost.alpha = block.at("alpha").get<double>();
    opt.cost.beta = block.at("beta").get<double>();
    opt.cost.tolerance = tol;
    opt.cost.rule = rule;
    if (block.contains("stationarity_tol")) opt.stationarity_tol = block.at("stationarity_tol").get<double>();
    if (block.contains("max_iterations")) opt.max_iterations = block.at("max_iterations").get<std::size_t>();

    const json& target = block.at("target");
    if (target.at("kind").get<std::string>() == "vector") {
        opt.cost.target = target.at("values").get<Vector>();
        if (opt.cost.target.size() != p.space.n_dof)
            fail(ErrorKind::validation, "control.target.values: wrong length");
    } else {
        const double value = target.at("value").get<double>();
        const Control generator = Control::constant(p.grid, Vector(map.assembly.cols, value));
        HdviProblem driven = p;
        driven.load = control_to_load(map, generator, p.grid);
        ForwardOptions fopt;
        fopt.tolerance = tol;
        fopt.rule = rule;
        opt.cost.target = solve_forward(driven, fopt).values.back();
    }

    if (block.contains("bounds")) {
        ControlBounds bounds;
        bounds.lower = block.at("bounds").at("lower").get<Vector>();
        bounds.upper = block.at("bounds").at("upper").get<Vector>();
        if (bounds.lower.size() != map.assembly.cols || bounds.upper.size() != map.assembly.cols)
            fail(ErrorKind::validation, "control.bounds: wrong length");
        opt.bounds = std::move(bounds);
    }

    double initial = 0.0;
    if (block.contains("initial")) initial = block.at("initial").get<double>();
    const MinimizeResult res =
        minimize(p, map, Control::constant(p.grid, Vector(map.assembly.cols, initial)), opt);

    {
        CsvWriter csv(out / "optimizer_history.csv", {"iter", "tracking", "regularization", "total", "step_length"});
        for (std::size_t k = 0; k < res.history.size(); ++k)
            csv.row({std::to_string(k), format_number(res.history[k].tracking),
                     format_number(res.history[k].regularization), format_number(res.history[k].total),
                     format_number(k == 0 ? 0.0 : res.step_lengths[k - 1])});
    }
    write_trajectory_csv(out / "control.csv", p.grid, res.control.samples, "g_");

    manifest["outputs"].push_back("optimizer_history.csv");
    manifest["outputs"].push_back("control.csv");
    manifest["metrics"]["initial_total"] = res.history.front().total;
    manifest["metrics"]["final_total"] = res.history.back().total;
    manifest["metrics"]["iterations"] = res.history.size() - 1;
    manifest["metrics"]["converged"] = res.converged;
    manifest["metrics"]["worst_probe_slope"] = res.worst_probe_slope;
}

void run_wellposed_mode(const HdviProblem& p, const Scenario& scenario, const std::filesystem::path& out,
                        double tol, QuadratureRule rule, json& manifest) {
    const json& block = scenario.doc.at("wellposed");
    const std::string recipe = block.at("recipe").get<std::string>();

    ForwardOptions fopt;
    fopt.tolerance = tol;
    fopt.rule = rule;
    const Trajectory reference = solve_forward(p, fopt);

    std::vector<Trajectory> members;
    if (recipe == "solution_offset") {
        for (const double offset : block.at("offsets").get<std::vector<double>>()) {
            Trajectory member = reference;
            for (auto& v : member.values)
                for (auto& x : v) x += offset;
            members.push_back(std::move(member));
        }
    } else {
        // members solve the problem under a load shifted by epsilon in the
        // dual norm, making epsilon a valid inequality slack by construction
        const std::size_t dof = block.at("direction_dof").get<std::size_t>();
        if (dof >= p.space.n_dof) fail(ErrorKind::validation, "wellposed.direction_dof: out of range");
        Vector bump(p.space.n_dof, 0.0);
        bump[dof] = 1.0;
        Vector dual(p.space.n_dof);
        kernels::matvec(p.space.v_metric, bump, dual);
        const double dn = p.space.dual_norm(dual);
        for (auto& x : dual) x /= dn;
        for (const double eps : block.at("epsilons").get<std::vector<double>>()) {
            HdviProblem shifted = p;
            shifted.load = combine_loads(p.load, eps, LoadSampler::constant(dual));
            members.push_back(solve_forward(shifted, fopt));
        }
    }

    WellposedOptions wopt;
    wopt.tolerance = tol;
    wopt.rule = rule;
    wopt.act_scale = scenario_active_scale(scenario);
    if (block.contains("slack")) wopt.slack = block.at("slack").get<double>();
    const SequenceDiagnostic diag = verify_t4_bound(p, members, wopt);

    bool any_infeasible = false;
    bool q_converges = members.size() < 2 ||
                       diag.members.back().q_residual <= diag.members.front().q_residual;
    {
        CsvWriter csv(out / "diagnostics.csv", {"member", "feasible", "p_residual", "q_residual", "v_distance",
                                                "p_bound", "q_bound", "within_bounds"});
        for (std::size_t m = 0; m < diag.members.size(); ++m) {
            const auto& d = diag.members[m];
            any_infeasible = any_infeasible || !d.feasible;
            const bool p_ok = !d.feasible || d.v_distance <= diag.p_bound_constant * (*d.p_residual) + wopt.slack;
            const bool q_ok = d.v_distance <= diag.q_bound_constant * d.q_residual + wopt.slack;
            csv.row({std::to_string(m), d.feasible ? "1" : "0",
                     d.p_residual ? format_number(*d.p_residual) : "infeasible", format_number(d.q_residual),
                     format_number(d.v_distance),
                     d.p_residual ? format_number(diag.p_bound_constant * (*d.p_residual)) : "",
                     format_number(diag.q_bound_constant * d.q_residual), (p_ok && q_ok) ? "1" : "0"});
        }
    }

    manifest["outputs"].push_back("diagnostics.csv");
    manifest["metrics"]["members"] = diag.members.size();
    manifest["metrics"]["p_bound_constant"] = diag.p_bound_constant;
    manifest["metrics"]["q_bound_constant"] = diag.q_bound_constant;
    manifest["metrics"]["any_member_infeasible_for_p"] = any_infeasible;
    manifest["metrics"]["q_residual_converges"] = q_converges;
    manifest["metrics"]["final_q_residual"] = diag.members.back().q_residual;
    manifest["metrics"]["final_v_distance"] = diag.members.back().v_distance;
}

}  // namespace

json derived_constants_json(const HdviProblem& p) {
    const DerivedConstants d = derived_constants(p);
    json out;
    out["coercivity"] = p.coercivity;
    out["kernel_sup_norm"] = p.kernel.sup_norm;
    out["memory_rate"] = d.memory_rate;
    out["solution_lipschitz"] = d.solution_lipschitz;
    if (d.window_unbounded)
        out["contraction_window"] = "unbounded";
    else
        out["contraction_window"] = d.contraction_window;
    return out;
}

json run_scenario(const Scenario& scenario, const RunOptions& options) {
    const auto t_start = std::chrono::steady_clock::now();
    set_max_threads(options.threads);

    const std::filesystem::path out(options.out_dir);
    std::filesystem::create_directories(out);

    const HdviProblem p = build_problem(scenario, options.overrides);
    const double tol = scenario_tolerance(scenario, options.overrides);
    const QuadratureRule rule = scenario_rule(scenario);
    const std::string mode = scenario.doc.at("mode").get<std::string>();

    json manifest;
    char hash_hex[20];
    std::snprintf(hash_hex, sizeof(hash_hex), "%016llx", static_cast<unsigned long long>(scenario.content_hash));
    manifest["scenario_hash"] = std::string("fnv1a64:") + hash_hex;
    manifest["mode"] = mode;
    manifest["threads"] = options.threads;
    manifest["tolerance"] = tol;
    manifest["quadrature"] = rule == QuadratureRule::trapezoid ? "trapezoid" : "left_rectangle";
    manifest["time_steps"] = p.grid.steps;
    manifest["derived_constants"] = derived_constants_json(p);
    manifest["outputs"] = json::array();
    manifest["metrics"] = json::object();

    if (mode == "forward" || mode == "rod_regression")
        run_forward_mode(p, scenario, out, tol, rule, manifest);
    else if (mode == "picard")
        run_picard_mode(p, out, tol, rule, manifest);
    else if (mode == "sensitivity")
        run_sensitivity_mode(p, scenario, out, tol, rule, manifest);
    else if (mode == "control")
        run_control_mode(p, scenario, out, tol, rule, manifest);
    else if (mode == "wellposed")
        run_wellposed_mode(p, scenario, out, tol, rule, manifest);
    else
        fail(ErrorKind::validation, "mode: unsupported mode '" + mode + "'");

    manifest["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    std::ofstream(out / "run_manifest.json") << manifest.dump(2) << "\n";
    return manifest;
}

}  // namespace hdvi
