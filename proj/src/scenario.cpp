#include "hdvi/scenario.hpp"

#include "hdvi/evi.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace hdvi {

using nlohmann::json;

namespace {

[[noreturn]] void bad_field(const std::string& field, const std::string& why) {
    fail(ErrorKind::validation, field + ": " + why);
}

const json& require(const json& obj, const std::string& field, const std::string& prefix) {
    if (!obj.is_object() || !obj.contains(field)) bad_field(prefix + field, "missing required field");
    return obj.at(field);
}

double require_number(const json& obj, const std::string& field, const std::string& prefix) {
    const json& v = require(obj, field, prefix);
    if (!v.is_number()) bad_field(prefix + field, "must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) bad_field(prefix + field, "must be finite");
    return x;
}

std::size_t require_count(const json& obj, const std::string& field, const std::string& prefix) {
    const json& v = require(obj, field, prefix);
    if (!v.is_number_unsigned() || v.get<std::uint64_t>() == 0) bad_field(prefix + field, "must be a positive integer");
    return v.get<std::size_t>();
}

std::size_t require_index(const json& obj, const std::string& field, const std::string& prefix) {
    const json& v = require(obj, field, prefix);
    if (!v.is_number_unsigned()) bad_field(prefix + field, "must be a nonnegative integer");
    return v.get<std::size_t>();
}

std::string require_string(const json& obj, const std::string& field, const std::string& prefix) {
    const json& v = require(obj, field, prefix);
    if (!v.is_string()) bad_field(prefix + field, "must be a string");
    return v.get<std::string>();
}

Vector parse_vector(const json& v, const std::string& field) {
    if (!v.is_array() || v.empty()) bad_field(field, "must be a nonempty array of numbers");
    Vector out;
    out.reserve(v.size());
    for (const auto& x : v) {
        if (!x.is_number()) bad_field(field, "must contain only numbers");
        out.push_back(x.get<double>());
        if (!std::isfinite(out.back())) bad_field(field, "must contain only finite numbers");
    }
    return out;
}

DenseMatrix parse_matrix(const json& v, const std::string& field) {
    if (!v.is_array() || v.empty()) bad_field(field, "must be a nonempty array of rows");
    const std::size_t rows = v.size();
    std::size_t cols = 0;
    DenseMatrix m;
    for (std::size_t i = 0; i < rows; ++i) {
        const Vector row = parse_vector(v.at(i), field + "[" + std::to_string(i) + "]");
        if (i == 0) {
            cols = row.size();
            m = DenseMatrix(rows, cols);
        } else if (row.size() != cols) {
            bad_field(field, "rows must all have the same length");
        }
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = row[j];
    }
    return m;
}

DenseMatrix parse_square_matrix(const json& v, const std::string& field) {
    DenseMatrix m = parse_matrix(v, field);
    if (!m.square()) bad_field(field, "must be a square matrix");
    return m;
}

MatrixKernel parse_kernel(const json& k, std::size_t strain_dim, const std::string& prefix) {
    const std::string kind = require_string(k, "kind", prefix);
    if (kind == "zero") return MatrixKernel::zero(strain_dim);
    if (kind == "constant") {
        DenseMatrix m = parse_square_matrix(require(k, "matrix", prefix), prefix + "matrix");
        if (m.rows != strain_dim) bad_field(prefix + "matrix", "size must match the strain dimension");
        return MatrixKernel::constant(std::move(m));
    }
    if (kind == "table") {
        const json& jt = require(k, "times_seconds", prefix);
        const json& jm = require(k, "matrices", prefix);
        if (!jt.is_array() || !jm.is_array() || jt.size() != jm.size() || jt.empty())
            bad_field(prefix + "matrices", "times_seconds and matrices must be matching nonempty arrays");
        std::vector<double> times;
        std::vector<DenseMatrix> samples;
        for (std::size_t i = 0; i < jt.size(); ++i) {
            if (!jt.at(i).is_number()) bad_field(prefix + "times_seconds", "must contain numbers");
            times.push_back(jt.at(i).get<double>());
            const std::string mf = prefix + "matrices[" + std::to_string(i) + "]";
            DenseMatrix m = parse_square_matrix(jm.at(i), mf);
            if (m.rows != strain_dim) bad_field(mf, "size must match the strain dimension");
            samples.push_back(std::move(m));
        }
        for (std::size_t i = 0; i + 1 < times.size(); ++i)
            if (!(times[i] < times[i + 1])) bad_field(prefix + "times_seconds", "must be strictly increasing");

        if (k.contains("continuity_modulus")) {
            const double modulus = require_number(k, "continuity_modulus", prefix);
            for (std::size_t i = 0; i + 1 < times.size(); ++i) {
                double dev = 0.0;
                for (std::size_t e = 0; e < samples[i].data.size(); ++e)
                    dev = std::max(dev, std::abs(samples[i + 1].data[e] - samples[i].data[e]));
                if (dev > modulus * (times[i + 1] - times[i]) + 1e-12)
                    bad_field(prefix + "matrices[" + std::to_string(i + 1) + "]",
                              "jump exceeds the declared continuity modulus");
            }
        }
        return MatrixKernel::table(std::move(times), std::move(samples));
    }
    bad_field(prefix + "kind", "must be one of zero|constant|table");
}

LoadSampler parse_load(const json& l, std::size_t n_dof, const std::string& prefix) {
    const std::string kind = require_string(l, "kind", prefix);
    if (kind == "constant") {
        Vector v = parse_vector(require(l, "vector", prefix), prefix + "vector");
        if (v.size() != n_dof) bad_field(prefix + "vector", "length must equal the DOF count");
        return LoadSampler::constant(std::move(v));
    }
    if (kind == "table") {
        const json& jt = require(l, "times_seconds", prefix);
        const json& jv = require(l, "vectors", prefix);
        if (!jt.is_array() || !jv.is_array() || jt.size() != jv.size() || jt.empty())
            bad_field(prefix + "vectors", "times_seconds and vectors must be matching nonempty arrays");
        std::vector<double> times;
        std::vector<Vector> values;
        for (std::size_t i = 0; i < jt.size(); ++i) {
            if (!jt.at(i).is_number()) bad_field(prefix + "times_seconds", "must contain numbers");
            times.push_back(jt.at(i).get<double>());
            Vector v = parse_vector(jv.at(i), prefix + "vectors[" + std::to_string(i) + "]");
            if (v.size() != n_dof)
                bad_field(prefix + "vectors[" + std::to_string(i) + "]", "length must equal the DOF count");
            values.push_back(std::move(v));
        }
        for (std::size_t i = 0; i + 1 < times.size(); ++i)
            if (!(times[i] < times[i + 1])) bad_field(prefix + "times_seconds", "must be strictly increasing");
        return LoadSampler::table(std::move(times), std::move(values));
    }
    bad_field(prefix + "kind", "must be one of constant|table");
}

const std::set<std::string> kModes = {"forward", "picard", "sensitivity", "control", "wellposed", "rod_regression"};

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void validate_scenario(const json& doc) {
    if (!doc.is_object()) fail(ErrorKind::validation, "scenario: document must be a JSON object");

    const std::string mode = require_string(doc, "mode", "");
    if (!kModes.count(mode)) bad_field("mode", "unknown mode '" + mode + "'");

    const json& time = require(doc, "time", "");
    const double t_end = require_number(time, "t_end_seconds", "time.");
    if (!(t_end > 0.0)) bad_field("time.t_end_seconds", "must be positive");
    require_count(time, "steps", "time.");

    const json& problem = require(doc, "problem", "");
    const std::string kind = require_string(problem, "kind", "problem.");
    if (kind == "rod") {
        require_count(problem, "n_elements", "problem.");
    } else if (kind == "explicit") {
        const DenseMatrix d = parse_matrix(require(problem, "strain_map", "problem."), "problem.strain_map");
        const Vector w = parse_vector(require(problem, "q_weights", "problem."), "problem.q_weights");
        if (w.size() != d.rows) bad_field("problem.q_weights", "length must equal the strain dimension");
        for (double x : w)
            if (!(x > 0.0)) bad_field("problem.q_weights", "must be strictly positive");
        const DenseMatrix b = parse_square_matrix(require(problem, "stiffness", "problem."), "problem.stiffness");
        if (b.rows != d.rows) bad_field("problem.stiffness", "size must match the strain dimension");
        parse_kernel(require(problem, "kernel", "problem."), d.rows, "problem.kernel.");
        parse_load(require(problem, "load", "problem."), d.cols, "problem.load.");
        if (problem.contains("constraints")) {
            const json& cs = problem.at("constraints");
            if (!cs.is_array()) bad_field("problem.constraints", "must be an array");
            for (std::size_t i = 0; i < cs.size(); ++i) {
                const std::string pf = "problem.constraints[" + std::to_string(i) + "].";
                const std::size_t dof = require_index(cs.at(i), "dof", pf);
                if (dof >= d.cols) bad_field(pf + "dof", "out of range");
                require_number(cs.at(i), "upper_bound", pf);
            }
        }
        if (problem.contains("contacts")) {
            const json& cs = problem.at("contacts");
            if (!cs.is_array()) bad_field("problem.contacts", "must be an array");
            for (std::size_t i = 0; i < cs.size(); ++i) {
                const std::string pf = "problem.contacts[" + std::to_string(i) + "].";
                const std::size_t dof = require_index(cs.at(i), "dof", pf);
                if (dof >= d.cols) bad_field(pf + "dof", "out of range");
                require_number(cs.at(i), "boundary_weight", pf);
            }
        }
    } else {
        bad_field("problem.kind", "must be rod or explicit");
    }

    if (doc.contains("numerics")) {
        const json& num = doc.at("numerics");
        if (num.contains("tolerance") && !(require_number(num, "tolerance", "numerics.") > 0.0))
            bad_field("numerics.tolerance", "must be positive");
        if (num.contains("quadrature")) {
            const std::string q = require_string(num, "quadrature", "numerics.");
            if (q != "trapezoid" && q != "left_rectangle")
                bad_field("numerics.quadrature", "must be trapezoid or left_rectangle");
        }
        if (num.contains("kernel_norm_safety_factor") &&
            !(require_number(num, "kernel_norm_safety_factor", "numerics.") >= 1.0))
            bad_field("numerics.kernel_norm_safety_factor", "must be at least 1");
        if (num.contains("active_tolerance_scale") &&
            !(require_number(num, "active_tolerance_scale", "numerics.") > 0.0))
            bad_field("numerics.active_tolerance_scale", "must be positive");
        if (num.contains("multiplier_tolerance_scale") &&
            !(require_number(num, "multiplier_tolerance_scale", "numerics.") > 0.0))
            bad_field("numerics.multiplier_tolerance_scale", "must be positive");
    }

    if (mode == "rod_regression" && require_string(problem, "kind", "problem.") != "rod")
        bad_field("mode", "rod_regression requires a rod problem");

    if (mode == "sensitivity") {
        const json& s = require(doc, "sensitivity", "");
        const json& taus = require(s, "taus", "sensitivity.");
        if (!taus.is_array() || taus.empty()) bad_field("sensitivity.taus", "must be a nonempty array");
        for (std::size_t i = 0; i < taus.size(); ++i) {
            if (!taus.at(i).is_number() || !(taus.at(i).get<double>() > 0.0))
                bad_field("sensitivity.taus", "entries must be positive numbers");
            if (i > 0 && !(taus.at(i).get<double>() < taus.at(i - 1).get<double>()))
                bad_field("sensitivity.taus", "must be strictly decreasing");
        }
        const json& dir = require(s, "direction", "sensitivity.");
        const std::string dkind = require_string(dir, "kind", "sensitivity.direction.");
        if (dkind != "scaled_load" && dkind != "constant" && dkind != "table")
            bad_field("sensitivity.direction.kind", "must be scaled_load, constant, or table");
        if (dkind == "scaled_load") require_number(dir, "factor", "sensitivity.direction.");
        if (s.contains("norm_exponent") && !(require_number(s, "norm_exponent", "sensitivity.") > 1.0))
            bad_field("sensitivity.norm_exponent", "must exceed 1");
        if (s.contains("probe") && s.at("probe").contains("offset_scale"))
            require_number(s.at("probe"), "offset_scale", "sensitivity.probe.");
    }

    if (mode == "control") {
        if (require_string(problem, "kind", "problem.") != "rod")
            bad_field("mode", "control mode drives the built-in rod control map and requires a rod problem");
        const json& c = require(doc, "control", "");
        require_number(c, "alpha", "control.");
        if (!(require_number(c, "beta", "control.") > 0.0)) bad_field("control.beta", "must be positive");
        const json& target = require(c, "target", "control.");
        if (!target.is_object()) bad_field("control.target", "must be an object");
        const std::string tkind = require_string(target, "kind", "control.target.");
        if (tkind == "vector") {
            parse_vector(require(target, "values", "control.target."), "control.target.values");
        } else if (tkind == "from_constant_control") {
            require_number(target, "value", "control.target.");
        } else {
            bad_field("control.target.kind", "must be vector or from_constant_control");
        }
        const json& map = require(c, "map", "control.");
        if (!require(map, "body", "control.map.").is_boolean()) bad_field("control.map.body", "must be a boolean");
        if (!require(map, "traction", "control.map.").is_boolean())
            bad_field("control.map.traction", "must be a boolean");
        if (!map.at("body").get<bool>() && !map.at("traction").get<bool>())
            bad_field("control.map", "at least one of body/traction must be enabled");
    }

    if (mode == "wellposed") {
        const json& w = require(doc, "wellposed", "");
        const std::string recipe = require_string(w, "recipe", "wellposed.");
        if (recipe == "solution_offset") {
            const json& offsets = require(w, "offsets", "wellposed.");
            if (!offsets.is_array() || offsets.empty()) bad_field("wellposed.offsets", "must be a nonempty array");
            for (const auto& x : offsets)
                if (!x.is_number()) bad_field("wellposed.offsets", "entries must be numbers");
        } else if (recipe == "perturbed_load") {
            const json& eps = require(w, "epsilons", "wellposed.");
            if (!eps.is_array() || eps.empty()) bad_field("wellposed.epsilons", "must be a nonempty array");
            for (const auto& x : eps)
                if (!x.is_number() || !(x.get<double>() > 0.0))
                    bad_field("wellposed.epsilons", "entries must be positive numbers");
            require_index(w, "direction_dof", "wellposed.");
        } else {
            bad_field("wellposed.recipe", "must be solution_offset or perturbed_load");
        }
    }
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::parse, "cannot open scenario file '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    const std::string bytes = buffer.str();

    Scenario s;
    s.source_path = path;
    s.content_hash = fnv1a64(bytes);
    try {
        s.doc = json::parse(bytes);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::parse, std::string("scenario parse failure: ") + e.what());
    }
    validate_scenario(s.doc);
    return s;
}

double scenario_tolerance(const Scenario& scenario, const RunOverrides& overrides) {
    if (overrides.tolerance) return *overrides.tolerance;
    if (scenario.doc.contains("numerics") && scenario.doc.at("numerics").contains("tolerance"))
        return scenario.doc.at("numerics").at("tolerance").get<double>();
    return 1e-10;
}

QuadratureRule scenario_rule(const Scenario& scenario) {
    if (scenario.doc.contains("numerics") && scenario.doc.at("numerics").contains("quadrature") &&
        scenario.doc.at("numerics").at("quadrature").get<std::string>() == "left_rectangle")
        return QuadratureRule::left_rectangle;
    return QuadratureRule::trapezoid;
}

namespace {
double numerics_scale(const Scenario& scenario, const char* field, double fallback) {
    if (scenario.doc.contains("numerics") && scenario.doc.at("numerics").contains(field))
        return scenario.doc.at("numerics").at(field).get<double>();
    return fallback;
}
}  // namespace

double scenario_active_scale(const Scenario& scenario) {
    return numerics_scale(scenario, "active_tolerance_scale", kActiveToleranceScale);
}

double scenario_multiplier_scale(const Scenario& scenario) {
    return numerics_scale(scenario, "multiplier_tolerance_scale", kMultiplierToleranceScale);
}

HdviProblem build_problem(const Scenario& scenario, const RunOverrides& overrides) {
    const json& doc = scenario.doc;
    const json& time = doc.at("time");
    TimeGrid grid{time.at("t_end_seconds").get<double>(), time.at("steps").get<std::size_t>()};
    if (overrides.steps) grid.steps = *overrides.steps;

    double safety = 1.0;
    if (doc.contains("numerics") && doc.at("numerics").contains("kernel_norm_safety_factor"))
        safety = doc.at("numerics").at("kernel_norm_safety_factor").get<double>();

    const json& problem = doc.at("problem");
    if (problem.at("kind").get<std::string>() == "rod")
        return build_rod_example(problem.at("n_elements").get<std::size_t>(), grid);

    DenseMatrix d = parse_matrix(problem.at("strain_map"), "problem.strain_map");
    Vector w = parse_vector(problem.at("q_weights"), "problem.q_weights");
    DiscreteSpace space = make_space(std::move(d), std::move(w));
    DenseMatrix b = parse_square_matrix(problem.at("stiffness"), "problem.stiffness");
    MatrixKernel kernel = parse_kernel(problem.at("kernel"), space.strain_dim(), "problem.kernel.");
    LoadSampler load = parse_load(problem.at("load"), space.n_dof, "problem.load.");

    ConstraintSet constraints;
    if (problem.contains("constraints"))
        for (const auto& c : problem.at("constraints"))
            constraints.upper_bounds.push_back({c.at("dof").get<std::size_t>(), c.at("upper_bound").get<double>()});

    ComplianceLaw law;
    if (problem.contains("compliance_stiffness")) law.stiffness = problem.at("compliance_stiffness").get<double>();
    if (problem.contains("contacts"))
        for (const auto& c : problem.at("contacts"))
            law.contacts.push_back({c.at("dof").get<std::size_t>(), c.at("boundary_weight").get<double>()});

    return make_problem(std::move(space), std::move(b), std::move(kernel), std::move(law), std::move(constraints),
                        std::move(load), grid, safety);
}

}  // namespace hdvi
