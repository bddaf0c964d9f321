#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "hdvi/model.hpp"

namespace hdvi {

struct RunOverrides {
    std::optional<double> tolerance;
    std::optional<std::size_t> steps;
};

/// Parsed scenario document plus the content hash of the file bytes.
struct Scenario {
    nlohmann::json doc;
    std::string source_path;
    std::uint64_t content_hash = 0;
};

std::uint64_t fnv1a64(std::string_view bytes);

/// Reads and schema-validates a scenario file. Malformed JSON raises
/// ParseError (with the parser's position info); schema violations raise
/// ValidationError naming the offending field.
Scenario load_scenario(const std::string& path);

/// Schema check only (used by load_scenario and the validate subcommand).
void validate_scenario(const nlohmann::json& doc);

/// Builds the problem instance described by the scenario, applying any
/// command-line overrides.
HdviProblem build_problem(const Scenario& scenario, const RunOverrides& overrides);

double scenario_tolerance(const Scenario& scenario, const RunOverrides& overrides);
QuadratureRule scenario_rule(const Scenario& scenario);
double scenario_active_scale(const Scenario& scenario);
double scenario_multiplier_scale(const Scenario& scenario);

}  // namespace hdvi
