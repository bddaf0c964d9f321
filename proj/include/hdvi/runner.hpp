#pragma once

#include "hdvi/scenario.hpp"

namespace hdvi {

struct RunOptions {
    std::string out_dir;
    RunOverrides overrides;
    int threads = 1;
};

/// Executes the scenario's mode, writes the CSV outputs and the manifest
/// into out_dir, and returns the manifest document. All results are computed
/// before any CSV is written, so a failure leaves no partial output behind.
nlohmann::json run_scenario(const Scenario& scenario, const RunOptions& options);

nlohmann::json derived_constants_json(const HdviProblem& p);

/// Fixed numeric formatting shared by every emitted file: 17 significant
/// digits, '.' decimal point, no locale dependence.
std::string format_number(double x);

}  // namespace hdvi
