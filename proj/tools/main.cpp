#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hdvi/runner.hpp"

namespace {

int exit_code_for(hdvi::ErrorKind kind) {
    switch (kind) {
        case hdvi::ErrorKind::parse: return 2;
        case hdvi::ErrorKind::validation: return 3;
        default: return 4;
    }
}

void emit_error(const std::string& out_dir, const std::string& kind, const std::string& message) {
    nlohmann::json doc;
    doc["error"] = kind;
    doc["message"] = message;
    std::cerr << doc.dump() << "\n";
    if (!out_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        if (!ec) std::ofstream(std::filesystem::path(out_dir) / "error.json") << doc.dump(2) << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"History-dependent contact solver suite"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::string out_dir;
    double tol_override = -1.0;
    std::size_t steps_override = 0;
    int threads = 1;

    if (const char* env = std::getenv("HDVI_OUT_DIR")) out_dir = env;
    if (out_dir.empty()) out_dir = "hdvi_out";

    auto* run = app.add_subcommand("run", "execute a scenario and write CSV outputs plus a manifest");
    run->add_option("scenario", scenario_path, "scenario file (JSON)")->required();
    run->add_option("--out", out_dir, "output directory (default: $HDVI_OUT_DIR or ./hdvi_out)");
    run->add_option("--tol", tol_override, "override numerics.tolerance");
    run->add_option("--steps", steps_override, "override time.steps");
    run->add_option("--threads", threads, "thread cap for the parallel loops (default 1)");

    auto* validate = app.add_subcommand("validate", "schema-check a scenario file");
    validate->add_option("scenario", scenario_path, "scenario file (JSON)")->required();

    auto* constants = app.add_subcommand("constants", "print the derived solver constants for a scenario");
    constants->add_option("scenario", scenario_path, "scenario file (JSON)")->required();
    constants->add_option("--steps", steps_override, "override time.steps");

    CLI11_PARSE(app, argc, argv);

    const std::string error_dir = run->parsed() ? out_dir : std::string();
    try {
        hdvi::Scenario scenario = hdvi::load_scenario(scenario_path);

        if (validate->parsed()) {
            std::cout << "ok\n";
            return 0;
        }

        hdvi::RunOverrides overrides;
        if (tol_override > 0.0) overrides.tolerance = tol_override;
        if (steps_override > 0) overrides.steps = steps_override;

        if (constants->parsed()) {
            const hdvi::HdviProblem p = hdvi::build_problem(scenario, overrides);
            std::cout << hdvi::derived_constants_json(p).dump(2) << "\n";
            return 0;
        }

        hdvi::RunOptions options;
        options.out_dir = out_dir;
        options.overrides = overrides;
        options.threads = threads;
        const nlohmann::json manifest = hdvi::run_scenario(scenario, options);
        std::cout << manifest.dump(2) << "\n";
        return 0;
    } catch (const hdvi::Error& e) {
        emit_error(error_dir, hdvi::error_kind_name(e.kind()), e.what());
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        emit_error(error_dir, "Internal", e.what());
        return 5;
    }
}
