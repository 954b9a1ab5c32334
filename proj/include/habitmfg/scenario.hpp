#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "habitmfg/core.hpp"
#include "habitmfg/exp_mfg.hpp"
#include "habitmfg/nagent.hpp"
#include "habitmfg/power_mfg.hpp"

namespace habitmfg {

struct SolverSettings {
    std::optional<double> tol;       // regime default when unset
    std::optional<int> max_iter;
    double damping = 0.5;            // power regime only
};

struct SimulationSettings {
    std::vector<int> n_values{16, 64, 256, 1024, 4096};
    int replications = 64;
    std::uint64_t seed = 2024;
    std::vector<int> nash_n_values{64, 1024};
};

// parameter is one of p, beta, delta, theta, terminal_theta, z0, x0
struct SweepSpec {
    std::string parameter;
    std::vector<double> values;
};

struct ScenarioConfig {
    std::string name = "custom";
    Regime regime = Regime::power;
    MarketParams market;
    TypeDistribution distribution;
    int n_steps = 1000;
    SolverSettings solver;
    SimulationSettings simulation;
    std::optional<SweepSpec> sweep;
    std::string outputs = "out";
    std::vector<std::string> notes;

    // Throws ValidationError naming the offending field.
    void validate() const;
};

// JSON round trip. Parsing is strict: unknown keys, wrong types and a risk key
// that does not match the regime ("p" for power, "beta" for exponential) are
// rejected with the field name.
ScenarioConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ScenarioConfig& cfg);
ScenarioConfig load_config(const std::filesystem::path& path);

const std::vector<std::string>& preset_names();
ScenarioConfig preset_config(const std::string& name);

// Same constants with beta = p in the exponential regime.
ScenarioConfig exponential_analogue(const ScenarioConfig& cfg);
ScenarioConfig with_parameter(const ScenarioConfig& cfg, const std::string& parameter,
                              double value);

struct SolveResult {
    Regime regime = Regime::power;
    std::optional<ExpEquilibrium> exp;
    std::optional<PowerEquilibrium> power;
    std::optional<PowerBounds> bounds;

    const GridPath& zbar() const;
    double xbar_T() const;
    double residual() const;
    int iterations() const;
};

SolveResult solve_scenario(const ScenarioConfig& cfg);

// Per-class time series of a solved scenario, in the column layout of
// equilibrium.csv (t and zbar first).
struct EquilibriumTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

EquilibriumTable equilibrium_table(const ScenarioConfig& cfg, const SolveResult& res);
void write_csv(std::ostream& os, const EquilibriumTable& table);
nlohmann::json summary_json(const ScenarioConfig& cfg, const SolveResult& res);

// The run_* functions write their artifacts under `out` and return the
// summary that was written.
nlohmann::json run_solve(const ScenarioConfig& cfg, const std::filesystem::path& out);
nlohmann::json run_convergence(const ScenarioConfig& cfg, const std::filesystem::path& out,
                               unsigned threads = 0);
// Legs that fail are listed under "failures" in the summary; the other legs
// are still written.
nlohmann::json run_sweep(const ScenarioConfig& cfg, const SweepSpec& sweep,
                         const std::filesystem::path& out);

// Machine-readable description of an exception, as written to error.json.
nlohmann::json error_json(const std::exception& e);
// Process exit code for an exception: 2 invalid input, 3 numerical failure, 1 other.
int exit_code_for(const std::exception& e);

std::string format_number(double v);

}  // namespace habitmfg
