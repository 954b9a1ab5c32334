// mfg-habitat: command-line front end for the habit-formation mean field games.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "habitmfg/errors.hpp"
#include "habitmfg/scenario.hpp"

namespace fs = std::filesystem;
using namespace habitmfg;

namespace {

struct CommonOptions {
    std::string config;
    std::string preset;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> grid;
    std::optional<unsigned> threads;
    bool exponential = false;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool needs_source) {
    auto* cfg = cmd->add_option("--config", o.config, "scenario JSON file");
    if (needs_source) {
        auto* pre = cmd->add_option("--preset", o.preset, "use a built-in preset as the base config");
        cfg->excludes(pre);
    }
    cmd->add_option("--out", o.out, "output directory (default: the config's outputs entry)");
    cmd->add_option("--seed", o.seed, "simulation seed");
    cmd->add_option("--grid", o.grid, "number of time steps N")->check(CLI::Range(2, 100000000));
    cmd->add_option("--threads", o.threads, "worker threads (0 = all cores)");
    cmd->add_flag("--exponential", o.exponential,
                  "solve the exponential-utility analogue (beta = p)");
}

ScenarioConfig resolve(const CommonOptions& o, const std::string& preset_name = {}) {
    ScenarioConfig cfg;
    if (!preset_name.empty()) {
        cfg = preset_config(preset_name);
    } else if (!o.preset.empty()) {
        cfg = preset_config(o.preset);
    } else if (!o.config.empty()) {
        cfg = load_config(o.config);
    } else {
        throw ValidationError("config", "pass --config FILE or --preset NAME");
    }
    if (o.exponential) cfg = exponential_analogue(cfg);
    if (o.grid) cfg.n_steps = *o.grid;
    if (o.seed) cfg.simulation.seed = *o.seed;
    cfg.validate();
    return cfg;
}

unsigned thread_count(const CommonOptions& o) {
    if (o.threads) return *o.threads;
    if (const char* env = std::getenv("MFG_HABITAT_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v >= 0) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
        throw ValidationError("MFG_HABITAT_THREADS", std::string("not a thread count: ") + env);
    }
    return 0;
}

fs::path out_dir(const CommonOptions& o, const ScenarioConfig& cfg) {
    return o.out.empty() ? fs::path(cfg.outputs) : fs::path(o.out);
}

int report_failure(const std::exception& e, const fs::path& dir) {
    const nlohmann::json err = error_json(e);
    std::cerr << err.dump() << '\n';
    if (!dir.empty()) {
        std::error_code ec;
        fs::create_directories(dir, ec);
        std::ofstream f(dir / "error.json");
        if (f) f << err.dump(2) << '\n';
    }
    return exit_code_for(e);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mean field games with habit formation and relative wealth concerns"};
    app.require_subcommand(1);

    CommonOptions solve_o, conv_o, sweep_o, preset_o;

    auto* solve = app.add_subcommand("solve", "solve one equilibrium (equilibrium.csv, summary.json)");
    add_common(solve, solve_o, true);

    auto* conv = app.add_subcommand("converge", "n-agent convergence study and Nash probe");
    add_common(conv, conv_o, true);

    auto* sweep = app.add_subcommand("sweep", "re-solve over a parameter list (sweep.csv)");
    add_common(sweep, sweep_o, true);
    std::string sweep_param;
    std::vector<double> sweep_values;
    sweep->add_option("--param", sweep_param, "p | beta | delta | theta | terminal_theta | z0 | x0");
    sweep->add_option("--values", sweep_values, "comma-separated values")->delimiter(',');

    auto* preset = app.add_subcommand("preset", "run a figure preset");
    add_common(preset, preset_o, false);
    std::string preset_name;
    bool list = false, print_config = false;
    preset->add_option("name", preset_name, "preset name");
    preset->add_flag("--list", list, "list preset names");
    preset->add_flag("--print-config", print_config, "print the preset config as JSON and exit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help lands here too, with exit code 0
        return app.exit(e) == 0 ? 0 : 2;
    }

    fs::path dir;
    for (const auto* o : {&solve_o, &conv_o, &sweep_o, &preset_o}) {
        if (!o->out.empty()) dir = o->out;
    }
    try {
        if (*solve) {
            const ScenarioConfig cfg = resolve(solve_o);
            dir = out_dir(solve_o, cfg);
            const auto s = run_solve(cfg, dir);
            std::cout << "xbar_T=" << s["xbar_T"].get<double>() << " residual=" << s["residual"].get<double>()
                      << " iterations=" << s["iterations"].get<int>() << " -> " << dir.string() << '\n';
        } else if (*conv) {
            const ScenarioConfig cfg = resolve(conv_o);
            dir = out_dir(conv_o, cfg);
            const auto s = run_convergence(cfg, dir, thread_count(conv_o));
            std::cout << s["fits"].dump() << "\n-> " << dir.string() << '\n';
        } else if (*sweep) {
            ScenarioConfig cfg = resolve(sweep_o);
            dir = out_dir(sweep_o, cfg);
            SweepSpec spec;
            if (!sweep_param.empty() || !sweep_values.empty()) {
                spec = {sweep_param, sweep_values};
            } else if (cfg.sweep) {
                spec = *cfg.sweep;
            } else {
                throw ValidationError("sweep", "pass --param and --values or a sweep entry in the config");
            }
            const auto s = run_sweep(cfg, spec, dir);
            std::cout << s["legs"].size() << " legs, " << s["failures"].size() << " failures -> "
                      << dir.string() << '\n';
            if (!s["failures"].empty()) {
                std::cerr << s["failures"].dump() << '\n';
                return 4;
            }
        } else if (*preset) {
            if (list) {
                for (const auto& n : preset_names()) std::cout << n << '\n';
                return 0;
            }
            if (preset_name.empty()) throw ValidationError("preset", "missing preset name");
            const ScenarioConfig cfg = resolve(preset_o, preset_name);
            if (print_config) {
                std::cout << config_to_json(cfg).dump(2) << '\n';
                return 0;
            }
            dir = out_dir(preset_o, cfg);
            if (cfg.sweep) {
                const auto s = run_sweep(cfg, *cfg.sweep, dir);
                std::cout << s["legs"].size() << " legs -> " << dir.string() << '\n';
                if (!s["failures"].empty()) {
                    std::cerr << s["failures"].dump() << '\n';
                    return 4;
                }
            } else {
                const auto s = run_solve(cfg, dir);
                std::cout << "xbar_T=" << s["xbar_T"].get<double>() << " -> " << dir.string() << '\n';
            }
        }
    } catch (const std::exception& e) {
        return report_failure(e, dir);
    }
    return 0;
}
