#include "habitmfg/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "habitmfg/errors.hpp"

namespace habitmfg {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Strict reader over one JSON object: every key must be consumed.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ValidationError(path_.empty() ? "config" : path_, "expected an object");
    }

    std::string field(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    double number(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_number()) throw ValidationError(field(key), "expected a number");
        return v.get<double>();
    }
    double number(const std::string& key, double fallback) {
        return has(key) ? number(key) : fallback;
    }
    int integer(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_number_integer()) throw ValidationError(field(key), "expected an integer");
        return v.get<int>();
    }
    std::uint64_t unsigned_integer(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
            throw ValidationError(field(key), "expected a nonnegative integer");
        }
        return v.get<std::uint64_t>();
    }
    std::string string(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_string()) throw ValidationError(field(key), "expected a string");
        return v.get<std::string>();
    }
    std::vector<int> int_list(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_array()) throw ValidationError(field(key), "expected an array of integers");
        std::vector<int> out;
        for (const auto& e : v) {
            if (!e.is_number_integer()) throw ValidationError(field(key), "expected integers");
            out.push_back(e.get<int>());
        }
        return out;
    }
    std::vector<double> number_list(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_array()) throw ValidationError(field(key), "expected an array of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) throw ValidationError(field(key), "expected numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw ValidationError(field(it.key()), "unknown key");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

const char* risk_key(Regime r) { return r == Regime::power ? "p" : "beta"; }

const std::set<std::string>& sweep_parameters() {
    static const std::set<std::string> s{"p", "beta", "delta", "theta", "terminal_theta", "z0", "x0"};
    return s;
}

void validate_sweep_parameter(const std::string& name, Regime regime, const std::string& field) {
    if (!sweep_parameters().count(name)) {
        throw ValidationError(field, "unsupported sweep parameter '" + name + "'");
    }
    if ((name == "p" || name == "beta") && name != risk_key(regime)) {
        throw ValidationError(field, "risk parameter '" + name + "' does not match the " +
                                         to_string(regime) + " regime");
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f << text;
    if (!f) throw std::runtime_error("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string class_suffix(std::size_t k) { return "_" + std::to_string(k + 1); }

std::string short_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

std::string format_number(double v) {
    if (!std::isfinite(v)) throw DomainError("non-finite value in output");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------

void ScenarioConfig::validate() const {
    market.validate(regime);
    distribution.validate(regime);
    if (n_steps < 2) throw ValidationError("grid.n_steps", "at least 2 steps are required");
    if (solver.tol && !(*solver.tol > 0.0)) throw ValidationError("solver.tol", "must be > 0");
    if (solver.max_iter && *solver.max_iter < 1) {
        throw ValidationError("solver.max_iter", "must be >= 1");
    }
    if (!(solver.damping > 0.0 && solver.damping <= 1.0)) {
        throw ValidationError("solver.damping", "must lie in (0,1]");
    }
    const auto& sim = simulation;
    if (sim.n_values.size() < 3) {
        throw ValidationError("simulation.n_values", "need at least 3 cohort sizes");
    }
    for (std::size_t i = 0; i < sim.n_values.size(); ++i) {
        if (sim.n_values[i] < 1 || (i > 0 && sim.n_values[i] <= sim.n_values[i - 1])) {
            throw ValidationError("simulation.n_values", "must be positive and strictly increasing");
        }
    }
    if (sim.replications < 30) {
        throw ValidationError("simulation.replications", "need at least 30 replications");
    }
    for (int n : sim.nash_n_values) {
        if (n < 1) throw ValidationError("simulation.nash_n_values", "must be positive");
    }
    if (sweep) {
        validate_sweep_parameter(sweep->parameter, regime, "sweep.parameter");
        if (sweep->values.empty()) throw ValidationError("sweep.values", "empty value list");
        for (double v : sweep->values) with_parameter(*this, sweep->parameter, v);
    }
}

ScenarioConfig config_from_json(const json& j) {
    Reader top(j, "");
    ScenarioConfig cfg;
    if (top.has("name")) cfg.name = top.string("name");
    if (!top.has("regime")) throw ValidationError("regime", "missing");
    cfg.regime = regime_from_string(top.string("regime"));

    if (!top.has("market")) throw ValidationError("market", "missing");
    {
        Reader m(top.raw("market"), "market");
        cfg.market.horizon = m.number("T", cfg.market.horizon);
        cfg.market.delta = m.number("delta", cfg.market.delta);
        cfg.market.x0 = m.number("x0", cfg.market.x0);
        cfg.market.z0 = m.number("z0", cfg.market.z0);
        m.finish();
    }

    if (!top.has("distribution")) throw ValidationError("distribution", "missing");
    const json& dj = top.raw("distribution");
    if (!dj.is_array() || dj.empty()) {
        throw ValidationError("distribution", "expected a non-empty array of classes");
    }
    std::vector<AgentClass> classes;
    std::vector<double> weights;
    const std::string want = risk_key(cfg.regime);
    const std::string other = cfg.regime == Regime::power ? "beta" : "p";
    for (std::size_t k = 0; k < dj.size(); ++k) {
        const std::string path = "distribution[" + std::to_string(k) + "]";
        Reader c(dj[k], path);
        AgentClass cls;
        cls.mu = c.number("mu", cls.mu);
        cls.sigma = c.number("sigma", cls.sigma);
        if (c.has(other)) {
            throw ValidationError(c.field(other), "risk key '" + other + "' does not match the " +
                                                      to_string(cfg.regime) + " regime");
        }
        if (!c.has(want)) throw ValidationError(c.field(want), "missing");
        cls.risk = c.number(want);
        cls.theta = c.number("theta", cls.theta);
        if (c.has("terminal_theta")) cls.terminal_theta = c.number("terminal_theta");
        weights.push_back(c.number("weight", dj.size() == 1 ? 1.0 : std::nan("")));
        if (!std::isfinite(weights.back())) throw ValidationError(c.field("weight"), "missing");
        c.finish();
        classes.push_back(cls);
    }
    cfg.distribution = TypeDistribution(std::move(classes), std::move(weights));

    if (top.has("grid")) {
        Reader g(top.raw("grid"), "grid");
        if (g.has("n_steps")) cfg.n_steps = g.integer("n_steps");
        g.finish();
    }
    if (top.has("solver")) {
        Reader s(top.raw("solver"), "solver");
        if (s.has("tol")) cfg.solver.tol = s.number("tol");
        if (s.has("max_iter")) cfg.solver.max_iter = s.integer("max_iter");
        cfg.solver.damping = s.number("damping", cfg.solver.damping);
        s.finish();
    }
    if (top.has("simulation")) {
        Reader s(top.raw("simulation"), "simulation");
        if (s.has("n_values")) cfg.simulation.n_values = s.int_list("n_values");
        if (s.has("replications")) cfg.simulation.replications = s.integer("replications");
        if (s.has("seed")) cfg.simulation.seed = s.unsigned_integer("seed");
        if (s.has("nash_n_values")) cfg.simulation.nash_n_values = s.int_list("nash_n_values");
        s.finish();
    }
    if (top.has("sweep")) {
        Reader s(top.raw("sweep"), "sweep");
        SweepSpec sw;
        sw.parameter = s.string("parameter");
        sw.values = s.number_list("values");
        s.finish();
        cfg.sweep = sw;
    }
    if (top.has("outputs")) cfg.outputs = top.string("outputs");
    if (top.has("notes")) {
        const json& n = top.raw("notes");
        if (!n.is_array()) throw ValidationError("notes", "expected an array of strings");
        for (const auto& e : n) {
            if (!e.is_string()) throw ValidationError("notes", "expected strings");
            cfg.notes.push_back(e.get<std::string>());
        }
    }
    top.finish();
    cfg.validate();
    return cfg;
}

json config_to_json(const ScenarioConfig& cfg) {
    json j;
    j["name"] = cfg.name;
    j["regime"] = to_string(cfg.regime);
    j["market"] = {{"T", cfg.market.horizon},
                   {"delta", cfg.market.delta},
                   {"x0", cfg.market.x0},
                   {"z0", cfg.market.z0}};
    json dist = json::array();
    for (std::size_t k = 0; k < cfg.distribution.size(); ++k) {
        const AgentClass& c = cfg.distribution.cls(k);
        json e{{"mu", c.mu}, {"sigma", c.sigma}, {risk_key(cfg.regime), c.risk},
               {"theta", c.theta}, {"weight", cfg.distribution.weight(k)}};
        if (c.terminal_theta) e["terminal_theta"] = *c.terminal_theta;
        dist.push_back(e);
    }
    j["distribution"] = dist;
    j["grid"] = {{"n_steps", cfg.n_steps}};
    json solver{{"damping", cfg.solver.damping}};
    if (cfg.solver.tol) solver["tol"] = *cfg.solver.tol;
    if (cfg.solver.max_iter) solver["max_iter"] = *cfg.solver.max_iter;
    j["solver"] = solver;
    j["simulation"] = {{"n_values", cfg.simulation.n_values},
                       {"replications", cfg.simulation.replications},
                       {"seed", cfg.simulation.seed},
                       {"nash_n_values", cfg.simulation.nash_n_values}};
    if (cfg.sweep) j["sweep"] = {{"parameter", cfg.sweep->parameter}, {"values", cfg.sweep->values}};
    j["outputs"] = cfg.outputs;
    if (!cfg.notes.empty()) j["notes"] = cfg.notes;
    return j;
}

ScenarioConfig load_config(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("config", "cannot open " + path.string());
    json j;
    try {
        j = json::parse(f);
    } catch (const json::parse_error& e) {
        throw ValidationError("config", std::string("malformed JSON: ") + e.what());
    }
    return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Presets: the constants of the numerical section, one base case each plus the
// sweep its figure varies.

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{
        "fig1-low", "fig1-high", "fig2-low", "fig2-high", "fig3-low",
        "fig3-high", "fig4-hetero", "fig5-highwealth", "fig5-lowwealth"};
    return names;
}

ScenarioConfig preset_config(const std::string& name) {
    auto single = [](double p, double theta) {
        AgentClass c;
        c.mu = 0.2;
        c.sigma = 0.2;
        c.risk = p;
        c.theta = theta;
        return TypeDistribution::single(c);
    };
    ScenarioConfig cfg;
    cfg.name = name;
    cfg.regime = Regime::power;
    cfg.market.horizon = 1.0;
    cfg.market.delta = 0.1;
    cfg.market.x0 = 5.0;
    cfg.market.z0 = 1.0;
    cfg.outputs = "out/" + name;
    if (name == "fig1-low") {
        cfg.distribution = single(0.3, 1.0);
        cfg.sweep = SweepSpec{"p", {0.2, 0.3, 0.5}};
    } else if (name == "fig1-high") {
        cfg.market.z0 = 10.0;
        cfg.distribution = single(0.3, 1.0);
        cfg.sweep = SweepSpec{"p", {0.2, 0.3, 0.5, 0.8}};
    } else if (name == "fig2-low") {
        cfg.distribution = single(0.3, 1.0);
        cfg.sweep = SweepSpec{"delta", {0.1, 0.3, 0.5}};
    } else if (name == "fig2-high") {
        cfg.market.x0 = 8.0;
        cfg.market.z0 = 10.0;
        cfg.distribution = single(0.8, 1.0);
        cfg.sweep = SweepSpec{"delta", {0.1, 0.3, 0.5}};
    } else if (name == "fig3-low") {
        cfg.distribution = single(0.3, 1.0);
        cfg.sweep = SweepSpec{"theta", {0.5, 0.8, 1.0}};
    } else if (name == "fig3-high") {
        cfg.market.z0 = 10.0;
        cfg.distribution = single(0.3, 1.0);
        cfg.sweep = SweepSpec{"theta", {0.5, 0.8, 1.0}};
    } else if (name == "fig4-hetero") {
        AgentClass a, b;
        a.mu = 0.2;
        a.sigma = 0.2;
        a.risk = 0.2;
        a.theta = 1.0;
        b.mu = 0.4;
        b.sigma = 0.2;
        b.risk = 0.5;
        b.theta = 1.0;
        cfg.distribution = TypeDistribution({a, b}, {0.7, 0.3});
    } else if (name == "fig5-highwealth" || name == "fig5-lowwealth") {
        cfg.market.x0 = name == "fig5-highwealth" ? 10.0 : 1.0;
        cfg.market.z0 = 5.0;
        cfg.distribution = single(0.5, 1.0);
        cfg.sweep = SweepSpec{"terminal_theta", {1.0, 0.0}};
        cfg.notes.push_back(
            "terminal_theta=0 approximates the habit-only model without relative wealth "
            "concerns; it keeps habit competition and drops the terminal wealth benchmark");
    } else {
        std::string known;
        for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
        throw ValidationError("preset", "unknown preset '" + name + "' (known: " + known + ")");
    }
    return cfg;
}

ScenarioConfig exponential_analogue(const ScenarioConfig& cfg) {
    ScenarioConfig out = cfg;
    out.regime = Regime::exponential;
    out.name = cfg.name + "-exp";
    if (out.sweep && out.sweep->parameter == "p") out.sweep->parameter = "beta";
    return out;
}

ScenarioConfig with_parameter(const ScenarioConfig& cfg, const std::string& parameter,
                              double value) {
    validate_sweep_parameter(parameter, cfg.regime, "sweep.parameter");
    ScenarioConfig out = cfg;
    out.sweep.reset();
    if (parameter == "delta") {
        out.market.delta = value;
    } else if (parameter == "z0") {
        out.market.z0 = value;
    } else if (parameter == "x0") {
        out.market.x0 = value;
    } else {
        std::vector<AgentClass> classes = cfg.distribution.classes();
        for (AgentClass& c : classes) {
            if (parameter == "p" || parameter == "beta") c.risk = value;
            if (parameter == "theta") c.theta = value;
            if (parameter == "terminal_theta") c.terminal_theta = value;
        }
        out.distribution = TypeDistribution(std::move(classes), cfg.distribution.weights());
    }
    out.market.validate(out.regime);
    out.distribution.validate(out.regime);
    return out;
}

// ---------------------------------------------------------------------------

const GridPath& SolveResult::zbar() const { return exp ? exp->zbar : power.value().zbar; }
double SolveResult::xbar_T() const { return exp ? exp->xbar_T : power.value().xbar_T; }
double SolveResult::residual() const { return exp ? exp->residual : power.value().residual; }
int SolveResult::iterations() const { return exp ? exp->iterations : power.value().iterations; }

SolveResult solve_scenario(const ScenarioConfig& cfg) {
    cfg.validate();
    const TimeGrid grid(cfg.market.horizon, cfg.n_steps);
    SolveResult res;
    res.regime = cfg.regime;
    if (cfg.regime == Regime::exponential) {
        res.exp = solve_exp_mfe(cfg.distribution, cfg.market, grid, cfg.solver.tol.value_or(1e-11),
                                cfg.solver.max_iter.value_or(500));
    } else {
        PowerSolverOptions o;
        o.tol = cfg.solver.tol.value_or(o.tol);
        o.max_iter = cfg.solver.max_iter.value_or(o.max_iter);
        o.damping = cfg.solver.damping;
        res.power = solve_power_mfe(cfg.distribution, cfg.market, grid, o);
        res.bounds = power_constants(cfg.distribution, cfg.market, grid);
    }
    return res;
}

EquilibriumTable equilibrium_table(const ScenarioConfig& cfg, const SolveResult& res) {
    const GridPath& z = res.zbar();
    const TimeGrid& g = z.grid();
    const double xbar = res.xbar_T();
    const std::size_t K = cfg.distribution.size();
    EquilibriumTable tab;
    tab.header = {"t", "zbar"};
    std::vector<std::vector<double>> cols;
    auto add = [&](const std::string& name, std::vector<double> v) {
        tab.header.push_back(name);
        cols.push_back(std::move(v));
    };
    if (cfg.regime == Regime::exponential) {
        const GridPath ec = exp_mean_consumption_path(cfg.distribution, cfg.market, z, xbar);
        add("mean_consumption", {ec.values().begin(), ec.values().end()});
        std::vector<ExpClassSchedule> s;
        for (std::size_t k = 0; k < K; ++k) {
            s.push_back(exp_class_schedule(cfg.distribution.cls(k), cfg.market, z, xbar));
        }
        for (std::size_t k = 0; k < K; ++k) add("pi_star" + class_suffix(k), s[k].pi_star);
        for (std::size_t k = 0; k < K; ++k) {
            std::vector<double> c(g.size());
            for (std::size_t j = 0; j < g.size(); ++j) {
                const double u = cfg.market.horizon + 1.0 - g.node(j);
                c[j] = s[k].mean_wealth[j] / u + s[k].consumption_offset[j];
            }
            add("c_star_at_mean_wealth" + class_suffix(k), std::move(c));
        }
    } else {
        std::vector<std::vector<double>> frac(K), wealth(K);
        for (std::size_t k = 0; k < K; ++k) {
            const auto c = power_consumption_path(cfg.distribution.cls(k), cfg.market, z, xbar);
            const auto f = power_mean_wealth_path(cfg.distribution.cls(k), cfg.market, z, xbar);
            frac[k].assign(c.values().begin(), c.values().end());
            wealth[k].assign(f.values().begin(), f.values().end());
        }
        for (std::size_t k = 0; k < K; ++k) {
            const double pi = power_class_constants(cfg.distribution.cls(k), cfg.market).pi_star;
            add("pi_star" + class_suffix(k), std::vector<double>(g.size(), pi));
        }
        for (std::size_t k = 0; k < K; ++k) add("c_star_fraction" + class_suffix(k), frac[k]);
        for (std::size_t k = 0; k < K; ++k) {
            std::vector<double> s(g.size());
            for (std::size_t j = 0; j < g.size(); ++j) s[j] = frac[k][j] * wealth[k][j];
            add("spending_rate" + class_suffix(k), std::move(s));
        }
        for (std::size_t k = 0; k < K; ++k) add("mean_wealth" + class_suffix(k), wealth[k]);
    }
    for (std::size_t j = 0; j < g.size(); ++j) {
        std::vector<double> row{g.node(j), z[j]};
        for (const auto& c : cols) row.push_back(c[j]);
        tab.rows.push_back(std::move(row));
    }
    return tab;
}

void write_csv(std::ostream& os, const EquilibriumTable& table) {
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        os << (i ? "," : "") << table.header[i];
    }
    os << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_number(row[i]);
        os << '\n';
    }
}

json summary_json(const ScenarioConfig& cfg, const SolveResult& res) {
    json j;
    j["name"] = cfg.name;
    j["regime"] = to_string(cfg.regime);
    j["xbar_T"] = res.xbar_T();
    j["residual"] = res.residual();
    j["iterations"] = res.iterations();
    j["n_steps"] = cfg.n_steps;
    if (res.exp) {
        j["diagnostics"] = {{"phi_residual", res.exp->phi_residual},
                            {"xbar_residual", res.exp->xbar_residual}};
    } else {
        j["diagnostics"] = {{"habit_residual", res.power->habit_residual},
                            {"xbar_residual", res.power->xbar_residual}};
        j["bounds"] = {{"c0", res.bounds->c0}, {"c1", res.bounds->c1}, {"c2", res.bounds->c2},
                       {"m_T", res.bounds->m_path.back()}};
    }
    j["config"] = config_to_json(cfg);
    if (!cfg.notes.empty()) j["notes"] = cfg.notes;
    return j;
}

json run_solve(const ScenarioConfig& cfg, const fs::path& out) {
    const SolveResult res = solve_scenario(cfg);
    const EquilibriumTable tab = equilibrium_table(cfg, res);
    std::ostringstream csv;
    write_csv(csv, tab);
    fs::create_directories(out);
    write_text(out / "equilibrium.csv", csv.str());
    json summary = summary_json(cfg, res);
    write_json(out / "summary.json", summary);
    return summary;
}

json run_sweep(const ScenarioConfig& cfg, const SweepSpec& sweep, const fs::path& out) {
    validate_sweep_parameter(sweep.parameter, cfg.regime, "sweep.parameter");
    if (sweep.values.empty()) throw ValidationError("sweep.values", "empty value list");
    fs::create_directories(out);
    std::ostringstream csv;
    bool header_done = false;
    json legs = json::array(), failures = json::array();
    for (double v : sweep.values) {
        const std::string label = sweep.parameter + "_" + short_number(v);
        try {
            ScenarioConfig leg = with_parameter(cfg, sweep.parameter, v);
            leg.name = cfg.name + "/" + label;
            const SolveResult res = solve_scenario(leg);
            const EquilibriumTable tab = equilibrium_table(leg, res);
            if (!header_done) {
                csv << "sweep_value,xbar_T";
                for (const auto& h : tab.header) csv << ',' << h;
                csv << '\n';
                header_done = true;
            }
            for (const auto& row : tab.rows) {
                csv << format_number(v) << ',' << format_number(res.xbar_T());
                for (double x : row) csv << ',' << format_number(x);
                csv << '\n';
            }
            const fs::path dir = out / label;
            fs::create_directories(dir);
            std::ostringstream leg_csv;
            write_csv(leg_csv, tab);
            write_text(dir / "equilibrium.csv", leg_csv.str());
            json s = summary_json(leg, res);
            write_json(dir / "summary.json", s);
            legs.push_back({{"value", v}, {"directory", label}, {"xbar_T", res.xbar_T()},
                            {"residual", res.residual()}, {"iterations", res.iterations()}});
        } catch (const std::exception& e) {
            json err = error_json(e);
            err["value"] = v;
            failures.push_back(err);
        }
    }
    if (header_done) write_text(out / "sweep.csv", csv.str());
    json summary{{"name", cfg.name},
                 {"regime", to_string(cfg.regime)},
                 {"sweep", {{"parameter", sweep.parameter}, {"values", sweep.values}}},
                 {"legs", legs},
                 {"failures", failures},
                 {"config", config_to_json(cfg)}};
    if (!cfg.notes.empty()) summary["notes"] = cfg.notes;
    write_json(out / "summary.json", summary);
    return summary;
}

json run_convergence(const ScenarioConfig& cfg, const fs::path& out, unsigned threads) {
    const SolveResult res = solve_scenario(cfg);
    const CandidateModel model = res.exp ? CandidateModel(cfg.distribution, cfg.market, *res.exp)
                                         : CandidateModel(cfg.distribution, cfg.market, *res.power);
    const auto& sim = cfg.simulation;
    const SimReport rep =
        convergence_study(model, sim.n_values, sim.replications, sim.seed, threads);
    const bool power = cfg.regime == Regime::power;

    std::ostringstream csv;
    csv << "n,epsilon_n,sup_z_mse,x_mse" << (power ? ",x_gamma_mse" : "") << ",gap\n";
    for (std::size_t i = 0; i < rep.n_values.size(); ++i) {
        csv << rep.n_values[i] << ',' << format_number(rep.epsilon_n[i]) << ','
            << format_number(rep.sup_z_mse[i]) << ',' << format_number(rep.x_mse[i]);
        if (power) csv << ',' << format_number(rep.x_gamma_mse[i]);
        csv << ',' << format_number(rep.gap_estimates[i]) << '\n';
    }

    auto fit_json = [](const LogLogFit& f) {
        json j{{"exact_match", f.exact_match}, {"valid", f.valid}, {"points", f.points}};
        if (f.valid) {
            j["slope"] = f.slope;
            j["intercept"] = f.intercept;
            if (std::isfinite(f.slope_stderr)) j["slope_stderr"] = f.slope_stderr;
        }
        return j;
    };
    json fits{{"sup_z_mse", fit_json(rep.z_fit)}, {"x_mse", fit_json(rep.x_fit)}};
    if (power) fits["x_gamma_mse"] = fit_json(rep.x_gamma_fit);

    json nash = json::array();
    const auto family = default_deviation_family();
    for (int n : sim.nash_n_values) {
        const NashProbeResult p =
            nash_gap_probe(model, n, family, sim.replications, sim.seed, threads);
        std::size_t best = 0;
        for (std::size_t d = 0; d < family.size(); ++d) {
            if (family[d].is_candidate()) continue;
            if (family[best].is_candidate() || p.gain[d] > p.gain[best]) best = d;
        }
        nash.push_back({{"n", n},
                        {"max_gain", p.max_gain},
                        {"max_gain_unclipped", p.max_gain_unclipped},
                        {"best_deviation",
                         {{"investment_multiplier", family[best].investment_multiplier},
                          {"consumption_tilt", family[best].consumption_tilt}}},
                        {"best_gain_stderr", p.gain_stderr[best]},
                        {"best_gain_mean_field", p.gain_mf[best]},
                        {"objective_gap", p.objective_gap},
                        {"decomposition_bound", p.decomposition_bound},
                        {"domain_errors", p.domain_errors}});
    }

    fs::create_directories(out);
    write_text(out / "convergence.csv", csv.str());
    json summary{{"name", cfg.name},
                 {"regime", to_string(cfg.regime)},
                 {"xbar_T", res.xbar_T()},
                 {"residual", res.residual()},
                 {"replications", sim.replications},
                 {"seed", sim.seed},
                 {"fits", fits},
                 {"nash", nash},
                 {"config", config_to_json(cfg)}};
    if (rep.z_fit.valid) {
        summary["slope"] = rep.slope;
        summary["slope_stderr"] = rep.slope_stderr;
    }
    write_json(out / "summary.json", summary);
    return summary;
}

// ---------------------------------------------------------------------------

json error_json(const std::exception& e) {
    json j{{"message", e.what()}};
    if (auto* v = dynamic_cast<const ValidationError*>(&e)) {
        j["error"] = "validation";
        j["field"] = v->field();
    } else if (auto* n = dynamic_cast<const NonConvergence*>(&e)) {
        j["error"] = "non_convergence";
        j["iterations"] = n->iterations();
        if (std::isfinite(n->residual())) j["residual"] = n->residual();
    } else if (dynamic_cast<const BracketFailure*>(&e)) {
        j["error"] = "bracket_failure";
    } else if (dynamic_cast<const DomainError*>(&e)) {
        j["error"] = "domain";
    } else if (dynamic_cast<const GridMismatch*>(&e)) {
        j["error"] = "grid_mismatch";
    } else {
        j["error"] = "runtime";
    }
    return j;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const GridMismatch*>(&e)) return 2;
    if (dynamic_cast<const NonConvergence*>(&e) || dynamic_cast<const BracketFailure*>(&e) ||
        dynamic_cast<const DomainError*>(&e)) {
        return 3;
    }
    return 1;
}

}  // namespace habitmfg
