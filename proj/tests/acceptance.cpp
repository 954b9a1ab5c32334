// Acceptance run: one PASS/FAIL line per criterion, details indented below it.
// Exit status is nonzero when any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "habitmfg/exp_mfg.hpp"
#include "habitmfg/nagent.hpp"
#include "habitmfg/power_mfg.hpp"
#include "habitmfg/scenario.hpp"

using namespace habitmfg;

namespace {

int failures = 0;

void verdict(const char* name, bool pass) {
    std::printf("%s %s\n", pass ? "PASS" : "FAIL", name);
    std::fflush(stdout);
    if (!pass) ++failures;
}

__attribute__((format(printf, 1, 2))) void detail(const char* fmt, ...) {
    std::va_list ap;
    va_start(ap, fmt);
    std::printf("    ");
    std::vprintf(fmt, ap);
    std::printf("\n");
    va_end(ap);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Every sweep leg of a preset as its own config (the base config when there is no sweep).
std::vector<ScenarioConfig> legs_of(const ScenarioConfig& cfg) {
    if (!cfg.sweep) return {cfg};
    std::vector<ScenarioConfig> out;
    for (double v : cfg.sweep->values) {
        auto leg = with_parameter(cfg, cfg.sweep->parameter, v);
        char label[64];
        std::snprintf(label, sizeof label, " %s=%g", cfg.sweep->parameter.c_str(), v);
        leg.name = cfg.name + label;
        leg.sweep.reset();
        out.push_back(leg);
    }
    return out;
}

ScenarioConfig base_of(const std::string& preset, int n_steps) {
    auto cfg = preset_config(preset);
    cfg.sweep.reset();
    cfg.n_steps = n_steps;
    return cfg;
}

const std::vector<std::string> fig123 = {"fig1-low", "fig1-high", "fig2-low",
                                         "fig2-high", "fig3-low", "fig3-high"};

// Consistency of the habit path with the mean consumption E[C*] computed from
// the strategy. `differential` is Zbar_j - z0 - int_0^{t_j} delta (E[C*] - Zbar)
// by the grid trapezoid, the form the discrete fixed point satisfies.
// `integrating_factor` is the same identity written as
// Zbar_t = e^{-delta t}(z0 + int delta e^{delta s} E[C*] ds) with the nodal
// trapezoid; the two differ by the O(h^2) quadrature error.
struct Consistency {
    double differential = 0.0;
    double integrating_factor = 0.0;
};

Consistency exp_consistency(const ScenarioConfig& cfg, const ExpEquilibrium& eq) {
    const GridPath ec = exp_mean_consumption_path(cfg.distribution, cfg.market, eq.zbar, eq.xbar_T);
    const TimeGrid& g = eq.zbar.grid();
    const double d = cfg.market.delta, h = g.step(), z0 = cfg.market.z0;
    Consistency out;
    out.differential = out.integrating_factor = std::abs(eq.zbar[0] - z0);
    double acc_d = 0.0, acc_if = 0.0;
    for (std::size_t j = 1; j < g.size(); ++j) {
        acc_d += 0.5 * h * d * ((ec[j - 1] - eq.zbar[j - 1]) + (ec[j] - eq.zbar[j]));
        acc_if += 0.5 * h * d * (std::exp(d * g.node(j - 1)) * ec[j - 1] + std::exp(d * g.node(j)) * ec[j]);
        out.differential = std::max(out.differential, std::abs(eq.zbar[j] - z0 - acc_d));
        out.integrating_factor =
            std::max(out.integrating_factor, std::abs(eq.zbar[j] - std::exp(-d * g.node(j)) * (z0 + acc_if)));
    }
    return out;
}

void exponential_solver() {
    bool ok = true;
    for (const auto& name : fig123) {
        auto cfg = exponential_analogue(preset_config(name));
        cfg.n_steps = 1000;
        for (const auto& leg : legs_of(cfg)) {
            const auto t0 = std::chrono::steady_clock::now();
            std::optional<ExpEquilibrium> sol;
            try {
                sol = solve_exp_mfe(leg.distribution, leg.market, TimeGrid(leg.market.horizon, 1000),
                                   1e-11, 500);
            } catch (const std::exception& e) {
                detail("%-22s error: %s", leg.name.c_str(), e.what());
                ok = false;
                continue;
            }
            const double secs = seconds_since(t0);
            const ExpEquilibrium& eq = *sol;
            const Consistency gap = exp_consistency(leg, eq);
            const bool pass =
                eq.residual < 1e-9 && eq.iterations <= 500 && gap.differential < 1e-8 && secs < 5.0;
            ok = ok && pass;
            detail("%-30s residual %.2e  iterations %3d  consistency %.2e (integrating-factor trapezoid %.2e)  %.3f s",
                   leg.name.c_str(), eq.residual, eq.iterations, gap.differential,
                   gap.integrating_factor, secs);
        }
    }
    detail("the integrating-factor column uses the nodal trapezoid on e^{delta s} E[C*], an O(h^2) quadrature");
    detail("error that reaches 1e-7 when delta = 0.5 and z0 = 10; it is not a property of the fixed point");
    verdict("exponential solver: residual < 1e-9 at N=1000, consistency < 1e-8, < 5 s", ok);
}

void theta_zero_oracle() {
    AgentClass c;
    c.mu = 0.2;
    c.sigma = 0.2;
    c.risk = 1.0;
    c.theta = 0.0;
    MarketParams m;
    m.delta = 0.1;
    m.x0 = 5.0;
    m.z0 = 1.0;
    const TimeGrid g(1.0, 2000);
    const auto eq = solve_exp_mfe(TypeDistribution::single(c), m, g, 1e-12, 500);
    // dZ = -delta Z + delta (2.875 + 0.5 t), Z(0) = 1
    double err = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
        const double t = g.node(j);
        err = std::max(err, std::abs(eq.zbar[j] - (-2.125 + 0.5 * t + 3.125 * std::exp(-0.1 * t))));
    }
    detail("Zbar(1) = %.8f (closed form %.8f), sup error %.2e", eq.zbar.back(),
           -1.625 + 3.125 * std::exp(-0.1), err);
    detail("the quoted 1.88124 comes from a closed form with Zbar(0) = 1.75, not z0 = 1");
    verdict("theta=0 exponential oracle: sup error <= 1e-6 at N=2000", err <= 1e-6);
}

void constant_habit_probe() {
    AgentClass c;
    c.mu = 0.2;
    c.sigma = 0.2;
    c.risk = 1.0;
    c.theta = 1.0;
    MarketParams m;
    bool ok = true;
    for (int n : {10, 1000}) {
        const TimeGrid g(1.0, n);
        const double x = exp_decoupled_xbar(GridPath(g, 1.0), TypeDistribution::single(c), m);
        detail("N=%-5d Xbar_T = %.15f", n, x);
        ok = ok && std::abs(x - 5.75) <= 1e-9;
    }
    verdict("constant-habit probe: exp_decoupled_xbar = 5.75 +- 1e-9", ok);
}

void power_solver() {
    bool ok = true;
    for (const auto& name : preset_names()) {
        auto cfg = preset_config(name);
        cfg.n_steps = 1000;
        for (const auto& leg : legs_of(cfg)) {
            const auto t0 = std::chrono::steady_clock::now();
            SolveResult res;
            try {
                res = solve_scenario(leg);
            } catch (const std::exception& e) {
                detail("%-26s error: %s", leg.name.c_str(), e.what());
                ok = false;
                continue;
            }
            const double secs = seconds_since(t0);
            const auto& eq = *res.power;
            const auto& b = *res.bounds;
            bool hat = true;
            for (std::size_t j = 0; j < eq.zhat.size(); ++j) {
                hat = hat && eq.zhat[j] >= leg.market.z0 && eq.zhat[j] <= b.m_path[j];
            }
            // C0 and C1 coincide with Xbar_T to the last ulps when consumption is
            // negligible (fig2-high), hence the rounding slack on the lower side.
            const double slack = 1e-12 * b.c2;
            const bool bounds = hat && eq.xbar_T <= b.c2 && eq.xbar_T >= b.c0 - slack &&
                                eq.xbar_T >= b.c1 - slack;
            const bool pass = eq.residual < 1e-8 && bounds && secs < 30.0;
            ok = ok && pass;
            detail("%-32s residual %.2e  it %4d  C0 %.6g <= C1 %.6g <= Xbar %.6g <= C2 %.6g  %s  %.2f s",
                   leg.name.c_str(), eq.residual, eq.iterations, b.c0, b.c1, eq.xbar_T, b.c2,
                   hat ? "z0<=Zhat<=M" : "Zhat OUT OF BOUNDS", secs);
        }
    }
    verdict("power solver: residual < 1e-8, bounds hold, < 30 s at N=1000", ok);
}

void power_spot_checks() {
    MarketParams m;
    AgentClass c;
    c.risk = 0.5;
    const double pi = power_class_constants(c, m).pi_star;
    const TimeGrid g(1.0, 200);
    const double c2 = power_constants(TypeDistribution::single(c), m, g).c2;
    AgentClass c3 = c;
    c3.risk = 0.3;
    const double c2b = power_constants(TypeDistribution::single(c3), m, g).c2;

    auto cfg = base_of("fig1-low", 1000);
    const auto res = solve_scenario(cfg);
    const auto& k = cfg.distribution.cls(0);
    const double gT = power_g(cfg.n_steps, k, cfg.market, res.power->zbar, res.power->xbar_T);
    const double want = std::pow(res.power->xbar_T, -k.risk * k.theta);

    detail("pi* = %.15g", pi);
    detail("g(T) = %.15g, Xbar_T^(-p theta) = %.15g", gT, want);
    detail("C2(p=0.5) = %.17g, C2(p=0.3) = %.8f", c2, c2b);
    verdict("power spot checks: pi*=10, g(T), C2=5, C2(0.3)=7.52026",
            std::abs(pi - 10.0) < 1e-12 && std::abs(gT - want) <= 1e-12 &&
                std::abs(c2 - 5.0) < 1e-15 && std::abs(c2b - 7.52026) < 1e-4);
}

CandidateModel model_for(const ScenarioConfig& cfg) {
    const auto res = solve_scenario(cfg);
    return res.exp ? CandidateModel(cfg.distribution, cfg.market, *res.exp)
                   : CandidateModel(cfg.distribution, cfg.market, *res.power);
}

bool in_band(const LogLogFit& f) { return f.valid && f.slope >= -1.3 && f.slope <= -0.7; }

void convergence_rates() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<int> ns{16, 64, 256, 1024, 4096};
    bool ok = true;
    for (bool power : {false, true}) {
        auto cfg = base_of("fig1-low", 1000);
        if (!power) cfg = exponential_analogue(cfg);
        const auto rep = convergence_study(model_for(cfg), ns, 64, 2024);
        detail("%s regime (%s), N=1000, 64 replications, seed 2024", power ? "power" : "exponential",
               cfg.name.c_str());
        for (std::size_t i = 0; i < ns.size(); ++i) {
            if (power) {
                detail("  n=%-5d sup_z_mse %.3e  x_mse %.3e  x_gamma_mse %.3e", ns[i], rep.sup_z_mse[i],
                       rep.x_mse[i], rep.x_gamma_mse[i]);
            } else {
                detail("  n=%-5d sup_z_mse %.3e  x_mse %.3e", ns[i], rep.sup_z_mse[i], rep.x_mse[i]);
            }
        }
        detail("  slopes: z %.3f +- %.3f, x %.3f +- %.3f", rep.z_fit.slope, rep.z_fit.slope_stderr,
               rep.x_fit.slope, rep.x_fit.slope_stderr);
        ok = ok && in_band(rep.z_fit) && in_band(rep.x_fit);
        if (power) {
            detail("  slope x_gamma %.3f +- %.3f", rep.x_gamma_fit.slope, rep.x_gamma_fit.slope_stderr);
            ok = ok && in_band(rep.x_gamma_fit);
        }
    }
    const double secs = seconds_since(t0);
    detail("total %.1f s", secs);
    verdict("convergence rate: slopes in [-1.3, -0.7], < 5 min", ok && secs < 300.0);
}

void nash_trend() {
    bool ok = true;
    const auto family = default_deviation_family();
    for (bool power : {false, true}) {
        auto cfg = base_of("fig1-low", 1000);
        if (!power) cfg = exponential_analogue(cfg);
        const auto model = model_for(cfg);
        const auto lo = nash_gap_probe(model, 64, family, 64, 2024);
        const auto hi = nash_gap_probe(model, 1024, family, 64, 2024);
        detail("%s regime: max positive gain n=64 %.3e, n=1024 %.3e", power ? "power" : "exponential",
               lo.max_gain, hi.max_gain);
        detail("  best deviation gain (unclipped) %.3e -> %.3e, objective gap %.3e -> %.3e",
               lo.max_gain_unclipped, hi.max_gain_unclipped, lo.objective_gap, hi.objective_gap);
        detail("  decomposition bound %.3e -> %.3e", lo.decomposition_bound, hi.decomposition_bound);
        ok = ok && hi.max_gain < lo.max_gain;
    }
    detail("no deviation in the family gains at either n, so the positive part is 0 at both");
    verdict("Nash-gap trend: max positive gain at n=1024 below n=64", ok);
}

struct Peak {
    std::size_t index;
    bool interior;
};

// Interior maximum: the argmax is not an endpoint and beats both endpoints.
Peak peak_of(const std::vector<double>& v) {
    const auto it = std::max_element(v.begin(), v.end());
    const std::size_t j = static_cast<std::size_t>(it - v.begin());
    return {j, j > 0 && j + 1 < v.size() && *it > v.front() && *it > v.back()};
}

bool increasing(const std::vector<double>& v) {
    for (std::size_t j = 1; j < v.size(); ++j) {
        if (!(v[j] > v[j - 1])) return false;
    }
    return true;
}

// Columns of one class from a solved power scenario: consumption fraction c*
// and spending rate c* E[X*].
struct ConsumptionPaths {
    std::vector<double> fraction, spending;
};

ConsumptionPaths consumption_of(const ScenarioConfig& cfg, const PowerEquilibrium& eq, std::size_t k) {
    const auto& cls = cfg.distribution.cls(k);
    const GridPath c = power_consumption_path(cls, cfg.market, eq.zbar, eq.xbar_T);
    const GridPath f = power_mean_wealth_path(cls, cfg.market, eq.zbar, eq.xbar_T);
    ConsumptionPaths out;
    for (std::size_t j = 0; j < c.size(); ++j) {
        out.fraction.push_back(c[j]);
        out.spending.push_back(c[j] * f[j]);
    }
    return out;
}

void qualitative() {
    const int N = 1000;
    // (a)
    bool a = true;
    for (const char* name : {"fig1-low", "fig1-high"}) {
        std::vector<double> pis;
        for (double p : {0.2, 0.3, 0.5}) {
            auto cfg = with_parameter(base_of(name, N), "p", p);
            const auto res = solve_scenario(cfg);
            pis.push_back(power_strategy(0, cfg.distribution.cls(0), cfg.market, res.power->zbar,
                                         res.power->xbar_T)
                              .pi_star);
        }
        detail("(a) %s pi* at p=0.2,0.3,0.5: %.4f %.4f %.4f", name, pis[0], pis[1], pis[2]);
        a = a && increasing(pis);
    }
    verdict("qualitative (a): pi* strictly increasing in p", a);

    // (b)
    bool b = true;
    for (const char* name : {"fig3-low", "fig3-high"}) {
        std::vector<double> zT;
        for (double th : {0.5, 0.8, 1.0}) {
            zT.push_back(solve_scenario(with_parameter(base_of(name, N), "theta", th)).zbar().back());
        }
        const bool low = std::string(name) == "fig3-low";
        detail("(b) %s Zbar_T at theta=0.5,0.8,1.0: %.6f %.6f %.6f", name, zT[0], zT[1], zT[2]);
        if (!low) std::reverse(zT.begin(), zT.end());
        b = b && increasing(zT);
    }
    verdict("qualitative (b): fig3 Zbar_T increasing in theta (low habit), decreasing (high habit)", b);

    // (c) The plotted "MFE consumption c" is the fraction of wealth consumed; the
    // spending rate c f is shown alongside.
    bool hump = false, monotone = false;
    for (double d : {0.1, 0.3, 0.5}) {
        auto cfg = with_parameter(base_of("fig2-high", N), "delta", d);
        const auto res = solve_scenario(cfg);
        const auto paths = consumption_of(cfg, *res.power, 0);
        const Peak pc = peak_of(paths.fraction), ps = peak_of(paths.spending);
        detail("(c) fig2-high delta=%.1f: c argmax t=%.3f%s, c f argmax t=%.3f%s, c(0)=%.3e c(T)=%.3e",
               d, pc.index / double(N), pc.interior ? " (interior)" : "",
               ps.index / double(N), ps.interior ? " (interior)" : "", paths.fraction.front(),
               paths.fraction.back());
        if (d == 0.5) hump = pc.interior;
        if (d == 0.1) monotone = increasing(paths.fraction);
    }
    detail("hump at delta=0.5: %s; monotone increasing at delta=0.1: %s", hump ? "yes" : "no",
           monotone ? "yes" : "no");
    detail("Xbar_T is about 0.0044 here and Xbar_T^(-p/(1-p)) about 2.6e9, so the terminal");
    detail("wealth benchmark keeps c near 1e-14 and rising all the way to T");
    verdict("qualitative (c): fig2-high hump at delta=0.5, monotone for small delta", hump && monotone);

    // (d)
    {
        auto cfg = base_of("fig4-hetero", N);
        const auto res = solve_scenario(cfg);
        bool d = true;
        for (std::size_t k = 0; k < cfg.distribution.size(); ++k) {
            const auto paths = consumption_of(cfg, *res.power, k);
            const Peak pc = peak_of(paths.fraction), ps = peak_of(paths.spending);
            detail("(d) class %zu: c argmax t=%.3f%s, c f argmax t=%.3f%s", k + 1, pc.index / double(N),
                   pc.interior ? " (interior)" : "", ps.index / double(N),
                   ps.interior ? " (interior)" : "");
            d = d && pc.interior;
        }
        verdict("qualitative (d): fig4-hetero interior consumption maxima in both classes", d);
    }
}

// Ratio of successive sup-differences on N, 2N, 4N, compared on common nodes.
struct Refinement {
    double z_ratio, x_ratio, dz1, dz2, dx1, dx2;
};

Refinement refine(const std::function<std::pair<GridPath, double>(int)>& solve, int n0) {
    std::vector<std::pair<GridPath, double>> s;
    for (int k = 0; k < 3; ++k) s.push_back(solve(n0 << k));
    auto dz = [&](int k) {
        double w = 0.0;
        for (int j = 0; j <= n0; ++j) {
            w = std::max(w, std::abs(s[k].first[j << k] - s[k + 1].first[j << (k + 1)]));
        }
        return w;
    };
    Refinement r{};
    r.dz1 = dz(0);
    r.dz2 = dz(1);
    r.dx1 = std::abs(s[0].second - s[1].second);
    r.dx2 = std::abs(s[1].second - s[2].second);
    r.z_ratio = r.dz1 / r.dz2;
    r.x_ratio = r.dx1 / r.dx2;
    return r;
}

void grid_refinement() {
    bool ok = true;
    auto near4 = [](double r) { return r > 3.0 && r < 5.0; };
    {
        // theta = 1 makes the exponential habit path exact on any grid, so use a theta < 1 leg.
        auto cfg = with_parameter(exponential_analogue(base_of("fig3-low", 250)), "theta", 0.5);
        const auto r = refine(
            [&](int n) {
                const auto eq = solve_exp_mfe(cfg.distribution, cfg.market, TimeGrid(1.0, n), 1e-13, 500);
                return std::pair{eq.zbar, eq.xbar_T};
            },
            250);
        detail("exponential %s, N=250/500/1000: Zbar diffs %.3e %.3e ratio %.3f; Xbar_T diffs %.3e %.3e ratio %.3f",
               cfg.name.c_str(), r.dz1, r.dz2, r.z_ratio, r.dx1, r.dx2, r.x_ratio);
        ok = ok && near4(r.z_ratio) && near4(r.x_ratio);
    }
    {
        auto cfg = base_of("fig1-low", 250);
        PowerSolverOptions o;
        o.tol = 1e-13;
        const auto r = refine(
            [&](int n) {
                const auto eq = solve_power_mfe(cfg.distribution, cfg.market, TimeGrid(1.0, n), o);
                return std::pair{eq.zbar, eq.xbar_T};
            },
            250);
        detail("power %s, N=250/500/1000: Zbar diffs %.3e %.3e ratio %.3f; Xbar_T diffs %.3e %.3e ratio %.3f",
               cfg.name.c_str(), r.dz1, r.dz2, r.z_ratio, r.dx1, r.dx2, r.x_ratio);
        ok = ok && near4(r.z_ratio) && near4(r.x_ratio);
    }
    verdict("grid refinement: sup-difference ratio about 4 when N doubles", ok);
}

}  // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::pair<const char*, void (*)()>> steps{
        {"exponential solver", exponential_solver},
        {"theta=0 oracle", theta_zero_oracle},
        {"constant-habit probe", constant_habit_probe},
        {"power solver", power_solver},
        {"power spot checks", power_spot_checks},
        {"convergence rate", convergence_rates},
        {"Nash-gap trend", nash_trend},
        {"qualitative", qualitative},
        {"grid refinement", grid_refinement},
    };
    for (const auto& [name, fn] : steps) {
        try {
            fn();
        } catch (const std::exception& e) {
            detail("unexpected error: %s", e.what());
            verdict(name, false);
        }
    }
    std::printf("%d criteria failed, %.1f s\n", failures, seconds_since(t0));
    return failures == 0 ? 0 : 1;
}
