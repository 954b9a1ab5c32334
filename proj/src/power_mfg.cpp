#include "habitmfg/power_mfg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace habitmfg {

PowerClassConstants power_class_constants(const AgentClass& cls, const MarketParams& params) {
    const double p = cls.risk;
    const double s2 = cls.sharpe_sq();
    PowerClassConstants k{};
    k.a = 0.5 * s2 * p / ((1.0 - p) * (1.0 - p));
    k.gamma = cls.theta * p / (p - 1.0);
    k.kappa = cls.theta * p * params.delta / (1.0 - p);
    k.beta = params.delta / (1.0 - p) * (1.0 + cls.theta * p - p);
    k.growth = s2 / (1.0 - p);
    k.log_drift = 0.5 * s2 * (1.0 - 2.0 * p) / ((1.0 - p) * (1.0 - p));
    k.tau = p * cls.theta_terminal() / (1.0 - p);
    k.pi_star = cls.mu / ((1.0 - p) * cls.sigma * cls.sigma);
    return k;
}

namespace {

void require_positive(const GridPath& path, const char* name) {
    for (std::size_t j = 0; j < path.size(); ++j) {
        if (!(path[j] > 0.0)) {
            throw DomainError(std::string(name) + " must be positive (node " + std::to_string(j) +
                              " = " + std::to_string(path[j]) + ")");
        }
    }
}

void require_positive(double x, const char* name) {
    if (!(x > 0.0)) throw DomainError(std::string(name) + " must be positive");
}

// ---- un-hat route: works on zbar directly ---------------------------------

// bracket_j = e^{a(T-t_j)} Xbar^{-tau} + e^{-a t_j} int_{t_j}^T e^{a s} zbar_s^gamma ds
std::vector<double> g_bracket(const PowerClassConstants& k, const GridPath& zbar, double xbar_T) {
    require_positive(zbar, "zbar");
    require_positive(xbar_T, "xbar_T");
    const TimeGrid& g = zbar.grid();
    const double T = g.horizon();
    std::vector<double> w(g.size());
    for (std::size_t j = 0; j < w.size(); ++j) {
        w[j] = std::exp(k.a * (g.node(j) - T)) * std::pow(zbar[j], k.gamma);
    }
    // Scaled by e^{-aT} to keep the tail bounded for large a T.
    const GridPath tail = cumulative_tail_integral(GridPath(g, std::move(w)));
    const double lead = std::pow(xbar_T, -k.tau);
    std::vector<double> out(g.size());
    for (std::size_t j = 0; j < out.size(); ++j) {
        const double back = std::exp(k.a * (T - g.node(j)));
        out[j] = back * lead + back * tail[j];
    }
    return out;
}

std::vector<double> consumption_values(const PowerClassConstants& k, const GridPath& zbar,
                                       double xbar_T) {
    std::vector<double> c = g_bracket(k, zbar, xbar_T);
    for (std::size_t j = 0; j < c.size(); ++j) c[j] = std::pow(zbar[j], k.gamma) / c[j];
    return c;
}

// ---- hat route ---------------------------------------------------------------

// Xbar-independent pieces of Ghat_k on the grid:
// q_j = e^{kappa t_j} zhat_j^gamma, S_j = int_{t_j}^T e^{a(s-t_j)} q_s ds,
// decay_j = e^{a(T-t_j)}.
struct HatTail {
    PowerClassConstants k;
    std::vector<double> q, S, decay;
};

HatTail hat_tail(const AgentClass& cls, const MarketParams& params, const GridPath& zhat) {
    require_positive(zhat, "zhat");
    HatTail h{power_class_constants(cls, params), {}, {}, {}};
    const TimeGrid& g = zhat.grid();
    const std::size_t n = g.size();
    const double T = g.horizon();
    const double step = g.step();
    const double grow = std::exp(h.k.a * step);
    h.q.resize(n);
    h.S.resize(n);
    h.decay.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        h.q[j] = std::exp(h.k.kappa * g.node(j)) * std::pow(zhat[j], h.k.gamma);
        h.decay[j] = std::exp(h.k.a * (T - g.node(j)));
    }
    h.S[n - 1] = 0.0;
    for (std::size_t j = n - 1; j-- > 0;) {
        h.S[j] = grow * h.S[j + 1] + 0.5 * step * (h.q[j] + grow * h.q[j + 1]);
    }
    return h;
}

// Consumption fraction q_j Ghat_j at the given Xbar.
void hat_consumption(const HatTail& h, double xbar_T, std::vector<double>& out) {
    const double lead = std::pow(xbar_T, -h.k.tau);
    out.resize(h.q.size());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = h.q[j] / (h.decay[j] * lead + h.S[j]);
}

double trapezoid(const std::vector<double>& v, double step) {
    double acc = 0.0;
    for (std::size_t j = 0; j + 1 < v.size(); ++j) acc += v[j] + v[j + 1];
    return 0.5 * step * acc;
}

struct HatSystem {
    std::vector<HatTail> tails;
    std::vector<double> weights;
    double log_c2 = 0.0;
    double step = 0.0;

    HatSystem(const GridPath& zhat, const TypeDistribution& dist, const MarketParams& params,
              double log_c2_)
        : weights(dist.weights()), log_c2(log_c2_), step(zhat.grid().step()) {
        for (const auto& c : dist.classes()) tails.push_back(hat_tail(c, params, zhat));
    }

    double log_rhs(double xbar_T) const {
        std::vector<double> c;
        double acc = 0.0;
        for (std::size_t k = 0; k < tails.size(); ++k) {
            hat_consumption(tails[k], xbar_T, c);
            acc += weights[k] * trapezoid(c, step);
        }
        return log_c2 - acc;
    }
};

double log_c2_of(const TypeDistribution& dist, const MarketParams& params) {
    double acc = 0.0;
    for (std::size_t k = 0; k < dist.size(); ++k) {
        acc += dist.weight(k) * power_class_constants(dist.cls(k), params).log_drift;
    }
    return std::log(params.x0) + acc * params.horizon;
}

double solve_xbar(const HatSystem& sys, double lo, double hi, double tol) {
    auto h = [&](double x) { return std::log(x) - sys.log_rhs(x); };
    double f_lo = h(lo);
    double f_hi = h(hi);
    if (!(f_lo < 0.0) || !(f_hi >= 0.0)) {
        throw BracketFailure("terminal mean wealth equation", lo, hi, f_lo, f_hi);
    }
    if (f_hi == 0.0) return hi;
    // Relative stopping as well: Xbar can be tiny for aggressive portfolios.
    for (int it = 0; it < 400 && hi - lo > std::min(tol, tol * hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double f_mid = h(mid);
        if (f_mid < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

std::vector<double> phi2_values(const HatSystem& sys, const GridPath& zhat,
                                const MarketParams& params, double xbar_T) {
    const TimeGrid& g = zhat.grid();
    const std::size_t n = g.size();
    std::vector<double> phi(n, 0.0), c, cum(n);
    for (std::size_t k = 0; k < sys.tails.size(); ++k) {
        const HatTail& h = sys.tails[k];
        hat_consumption(h, xbar_T, c);
        cumulative_trapezoid(c, g.step(), cum);
        for (std::size_t j = 0; j < n; ++j) {
            const double t = g.node(j);
            const double fhat = params.x0 * std::exp(h.k.growth * t - cum[j]);
            phi[j] += sys.weights[k] * c[j] * fhat;
        }
    }
    for (std::size_t j = 0; j < n; ++j) phi[j] *= params.delta * std::exp(params.delta * g.node(j));
    std::vector<double> out(n);
    cumulative_trapezoid(phi, g.step(), out);
    for (double& v : out) v += params.z0;
    return out;
}

// Largest root of log C = log C2 - sum_k D_k C^{tau_k} on (0, C2].
double solve_c1(double log_c2, const std::vector<double>& d, const std::vector<double>& tau) {
    auto h = [&](double log_c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < d.size(); ++k) acc += d[k] * std::exp(tau[k] * log_c);
        return log_c - log_c2 + acc;
    };
    double hi = log_c2;
    double total = 0.0;
    for (std::size_t k = 0; k < d.size(); ++k) total += d[k] * std::exp(tau[k] * log_c2);
    // h(lo) <= -1 because C^{tau} <= C2^{tau} below C2.
    double lo = log_c2 - total - 1.0;
    double f_lo = h(lo), f_hi = h(hi);
    if (!(f_lo < 0.0) || !(f_hi >= 0.0)) throw BracketFailure("C1 equation", lo, hi, f_lo, f_hi);
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (h(mid) < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return std::exp(0.5 * (lo + hi));
}

}  // namespace

double power_g(std::size_t node, const AgentClass& cls, const MarketParams& params,
               const GridPath& zbar, double xbar_T) {
    const auto k = power_class_constants(cls, params);
    return std::pow(g_bracket(k, zbar, xbar_T).at(node), 1.0 - cls.risk);
}

PowerStrategy power_strategy(std::size_t node, const AgentClass& cls, const MarketParams& params,
                             const GridPath& zbar, double xbar_T) {
    const auto k = power_class_constants(cls, params);
    return {k.pi_star, consumption_values(k, zbar, xbar_T).at(node)};
}

GridPath power_consumption_path(const AgentClass& cls, const MarketParams& params,
                                const GridPath& zbar, double xbar_T) {
    return {zbar.grid(), consumption_values(power_class_constants(cls, params), zbar, xbar_T)};
}

GridPath power_mean_log_wealth_path(const AgentClass& cls, const MarketParams& params,
                                    const GridPath& zbar, double xbar_T) {
    const auto k = power_class_constants(cls, params);
    const std::vector<double> c = consumption_values(k, zbar, xbar_T);
    std::vector<double> cum(c.size());
    cumulative_trapezoid(c, zbar.grid().step(), cum);
    const double lx0 = std::log(params.x0);
    for (std::size_t j = 0; j < cum.size(); ++j) {
        cum[j] = lx0 + k.log_drift * zbar.grid().node(j) - cum[j];
    }
    return {zbar.grid(), std::move(cum)};
}

double power_mean_log_wealth(std::size_t node, const AgentClass& cls, const MarketParams& params,
                             const GridPath& zbar, double xbar_T) {
    return power_mean_log_wealth_path(cls, params, zbar, xbar_T)[node];
}

GridPath power_mean_wealth_path(const AgentClass& cls, const MarketParams& params,
                                const GridPath& zbar, double xbar_T) {
    const auto k = power_class_constants(cls, params);
    const std::vector<double> c = consumption_values(k, zbar, xbar_T);
    std::vector<double> cum(c.size());
    cumulative_trapezoid(c, zbar.grid().step(), cum);
    for (std::size_t j = 0; j < cum.size(); ++j) {
        cum[j] = params.x0 * std::exp(k.growth * zbar.grid().node(j) - cum[j]);
    }
    return {zbar.grid(), std::move(cum)};
}

GridPath power_hat_G_path(const AgentClass& cls, const MarketParams& params, const GridPath& zhat,
                          double xbar_T) {
    require_positive(xbar_T, "xbar_T");
    const HatTail h = hat_tail(cls, params, zhat);
    const double lead = std::pow(xbar_T, -h.k.tau);
    std::vector<double> out(h.q.size());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = 1.0 / (h.decay[j] * lead + h.S[j]);
    return {zhat.grid(), std::move(out)};
}

double power_hat_G(std::size_t node, const AgentClass& cls, const MarketParams& params,
                   const GridPath& zhat, double xbar_T) {
    return power_hat_G_path(cls, params, zhat, xbar_T).values()[node];
}

GridPath power_hat_f_path(const AgentClass& cls, const MarketParams& params, const GridPath& zhat,
                          double xbar_T) {
    require_positive(xbar_T, "xbar_T");
    const HatTail h = hat_tail(cls, params, zhat);
    std::vector<double> c, cum(h.q.size());
    hat_consumption(h, xbar_T, c);
    cumulative_trapezoid(c, zhat.grid().step(), cum);
    for (std::size_t j = 0; j < cum.size(); ++j) {
        cum[j] = params.x0 * std::exp(h.k.growth * zhat.grid().node(j) - cum[j]);
    }
    return {zhat.grid(), std::move(cum)};
}

double power_hat_f(std::size_t node, const AgentClass& cls, const MarketParams& params,
                   const GridPath& zhat, double xbar_T) {
    return power_hat_f_path(cls, params, zhat, xbar_T).values()[node];
}

PowerBounds power_constants(const TypeDistribution& dist, const MarketParams& params,
                            const TimeGrid& grid) {
    params.validate(Regime::power);
    dist.validate(Regime::power);
    const double T = params.horizon;
    const double log_c2 = log_c2_of(dist, params);
    const double log_z0 = std::log(params.z0);
    const std::size_t K = dist.size();

    std::vector<PowerClassConstants> ks;
    for (const auto& c : dist.classes()) ks.push_back(power_class_constants(c, params));

    // E in log space; the rate beta + a + growth is positive so the inner max
    // over t sits at T.
    double log_e = -std::numeric_limits<double>::infinity();
    for (const auto& k : ks) {
        const double rate = k.beta + k.a + k.growth;
        log_e = std::max(log_e, -k.a * T + k.gamma * log_z0 + k.tau * log_c2 +
                                    std::max(0.0, rate) * T);
    }
    log_e += std::log(params.delta * params.x0);

    PowerBounds b{0.0, 0.0, std::exp(log_c2), std::exp(log_e), GridPath(grid, params.z0), {}, {}};
    const double ek = b.e_const * static_cast<double>(K);
    b.m_path = GridPath::from_function(grid, [&](double t) { return ek * t + params.z0; });

    std::vector<double> tau(K);
    for (std::size_t i = 0; i < K; ++i) {
        const auto& k = ks[i];
        b.beta_k.push_back(k.beta);
        const double rate = k.kappa + k.a;
        const double integral = rate == 0.0 ? T : std::expm1(rate * T) / rate;
        b.d_k.push_back(std::exp(k.gamma * log_z0 - k.a * T) * integral);
        tau[i] = k.tau;
    }
    b.c1 = solve_c1(log_c2, b.d_k, tau);

    // C0 with the terminal term kept in the denominator; see Ghat <= 1/(e^{a(T-s)}
    // C2^{-tau} + int_s^T e^{a(v-s)} e^{kappa v} M(T)^gamma dv).
    const double log_mT = std::log(b.m_path.back());
    std::vector<double> integrand(grid.size(), 0.0);
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double s = grid.node(j);
        for (const auto& k : ks) {
            const double rate = k.a + k.kappa;
            // int_s^T e^{a(v-s)} e^{kappa v} dv = e^{kappa s} (e^{rate (T-s)} - 1) / rate
            const double inner = rate == 0.0 ? (T - s) : std::expm1(rate * (T - s)) / rate;
            const double denom = std::exp(k.a * (T - s) - k.tau * log_c2) +
                                 std::exp(k.kappa * s + k.gamma * log_mT) * inner;
            integrand[j] += std::exp(k.kappa * s + k.gamma * log_z0) / denom;
        }
    }
    b.c0 = std::exp(log_c2 - trapezoid(integrand, grid.step()));
    return b;
}

double power_xbar_rhs(const GridPath& zhat, const TypeDistribution& dist,
                      const MarketParams& params, double xbar_T) {
    require_positive(xbar_T, "xbar_T");
    const HatSystem sys(zhat, dist, params, log_c2_of(dist, params));
    return std::exp(sys.log_rhs(xbar_T));
}

double power_xbar_given_zhat(const GridPath& zhat, const TypeDistribution& dist,
                             const MarketParams& params, double tol) {
    const PowerBounds b = power_constants(dist, params, zhat.grid());
    const HatSystem sys(zhat, dist, params, log_c2_of(dist, params));
    return solve_xbar(sys, 0.5 * std::min(b.c0, b.c1), b.c2, tol);
}

GridPath power_phi(const GridPath& zhat, const TypeDistribution& dist, const MarketParams& params,
                   double xbar_T) {
    require_positive(xbar_T, "xbar_T");
    const HatSystem sys(zhat, dist, params, log_c2_of(dist, params));
    return {zhat.grid(), phi2_values(sys, zhat, params, xbar_T)};
}

PowerEquilibrium solve_power_mfe(const TypeDistribution& dist, const MarketParams& params,
                                 const TimeGrid& grid, const PowerSolverOptions& opt) {
    if (grid.horizon() != params.horizon) {
        throw GridMismatch("grid horizon differs from market.T");
    }
    if (!(opt.tol > 0.0)) throw ValidationError("solver.tol", "tolerance must be > 0");
    if (opt.max_iter < 1) throw ValidationError("solver.max_iter", "must be >= 1");
    if (!(opt.damping > 0.0 && opt.damping <= 1.0)) {
        throw ValidationError("solver.damping", "damping must lie in (0,1]");
    }
    const PowerBounds b = power_constants(dist, params, grid);
    const double log_c2 = log_c2_of(dist, params);
    const double lo = 0.5 * std::min(b.c0, b.c1);
    const double root_tol = 0.0;  // bisect to machine precision
    const double lam = opt.damping;
    const std::size_t n = grid.size();

    std::vector<double> z = opt.start == PowerStart::habit_floor
                                ? std::vector<double>(n, params.z0)
                                : std::vector<double>(b.m_path.values().begin(),
                                                      b.m_path.values().end());
    std::vector<double> history;
    double change = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
    for (int it = 1; it <= opt.max_iter; ++it) {
        const GridPath zhat(grid, z);
        const HatSystem sys(zhat, dist, params, log_c2);
        const double xbar = solve_xbar(sys, lo, b.c2, root_tol);
        const std::vector<double> phi = phi2_values(sys, zhat, params, xbar);
        change = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double next = (1.0 - lam) * z[j] + lam * phi[j];
            next = std::clamp(next, params.z0, b.m_path[j]);
            change = std::max(change, std::abs(next - z[j]));
            z[j] = next;
        }
        if (!std::isfinite(change)) throw NonConvergence("power outer iteration", it, change);
        history.push_back(change);
        iterations = it;
        if (change < opt.tol) {
            converged = true;
            break;
        }
    }
    if (!converged) throw NonConvergence("power outer iteration", opt.max_iter, change);

    const GridPath zhat(grid, z);
    const HatSystem sys(zhat, dist, params, log_c2);
    const double xbar = solve_xbar(sys, lo, b.c2, root_tol);

    // The root search relies on a decreasing right-hand side; spot-check it.
    {
        double prev = std::numeric_limits<double>::infinity();
        const int probes = 17;
        for (int i = 0; i < probes; ++i) {
            const double x = lo * std::pow(b.c2 / lo, static_cast<double>(i) / (probes - 1));
            const double r = sys.log_rhs(x);
            if (r > prev + 1e-12 * std::abs(prev)) {
                throw DomainError("terminal wealth equation right-hand side is not decreasing");
            }
            prev = r;
        }
    }

    std::vector<double> zb(n);
    for (std::size_t j = 0; j < n; ++j) zb[j] = std::exp(-params.delta * grid.node(j)) * z[j];
    PowerEquilibrium eq{GridPath(grid, zb), zhat, xbar, 0.0, iterations, 0.0, 0.0, history};

    // Audit on the original system using the un-hat formulas.
    std::vector<double> spend(n, 0.0);
    double mean_log = 0.0;
    for (std::size_t k = 0; k < dist.size(); ++k) {
        const auto& cls = dist.cls(k);
        const GridPath c = power_consumption_path(cls, params, eq.zbar, xbar);
        const GridPath f = power_mean_wealth_path(cls, params, eq.zbar, xbar);
        for (std::size_t j = 0; j < n; ++j) spend[j] += dist.weight(k) * c[j] * f[j];
        mean_log += dist.weight(k) * power_mean_log_wealth_path(cls, params, eq.zbar, xbar).back();
    }
    std::vector<double> integrand(n), cum(n);
    for (std::size_t j = 0; j < n; ++j) {
        integrand[j] = params.delta * std::exp(params.delta * grid.node(j)) * spend[j];
    }
    cumulative_trapezoid(integrand, grid.step(), cum);
    double habit_res = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double rhs = std::exp(-params.delta * grid.node(j)) * (params.z0 + cum[j]);
        habit_res = std::max(habit_res, std::abs(zb[j] - rhs));
    }
    eq.habit_residual = habit_res;
    eq.xbar_residual = std::abs(xbar - std::exp(mean_log));
    eq.residual = habit_res + eq.xbar_residual;
    if (!(eq.residual < 10.0 * opt.tol)) {
        throw NonConvergence("power equilibrium audit", iterations, eq.residual);
    }
    return eq;
}

}  // namespace habitmfg
