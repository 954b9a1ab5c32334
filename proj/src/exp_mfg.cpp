#include "habitmfg/exp_mfg.hpp"

#include <cmath>
#include <limits>

namespace habitmfg {

namespace {

double kappa(const AgentClass& c) { return c.risk * c.sharpe_sq(); }

struct Moments {
    double theta;
    double theta_T;
    double kappa;
};

Moments moments(const TypeDistribution& dist) {
    return {dist.expect([](const AgentClass& c) { return c.theta; }),
            dist.expect([](const AgentClass& c) { return c.theta_terminal(); }),
            dist.expect([](const AgentClass& c) { return kappa(c); })};
}

double denominator(const Moments& m, double T) {
    const double d = (1.0 - m.theta_T) * T + 1.0;
    if (!(d > 0.0)) throw DomainError("(1 - E[theta_T]) T + 1 must be positive");
    return d;
}

}  // namespace

ExpPathIntegrals::ExpPathIntegrals(const GridPath& zbar)
    : zbar_(zbar), tail_(cumulative_tail_integral(zbar)) {
    // Both integrals are taken exactly for the piecewise-linear interpolant of
    // Zbar, so a constant habit reproduces the closed forms to rounding.
    // In w = T+1-s a cell has Zbar = alpha + slope w and
    // I = c + alpha w + slope/2 w^2.
    const TimeGrid& g = zbar.grid();
    const double T = g.horizon();
    const std::size_t n = g.size();
    tail_over_sq_.assign(n, 0.0);
    z_over_remaining_.assign(n, 0.0);
    for (std::size_t j = 0; j + 1 < n; ++j) {
        const double w0 = T + 1.0 - g.node(j);
        const double w1 = T + 1.0 - g.node(j + 1);
        const double dw = w0 - w1;
        const double m = (zbar[j + 1] - zbar[j]) / dw;
        const double slope = -m;
        const double alpha = zbar[j] + m * w0;
        const double c = tail_[j + 1] - alpha * w1 - 0.5 * slope * w1 * w1;
        const double log_ratio = std::log1p(dw / w1);
        z_over_remaining_[j + 1] = z_over_remaining_[j] + alpha * log_ratio + slope * dw;
        tail_over_sq_[j + 1] = tail_over_sq_[j] + c * dw / (w0 * w1) + alpha * log_ratio +
                               0.5 * slope * dw;
    }
}

double ExpPathIntegrals::coupling() const {
    return tail_over_sq_.back() - z_over_remaining_.back();
}

ExpValueCoeffs exp_value_coeffs(double t, const AgentClass& cls, const MarketParams& params,
                                const GridPath& zbar, double xbar_T) {
    const double T = params.horizon;
    const double u = T + 1.0 - t;
    const double beta = cls.risk;
    const GridPath tail = cumulative_tail_integral(zbar);
    const double I = tail_integral_at(zbar, tail, t);
    ExpValueCoeffs v;
    v.a = -1.0 / (beta * u);
    v.b = cls.theta_terminal() * xbar_T / (beta * u) + cls.theta * I / (beta * u) + std::log(u) -
          0.25 * cls.sharpe_sq() * (u - 1.0 / u);
    return v;
}

ExpStrategy exp_strategy(double t, double x, const AgentClass& cls, const MarketParams& params,
                         const GridPath& zbar, double xbar_T) {
    const double T = params.horizon;
    const double u = T + 1.0 - t;
    const GridPath tail = cumulative_tail_integral(zbar);
    const double I = tail_integral_at(zbar, tail, t);
    ExpStrategy s;
    s.pi_star = cls.risk * cls.mu / (cls.sigma * cls.sigma) * u;
    s.c_star = (x - cls.theta_terminal() * xbar_T) / u + cls.theta * zbar.at(t) -
               cls.theta * I / u + 0.25 * kappa(cls) * (u - 1.0 / u);
    return s;
}

GridPath exp_mean_consumption_path(const TypeDistribution& dist, const MarketParams& params,
                                   const GridPath& zbar, double xbar_T) {
    const ExpPathIntegrals in(zbar);
    const Moments m = moments(dist);
    const TimeGrid& g = zbar.grid();
    const double T = params.horizon;
    std::vector<double> out(g.size());
    for (std::size_t j = 0; j < out.size(); ++j) {
        const double t = g.node(j);
        const double u = T + 1.0 - t;
        out[j] = (params.x0 - m.theta_T * xbar_T) / (T + 1.0) + m.theta * zbar[j] +
                 m.theta * (in.tail_over_sq(j) - in.z_over_remaining(j)) -
                 m.theta * in.tail()[j] / u + 0.25 * m.kappa * (T + 1.0 + 2.0 * t - 1.0 / (T + 1.0));
    }
    return {g, std::move(out)};
}

double exp_mean_consumption(std::size_t node, const TypeDistribution& dist,
                            const MarketParams& params, const GridPath& zbar, double xbar_T) {
    return exp_mean_consumption_path(dist, params, zbar, xbar_T)[node];
}

namespace {

GridPath g_path(const ExpPathIntegrals& in, const Moments& m, const MarketParams& params) {
    const TimeGrid& g = in.zbar().grid();
    const double T = params.horizon;
    const double D = denominator(m, T);
    const double A = in.coupling();
    const double base = params.x0 / (T + 1.0) * (1.0 - m.theta_T / D) -
                        m.theta * m.theta_T * A / D -
                        0.25 * m.theta_T / (T + 1.0) * m.kappa * (3.0 * T * T + 4.0 * T) / D;
    std::vector<double> out(g.size());
    for (std::size_t j = 0; j < out.size(); ++j) {
        const double t = g.node(j);
        const double u = T + 1.0 - t;
        out[j] = base + m.theta * (in.tail_over_sq(j) - in.z_over_remaining(j)) -
                 m.theta * in.tail()[j] / u +
                 0.25 * m.kappa * (T + 1.0 + 2.0 * t - 1.0 / (T + 1.0));
    }
    return {g, std::move(out)};
}

double decoupled_xbar(const ExpPathIntegrals& in, const Moments& m, const MarketParams& params) {
    const double T = params.horizon;
    return (params.x0 + 0.25 * m.kappa * (3.0 * T * T + 4.0 * T) +
            m.theta * (T + 1.0) * in.coupling()) /
           denominator(m, T);
}

std::vector<double> phi_values(const GridPath& zbar, const TypeDistribution& dist,
                               const MarketParams& params) {
    const ExpPathIntegrals in(zbar);
    const Moments m = moments(dist);
    const GridPath G = g_path(in, m, params);
    const double d = params.delta;
    std::vector<double> integrand(zbar.size()), out(zbar.size());
    for (std::size_t j = 0; j < zbar.size(); ++j) {
        integrand[j] = (-d + d * m.theta) * zbar[j] + d * G[j];
    }
    cumulative_trapezoid(integrand, zbar.grid().step(), out);
    for (double& v : out) v += params.z0;
    return out;
}

}  // namespace

GridPath exp_G_path(const GridPath& zbar, const TypeDistribution& dist,
                    const MarketParams& params) {
    return g_path(ExpPathIntegrals(zbar), moments(dist), params);
}

double exp_G(std::size_t node, const GridPath& zbar, const TypeDistribution& dist,
             const MarketParams& params) {
    return exp_G_path(zbar, dist, params)[node];
}

double exp_decoupled_xbar(const GridPath& zbar, const TypeDistribution& dist,
                          const MarketParams& params) {
    return decoupled_xbar(ExpPathIntegrals(zbar), moments(dist), params);
}

GridPath exp_phi(const GridPath& zbar, const TypeDistribution& dist, const MarketParams& params) {
    return {zbar.grid(), phi_values(zbar, dist, params)};
}

namespace {

std::vector<double> mean_wealth_values(const ExpPathIntegrals& in, const AgentClass& cls,
                                       const MarketParams& params, double xbar_T) {
    const TimeGrid& g = in.zbar().grid();
    const double T = params.horizon;
    const double k = kappa(cls);
    std::vector<double> out(g.size());
    for (std::size_t j = 0; j < out.size(); ++j) {
        const double t = g.node(j);
        const double u = T + 1.0 - t;
        out[j] = params.x0 * u / (T + 1.0) +
                 u * (cls.theta * (in.tail_over_sq(j) - in.z_over_remaining(j)) +
                      (cls.theta_terminal() * xbar_T + 0.25 * k) * (1.0 / u - 1.0 / (T + 1.0)) +
                      0.75 * k * t);
    }
    return out;
}

}  // namespace

GridPath exp_mean_wealth_path(const AgentClass& cls, const MarketParams& params,
                              const GridPath& zbar, double xbar_T) {
    return {zbar.grid(), mean_wealth_values(ExpPathIntegrals(zbar), cls, params, xbar_T)};
}

double exp_mean_wealth(std::size_t node, const AgentClass& cls, const MarketParams& params,
                       const GridPath& zbar, double xbar_T) {
    return exp_mean_wealth_path(cls, params, zbar, xbar_T)[node];
}

ExpEquilibrium solve_exp_mfe(const TypeDistribution& dist, const MarketParams& params,
                             const TimeGrid& grid, double tol, int max_iter) {
    params.validate(Regime::exponential);
    dist.validate(Regime::exponential);
    if (grid.horizon() != params.horizon) {
        throw GridMismatch("grid horizon differs from market.T");
    }
    if (!(tol > 0.0)) throw ValidationError("solver.tol", "tolerance must be > 0");
    if (max_iter < 1) throw ValidationError("solver.max_iter", "must be >= 1");

    GridPath z(grid, params.z0);
    ExpEquilibrium eq{z, 0.0, 0.0, 0, 0.0, 0.0, {}};
    bool converged = false;
    double change = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= max_iter; ++it) {
        std::vector<double> next = phi_values(z, dist, params);
        change = 0.0;
        for (std::size_t j = 0; j < next.size(); ++j) {
            const double d = std::abs(next[j] - z[j]);
            if (!std::isfinite(d)) throw NonConvergence("exponential Picard iteration", it, d);
            change = std::max(change, d);
        }
        eq.change_history.push_back(change);
        z = GridPath(grid, std::move(next));
        eq.iterations = it;
        if (change < tol) {
            converged = true;
            break;
        }
    }
    if (!converged) throw NonConvergence("exponential Picard iteration", max_iter, change);

    const ExpPathIntegrals in(z);
    const Moments m = moments(dist);
    eq.zbar = z;
    eq.xbar_T = decoupled_xbar(in, m, params);

    const std::vector<double> phi = phi_values(z, dist, params);
    double phi_res = 0.0;
    for (std::size_t j = 0; j < phi.size(); ++j) phi_res = std::max(phi_res, std::abs(phi[j] - z[j]));
    double mean_terminal = 0.0;
    for (std::size_t k = 0; k < dist.size(); ++k) {
        mean_terminal +=
            dist.weight(k) * mean_wealth_values(in, dist.cls(k), params, eq.xbar_T).back();
    }
    eq.phi_residual = phi_res;
    eq.xbar_residual = std::abs(eq.xbar_T - mean_terminal);
    eq.residual = phi_res + eq.xbar_residual;
    if (!(eq.residual < 10.0 * tol)) {
        throw NonConvergence("exponential equilibrium audit", eq.iterations, eq.residual);
    }
    return eq;
}

ExpClassSchedule exp_class_schedule(const AgentClass& cls, const MarketParams& params,
                                    const GridPath& zbar, double xbar_T) {
    const ExpPathIntegrals in(zbar);
    const TimeGrid& g = zbar.grid();
    const double T = params.horizon;
    const double k = kappa(cls);
    ExpClassSchedule s;
    s.pi_star.resize(g.size());
    s.consumption_offset.resize(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) {
        const double u = T + 1.0 - g.node(j);
        s.pi_star[j] = cls.risk * cls.mu / (cls.sigma * cls.sigma) * u;
        s.consumption_offset[j] = -cls.theta_terminal() * xbar_T / u + cls.theta * zbar[j] -
                                  cls.theta * in.tail()[j] / u + 0.25 * k * (u - 1.0 / u);
    }
    s.mean_wealth = mean_wealth_values(in, cls, params, xbar_T);
    return s;
}

}  // namespace habitmfg
