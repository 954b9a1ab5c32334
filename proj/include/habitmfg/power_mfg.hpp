#pragma once

#include <vector>

#include "habitmfg/core.hpp"

namespace habitmfg {

// Mean-field equilibrium of the power-utility game. zhat = e^{delta t} zbar.
struct PowerEquilibrium {
    GridPath zbar;
    GridPath zhat;
    double xbar_T = 0.0;
    double residual = 0.0;
    int iterations = 0;
    double habit_residual = 0.0;
    double xbar_residual = 0.0;
    std::vector<double> change_history;
};

// A-priori bounds of the hat system.
struct PowerBounds {
    double c0 = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
    double e_const = 0.0;
    GridPath m_path;              // M(t) = E K t + z0
    std::vector<double> beta_k;   // delta (1 + theta p - p) / (1 - p)
    std::vector<double> d_k;
};

// Per-class exponents that recur in every power-regime formula.
struct PowerClassConstants {
    double a;          // 1/2 (mu/sigma)^2 p / (1-p)^2
    double gamma;      // theta p / (p - 1), the habit exponent (<= 0)
    double kappa;      // theta p delta / (1 - p) = -delta gamma
    double beta;       // delta + kappa
    double growth;     // mu^2 / ((1-p) sigma^2), mean growth rate before consumption
    double log_drift;  // mu^2/(2 sigma^2) (1-2p)/(1-p)^2
    double tau;        // p theta_T / (1 - p), the terminal-benchmark exponent
    double pi_star;    // mu / ((1-p) sigma^2)
};

PowerClassConstants power_class_constants(const AgentClass& cls, const MarketParams& params);

// g(t_j) of the value function V = x^p g(t) / p.
double power_g(std::size_t node, const AgentClass& cls, const MarketParams& params,
               const GridPath& zbar, double xbar_T);

struct PowerStrategy {
    double pi_star = 0.0;  // fraction of wealth in the risky asset
    double c_star = 0.0;   // consumption as a fraction of wealth
};

PowerStrategy power_strategy(std::size_t node, const AgentClass& cls, const MarketParams& params,
                             const GridPath& zbar, double xbar_T);
// c*(t_j) for every node.
GridPath power_consumption_path(const AgentClass& cls, const MarketParams& params,
                                const GridPath& zbar, double xbar_T);

PowerBounds power_constants(const TypeDistribution& dist, const MarketParams& params,
                            const TimeGrid& grid);

// Hat-space Ghat_k(t_j) and fhat_k(t_j).
double power_hat_G(std::size_t node, const AgentClass& cls, const MarketParams& params,
                   const GridPath& zhat, double xbar_T);
GridPath power_hat_G_path(const AgentClass& cls, const MarketParams& params,
                          const GridPath& zhat, double xbar_T);
double power_hat_f(std::size_t node, const AgentClass& cls, const MarketParams& params,
                   const GridPath& zhat, double xbar_T);
GridPath power_hat_f_path(const AgentClass& cls, const MarketParams& params,
                          const GridPath& zhat, double xbar_T);

// Right-hand side of the Xbar_T equation for a fixed zhat:
// C2 exp(-sum_k F_k int_0^T e^{kappa_k t} zhat^{gamma_k} Ghat_k dt).
double power_xbar_rhs(const GridPath& zhat, const TypeDistribution& dist,
                      const MarketParams& params, double xbar_T);

// Unique root of Xbar = power_xbar_rhs(Xbar) by bisection. Throws BracketFailure.
double power_xbar_given_zhat(const GridPath& zhat, const TypeDistribution& dist,
                             const MarketParams& params, double tol = 1e-12);

// Phi_2(t_j) = z0 + int_0^{t_j} phi(s) ds.
GridPath power_phi(const GridPath& zhat, const TypeDistribution& dist, const MarketParams& params,
                   double xbar_T);

enum class PowerStart { habit_floor, upper_bound };

struct PowerSolverOptions {
    double tol = 1e-10;
    int max_iter = 10000;
    double damping = 0.5;
    PowerStart start = PowerStart::habit_floor;
};

PowerEquilibrium solve_power_mfe(const TypeDistribution& dist, const MarketParams& params,
                                 const TimeGrid& grid, const PowerSolverOptions& options = {});

// E[log X*_{t_j} | o = cls] and E[X*_{t_j} | o = cls].
double power_mean_log_wealth(std::size_t node, const AgentClass& cls, const MarketParams& params,
                             const GridPath& zbar, double xbar_T);
GridPath power_mean_log_wealth_path(const AgentClass& cls, const MarketParams& params,
                                    const GridPath& zbar, double xbar_T);
GridPath power_mean_wealth_path(const AgentClass& cls, const MarketParams& params,
                                const GridPath& zbar, double xbar_T);

}  // namespace habitmfg
