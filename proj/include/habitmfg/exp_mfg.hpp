#pragma once

#include <vector>

#include "habitmfg/core.hpp"

namespace habitmfg {

// Mean-field equilibrium of the exponential-utility game: the mean habit path
// and mean terminal wealth that reproduce themselves under the optimal
// feedback strategy.
struct ExpEquilibrium {
    GridPath zbar;
    double xbar_T = 0.0;
    double residual = 0.0;
    int iterations = 0;
    // Diagnostics from the final audit.
    double phi_residual = 0.0;
    double xbar_residual = 0.0;
    std::vector<double> change_history;
};

// Value function V(t,x) = -exp(a(t) x + b(t)).
struct ExpValueCoeffs {
    double a = 0.0;
    double b = 0.0;
};

struct ExpStrategy {
    double pi_star = 0.0;  // money amount in the risky asset
    double c_star = 0.0;   // consumption rate
};

// Node-wise integrals of one habit path that every exponential-regime formula
// is assembled from.
class ExpPathIntegrals {
public:
    explicit ExpPathIntegrals(const GridPath& zbar);

    const GridPath& zbar() const noexcept { return zbar_; }
    const GridPath& tail() const noexcept { return tail_; }
    // integral over [0, t_j] of I(s) / (T+1-s)^2
    double tail_over_sq(std::size_t j) const { return tail_over_sq_[j]; }
    // integral over [0, t_j] of Zbar_s / (T+1-s)
    double z_over_remaining(std::size_t j) const { return z_over_remaining_[j]; }
    // integral over [0, T] of ( I(s)/(T+1-s)^2 - Zbar_s/(T+1-s) )
    double coupling() const;

private:
    GridPath zbar_;
    GridPath tail_;
    std::vector<double> tail_over_sq_;
    std::vector<double> z_over_remaining_;
};

ExpValueCoeffs exp_value_coeffs(double t, const AgentClass& cls, const MarketParams& params,
                                const GridPath& zbar, double xbar_T);

// Optimal feedback at (t, x). Pi* does not depend on x or the benchmarks.
ExpStrategy exp_strategy(double t, double x, const AgentClass& cls, const MarketParams& params,
                         const GridPath& zbar, double xbar_T);

// E[C*(t_j, X*_{t_j})] over the type law.
double exp_mean_consumption(std::size_t node, const TypeDistribution& dist,
                            const MarketParams& params, const GridPath& zbar, double xbar_T);
GridPath exp_mean_consumption_path(const TypeDistribution& dist, const MarketParams& params,
                                   const GridPath& zbar, double xbar_T);

// Right-hand side G(t, Zbar) of the decoupled habit ODE.
double exp_G(std::size_t node, const GridPath& zbar, const TypeDistribution& dist,
             const MarketParams& params);
GridPath exp_G_path(const GridPath& zbar, const TypeDistribution& dist,
                    const MarketParams& params);

// Mean terminal wealth implied by a habit path through the consistency
// condition on Xbar_T.
double exp_decoupled_xbar(const GridPath& zbar, const TypeDistribution& dist,
                          const MarketParams& params);

// Phi(t_j, Z) = z0 + int_0^{t_j} [(-delta + delta E[theta]) Z_s + delta G(s, Z)] ds.
GridPath exp_phi(const GridPath& zbar, const TypeDistribution& dist, const MarketParams& params);

// E[X*_{t_j} | o = cls] under the optimal strategy.
double exp_mean_wealth(std::size_t node, const AgentClass& cls, const MarketParams& params,
                       const GridPath& zbar, double xbar_T);
GridPath exp_mean_wealth_path(const AgentClass& cls, const MarketParams& params,
                              const GridPath& zbar, double xbar_T);

// Picard iteration Z^{k+1} = Phi(Z^k) from Z^0 = z0. Throws NonConvergence.
ExpEquilibrium solve_exp_mfe(const TypeDistribution& dist, const MarketParams& params,
                             const TimeGrid& grid, double tol = 1e-11, int max_iter = 500);

// Per-class schedule of the candidate strategy on the grid:
// Pi*(t_j), and the wealth-independent part of C*(t_j, x) = x/(T+1-t_j) + offset_j.
struct ExpClassSchedule {
    std::vector<double> pi_star;
    std::vector<double> consumption_offset;
    std::vector<double> mean_wealth;
};

ExpClassSchedule exp_class_schedule(const AgentClass& cls, const MarketParams& params,
                                    const GridPath& zbar, double xbar_T);

}  // namespace habitmfg
