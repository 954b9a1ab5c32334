#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "habitmfg/core.hpp"
#include "habitmfg/exp_mfg.hpp"
#include "habitmfg/power_mfg.hpp"
#include "habitmfg/regression.hpp"
#include "habitmfg/rng.hpp"

namespace habitmfg {

struct ClassAssignment {
    std::vector<std::size_t> labels;      // alpha(i), sorted by class
    std::vector<double> empirical_weights;
    double epsilon_n = 0.0;

    std::size_t size() const noexcept { return labels.size(); }
};

// Largest-remainder rounding of n F; leftover agents go to the largest
// fractional parts, ties to the lower class index.
ClassAssignment assign_classes(int n, const TypeDistribution& dist);

// Perturbation of the candidate: investment scaled by `investment_multiplier`,
// consumption shifted by `consumption_tilt`. In the exponential regime the tilt
// is additive in units of |C*_k(0, x0)|; in the power regime the consumption
// fraction becomes (1 + tilt) c*.
struct Deviation {
    double investment_multiplier = 1.0;
    double consumption_tilt = 0.0;

    bool is_candidate() const noexcept {
        return investment_multiplier == 1.0 && consumption_tilt == 0.0;
    }
};

// Multipliers {0.5, 0.8, 1, 1.25, 2} x tilts {-0.2, -0.1, 0, 0.1, 0.2}.
std::vector<Deviation> default_deviation_family();

// The candidate strategies of one equilibrium, tabulated per class on the
// equilibrium grid.
class CandidateModel {
public:
    CandidateModel(const TypeDistribution& dist, const MarketParams& params,
                   const ExpEquilibrium& eq);
    CandidateModel(const TypeDistribution& dist, const MarketParams& params,
                   const PowerEquilibrium& eq);

    Regime regime() const noexcept { return regime_; }
    const TypeDistribution& distribution() const noexcept { return dist_; }
    const MarketParams& params() const noexcept { return params_; }
    const TimeGrid& grid() const noexcept { return zbar_.grid(); }
    const GridPath& zbar() const noexcept { return zbar_; }
    double xbar_T() const noexcept { return xbar_T_; }

    // One agent's wealth and spending rate (C in the exponential regime, c X in
    // the power regime) on the grid, driven by `normals` (n_steps draws).
    void agent_path(std::size_t cls, std::span<const double> normals, const Deviation& dev,
                    std::span<double> wealth, std::span<double> spending) const;

    // Utility functional of one realised path against the benchmark
    // (zbench, xbench). Throws DomainError on a nonpositive power-utility argument.
    double path_objective(std::size_t cls, std::span<const double> wealth,
                          std::span<const double> spending, std::span<const double> zbench,
                          double xbench) const;

    // E[J] of one agent against a deterministic benchmark. Wealth is Gaussian
    // (exp) or log-normal (power) under any family member, so the expectation is
    // exact apart from the trapezoid in time.
    double expected_objective(std::size_t cls, const Deviation& dev,
                              std::span<const double> zbench, double xbench) const;

    // Deterministic per-class mean of the cohort terminal-wealth statistic
    // (wealth for exp, log wealth for power) under the candidate.
    double class_terminal_mean(std::size_t cls) const;

private:
    struct ClassPlan {
        std::vector<double> base;   // f(t_j) for exp; drift part of log X for power
        std::vector<double> aux;    // C* offset for exp; cumulative consumption for power
        std::vector<double> rate;   // 1/(T+1-t_j) for exp; c*(t_j) for power
        double noise = 0.0;         // exp: beta mu/sigma; power: pi* sigma
        double excess = 0.0;        // exp: beta mu^2/sigma^2; power: pi* mu
        double tilt_unit = 1.0;
    };

    Regime regime_;
    TypeDistribution dist_;
    MarketParams params_;
    GridPath zbar_;
    double xbar_T_;
    std::vector<ClassPlan> plans_;
    std::vector<double> remaining_;  // T+1-t_j
    std::vector<double> log_remaining_ratio_;  // log((T+1)/(T+1-t_j))
};

struct CohortSample {
    GridPath zbar_n;
    double xbar_n_T = 0.0;
    // Per-agent paths, filled only when requested.
    std::vector<std::vector<double>> wealth;
    std::vector<std::vector<double>> spending;
};

CohortSample simulate_cohort(const CandidateModel& model, const ClassAssignment& assignment,
                             const IncrementSource& increments, bool record_agents = false);

CohortSample simulate_exp_cohort(const ClassAssignment& assignment, const TypeDistribution& dist,
                                 const ExpEquilibrium& eq, const MarketParams& params,
                                 std::uint64_t seed, std::uint64_t replication,
                                 bool record_agents = false);
CohortSample simulate_power_cohort(const ClassAssignment& assignment,
                                   const TypeDistribution& dist, const PowerEquilibrium& eq,
                                   const MarketParams& params, std::uint64_t seed,
                                   std::uint64_t replication, bool record_agents = false);

// Z_t = e^{-delta t}(z0 + int_0^t delta e^{delta s} spending_s ds) by trapezoid.
std::vector<double> habit_from_spending(std::span<const double> spending, const TimeGrid& grid,
                                        const MarketParams& params);

struct ObjectiveEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    int samples = 0;
    int domain_errors = 0;
};

// Monte Carlo value of J for one agent of class `cls` playing `dev` against a
// fixed benchmark. Replication r uses stream (seed, r, 0).
ObjectiveEstimate estimate_objective(const CandidateModel& model, std::size_t cls,
                                     const Deviation& dev, const GridPath& zbench, double xbench,
                                     int replications, std::uint64_t seed);

struct NashProbeResult {
    int n = 0;
    std::vector<Deviation> family;
    // J(dev, emp) - J(cand, emp). `gain` uses the exact mean-field gain as a
    // control variate: gain_mf + mean of the per-path benchmark corrections.
    std::vector<double> gain;
    std::vector<double> gain_stderr;
    std::vector<double> gain_raw;      // plain common-random-number average
    std::vector<double> gain_raw_stderr;
    std::vector<double> gain_mf;       // exact, against the frozen mean-field benchmark
    double max_gain = 0.0;             // max(0, max_d gain)
    double max_gain_unclipped = 0.0;         // max_d gain over non-candidate deviations
    // |J(cand; MF) - J(cand; empirical)|, replication-averaged signed difference.
    double objective_gap = 0.0;
    // max_d |J(dev; emp) - J(dev; MF)| + |J(cand; MF) - J(cand; emp)|, an upper
    // bound on every gain because the candidate is optimal against MF.
    double decomposition_bound = 0.0;
    int domain_errors = 0;
};

// Agent 0 deviates, everyone else plays the candidate; common random numbers
// across the family. `threads` = 0 picks the hardware concurrency.
NashProbeResult nash_gap_probe(const CandidateModel& model, int n,
                               const std::vector<Deviation>& family, int replications,
                               std::uint64_t seed, unsigned threads = 0);

struct SimReport {
    Regime regime = Regime::exponential;
    std::vector<int> n_values;
    std::vector<double> epsilon_n;
    std::vector<double> sup_z_mse;
    std::vector<double> x_mse;
    std::vector<double> x_gamma_mse;   // power regime only
    // replication mean of |J(cand; MF) - J(cand; empirical)| along agent 0's path
    std::vector<double> gap_estimates;
    LogLogFit z_fit;
    LogLogFit x_fit;
    LogLogFit x_gamma_fit;
    double slope = 0.0;         // z_fit.slope
    double slope_stderr = 0.0;  // z_fit.slope_stderr
    int replications = 0;
    std::uint64_t seed = 0;
};

SimReport convergence_study(const CandidateModel& model, const std::vector<int>& n_values,
                            int replications, std::uint64_t seed, unsigned threads = 0);

// Runs `body(r)` for r in [0, count) on up to `threads` workers.
void parallel_for(int count, unsigned threads, const std::function<void(int)>& body);

}  // namespace habitmfg
